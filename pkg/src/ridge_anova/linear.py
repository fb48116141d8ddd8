"""Asymptotic risk of a two-layer linear network with an orthogonal first layer.

The first layer ``W`` (p x d, ``W W^T = I``) is fixed at a Haar-random draw and
only the second layer is fit by ridge regression.  Randomness in the fitted
predictor comes from three sources: the training samples ``s``, the label
noise ``l`` and the initialization ``i``.  This module gives the limiting
ANOVA components of the predictor variance, the bias/variance/MSE split,
ordered (sequential) decompositions, and the behaviour at the optimal penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import permutations

from .rmt import DomainError, adjusted_penalty, theta1, theta2

__all__ = [
    "SOURCES",
    "ModelParams",
    "VarianceComponents",
    "RiskDecomposition",
    "OrderedDecomposition",
    "variance_components",
    "risk_decomposition",
    "ordered_decomposition",
    "all_ordered_decompositions",
    "optimal_lambda",
    "risk_at_optimum",
    "added_noise_delta",
    "one_layer_risk",
    "check_monotonicity",
]

SOURCES = ("s", "l", "i")


@dataclass(frozen=True)
class ModelParams:
    """Regime parameters.

    ``alpha2`` is the signal strength, ``sigma2`` the label-noise variance,
    ``pi = p/d`` the parametrization level, ``delta = d/n`` the aspect ratio
    and ``lam`` the ridge penalty (``None`` when only the optimum is wanted).
    """

    alpha2: float = 1.0
    sigma2: float = 0.0
    pi: float = 1.0
    delta: float = 1.0
    lam: float | None = None

    def __post_init__(self) -> None:
        if not (self.alpha2 > 0 and math.isfinite(self.alpha2)):
            raise DomainError(f"alpha2 must be positive, got {self.alpha2!r}")
        if not (self.sigma2 >= 0 and math.isfinite(self.sigma2)):
            raise DomainError(f"sigma2 must be non-negative, got {self.sigma2!r}")
        if not (0 < self.pi <= 1):
            raise DomainError(f"pi must lie in (0,1], got {self.pi!r}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise DomainError(f"delta must be positive, got {self.delta!r}")
        if self.lam is not None and not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be non-negative, got {self.lam!r}")

    @property
    def gamma(self) -> float:
        return self.pi * self.delta

    @property
    def alpha(self) -> float:
        return math.sqrt(self.alpha2)

    def with_lambda(self, lam: float | None) -> "ModelParams":
        return replace(self, lam=lam)

    def require_lambda(self) -> float:
        if self.lam is None or self.lam <= 0:
            raise DomainError(f"lambda must be positive for this formula, got {self.lam!r}")
        return self.lam


@dataclass(frozen=True)
class VarianceComponents:
    v_s: float
    v_l: float
    v_i: float
    v_sl: float
    v_si: float
    v_li: float
    v_sli: float

    def as_dict(self) -> dict[str, float]:
        return {
            "v_s": self.v_s,
            "v_l": self.v_l,
            "v_i": self.v_i,
            "v_sl": self.v_sl,
            "v_si": self.v_si,
            "v_li": self.v_li,
            "v_sli": self.v_sli,
        }

    @property
    def total(self) -> float:
        return math.fsum(self.as_dict().values())

    def term(self, sources: str) -> float:
        """Component indexed by a set of sources, e.g. ``"is"`` -> ``v_si``."""
        key = "v_" + "".join(s for s in SOURCES if s in sources)
        return getattr(self, key)


@dataclass(frozen=True)
class RiskDecomposition:
    bias2: float
    variance: float
    sigma_label: float
    sigma_sample: float
    sigma_init: float
    noise_floor: float
    lam: float | None = None

    @property
    def mse(self) -> float:
        """Test risk; includes ``noise_floor`` (the test label noise, or 0)."""
        return self.bias2 + self.variance + self.noise_floor

    @property
    def excess_mse(self) -> float:
        return self.bias2 + self.variance

    def as_dict(self) -> dict[str, float]:
        return {
            "mse": self.mse,
            "bias2": self.bias2,
            "variance": self.variance,
            "sigma_label": self.sigma_label,
            "sigma_sample": self.sigma_sample,
            "sigma_init": self.sigma_init,
        }


@dataclass(frozen=True)
class OrderedDecomposition:
    order: tuple[str, str, str]
    term_a: float
    term_b: float
    term_c: float

    @property
    def total(self) -> float:
        return self.term_a + self.term_b + self.term_c


def _moments(params: ModelParams):
    lam = params.require_lambda()
    t1, t2 = theta1(params.gamma, lam), theta2(params.gamma, lam)
    adj = adjusted_penalty(params.pi, params.delta, lam)
    return lam, t1, t2, adj.lambda_tilde, adj.theta1_tilde, adj.theta2_tilde


def variance_components(params: ModelParams) -> VarianceComponents:
    """Limits of the seven ANOVA components of the predictor variance."""
    lam, t1, t2, lt, tt1, tt2 = _moments(params)
    a2, s2, pi, delta = params.alpha2, params.sigma2, params.pi, params.delta
    shrink = (1 - lam * t1) ** 2
    # Quantities evaluated at the adjusted penalty on aspect ratio delta.
    proj_quad = 1 - 2 * lt * tt1 + lt * lt * tt2
    proj_lin = tt1 - lt * tt2
    lin = t1 - lam * t2

    v_s = a2 * (proj_quad - pi * pi * shrink)
    v_i = a2 * pi * (1 - pi) * shrink
    v_sl = s2 * delta * proj_lin
    v_si = a2 * (
        pi * (1 - 2 * lam * t1 + lam * lam * t2 + (1 - pi) * delta * lin)
        - pi * (1 - pi) * shrink
        - proj_quad
    )
    v_sli = s2 * delta * (pi * lin - proj_lin)
    return VarianceComponents(v_s, 0.0, v_i, v_sl, v_si, 0.0, v_sli)


def risk_decomposition(params: ModelParams, *, include_noise: bool = True) -> RiskDecomposition:
    """Bias, variance and the label -> sample -> init ordered split at ``params.lam``.

    With ``include_noise=False`` the test label noise is left out of ``mse``.
    """
    lam = params.require_lambda()
    a2, s2, pi, delta = params.alpha2, params.sigma2, params.pi, params.delta
    t1, t2 = theta1(params.gamma, lam), theta2(params.gamma, lam)
    lin = t1 - lam * t2

    bias2 = a2 * (1 - pi + lam * pi * t1) ** 2
    variance = (
        a2 * pi * (
            1 - pi
            + (pi - 1) * (2 * lam - delta) * t1
            - pi * lam * lam * t1 * t1
            + lam * (lam - delta + pi * delta) * t2
        )
        + s2 * pi * delta * lin
    )
    sigma_label = s2 * pi * delta * lin
    sigma_sample = a2 * pi * (-lam * lam * t1 * t1 + lam * lam * t2 + (1 - pi) * delta * lin)
    sigma_init = a2 * pi * (1 - pi) * (1 - lam * t1) ** 2
    return RiskDecomposition(
        bias2, variance, sigma_label, sigma_sample, sigma_init,
        s2 if include_noise else 0.0, lam,
    )


def _parse_order(order) -> tuple[str, str, str]:
    seq = tuple(order) if not isinstance(order, str) else tuple(order.replace(",", ""))
    if sorted(seq) != sorted(SOURCES):
        raise ValueError(f"order must be a permutation of s, l, i; got {order!r}")
    return seq  # type: ignore[return-value]


def ordered_decomposition(params: ModelParams, order) -> OrderedDecomposition:
    """Sequential variance attribution for the source order ``a, b, c``.

    The first source collects every component it touches, the second collects
    the remaining ones it touches, the last keeps its main effect only.
    """
    a, b, c = _parse_order(order)
    vc = variance_components(params)
    term_a = vc.term(a) + vc.term(a + b) + vc.term(a + c) + vc.term(a + b + c)
    term_b = vc.term(b) + vc.term(b + c)
    return OrderedDecomposition((a, b, c), term_a, term_b, vc.term(c))


def all_ordered_decompositions(params: ModelParams) -> list[OrderedDecomposition]:
    return [ordered_decomposition(params, p) for p in permutations(SOURCES)]


def optimal_lambda(params: ModelParams) -> float:
    """Penalty minimizing the limiting MSE; ``params.lam`` is ignored."""
    if params.pi == 1 and params.sigma2 == 0:
        raise DomainError("optimal lambda is 0 (degenerate) when pi = 1 and sigma = 0")
    return params.delta * (1 - params.pi + params.sigma2 / params.alpha2)


def _optimum_sqrt(params: ModelParams) -> float:
    """``sqrt(c^2 - 4 gamma)`` with ``c = delta (1 + snr) + 1``, free of cancellation."""
    delta, snr = params.delta, params.sigma2 / params.alpha2
    # c^2 - 4 gamma == (c - 2)^2 + 4 delta (1 - pi + snr), both terms non-negative
    return math.sqrt((delta * (1 + snr) - 1) ** 2 + 4 * delta * (1 - params.pi + snr))


def _optimum_root(params: ModelParams) -> tuple[float, float]:
    """Return ``(b, sqrt(c^2 - 4 gamma))`` where ``Bias = alpha * b`` at the optimum."""
    delta, snr = params.delta, params.sigma2 / params.alpha2
    root = _optimum_sqrt(params)
    offset = 1 - delta * (1 - snr)
    if offset <= 0:
        b = (root - offset) / (2 * delta)
    else:
        # root**2 - offset**2 == 4*delta*(1 - pi + delta*snr)
        b = 2 * (1 - params.pi + delta * snr) / (root + offset)
    return b, root


def risk_at_optimum(params: ModelParams, *, include_noise: bool = True) -> RiskDecomposition:
    """Closed-form risk at ``optimal_lambda``.

    Bias and MSE use the explicit optimum expressions and the variance uses
    its own closed form, so agreement with ``risk_decomposition`` at the same
    penalty is a genuine cross-check.  The ordered split is evaluated from the
    resolvent moments.
    """
    lam = optimal_lambda(params)
    a2, s2, pi, delta = params.alpha2, params.sigma2, params.pi, params.delta
    b, root = _optimum_root(params)
    bias2 = a2 * b * b
    snr = s2 / a2
    m = 1 - delta * (2 * pi - 1 - snr)
    if m <= 0:
        scaled = (root - m) / (2 * delta * delta)
    else:
        # root**2 - m**2 == 4 pi delta^2 (1 - pi + snr)
        scaled = 2 * pi * (1 - pi + snr) / (root + m)
    variance = -s2 * pi + (a2 + s2 * delta) * scaled
    ordered = risk_decomposition(params.with_lambda(lam))
    return RiskDecomposition(
        bias2, variance, ordered.sigma_label, ordered.sigma_sample, ordered.sigma_init,
        s2 if include_noise else 0.0, lam,
    )


def added_noise_delta(params: ModelParams) -> float:
    """Extra training-label noise making a one-layer model match at the optimum.

    A plain ridge model (``pi = 1``) trained with noise ``sigma2 + delta_noise``
    has the same optimal excess risk as the projected model.
    """
    gamma = params.gamma
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    c = params.delta * (1 + params.sigma2 / params.alpha2) + 1
    return params.alpha2 * (1 - params.pi) * (c + _optimum_sqrt(params)) / (2 * gamma)


def one_layer_risk(alpha2: float, gamma: float, *, sigma2: float = 1.0) -> RiskDecomposition:
    """Ridge regression without a projection, at its optimal penalty.

    The optimal penalty is ``gamma * sigma2 / alpha2``; the default unit noise
    gives the classical ``gamma / alpha2`` normalization.  ``mse`` excludes
    the test noise floor.  Ordered terms are not defined here and are NaN.
    """
    if not (gamma > 0 and math.isfinite(gamma)):
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    if not alpha2 > 0:
        raise DomainError(f"alpha2 must be positive, got {alpha2!r}")
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2!r}")
    lam = gamma * sigma2 / alpha2
    t1, t2 = theta1(gamma, lam), theta2(gamma, lam)
    bias2 = alpha2 * lam * lam * t2
    variance = sigma2 * gamma * (t1 - lam * t2)
    nan = float("nan")
    return RiskDecomposition(bias2, variance, nan, nan, nan, 0.0, lam)


def check_monotonicity(quantity: str, axis: str, params: ModelParams, grid: int = 64):
    """Classify the shape of an optimal-penalty risk quantity along ``pi`` or ``delta``.

    ``params`` fixes the other coordinates; the swept coordinate is ignored.
    Returns a :class:`ridge_anova.shapes.ShapeReport`.
    """
    from .shapes import linear_shape_report

    return linear_shape_report(quantity, axis, params, grid)

