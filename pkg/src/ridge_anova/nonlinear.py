"""Risk of the two-layer network with an elementwise activation after the projection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_hermitenorm, roots_legendre

from .linear import ModelParams
from .rmt import ConvergenceError, DomainError, theta1, theta2

__all__ = [
    "ActivationSpec",
    "NonlinearRisk",
    "activation_moments",
    "gaussian_expectation",
    "optimal_lambda_nl",
    "nonlinear_risk",
    "check_monotonicity_nl",
]

_START_NODES = 200
_MAX_NODES = 12800
_QUAD_TOL = 1e-10
_TAIL = 12.0  # standard normal mass beyond this is below 1e-32


@lru_cache(maxsize=None)
def _hermite_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_hermitenorm(n)
    return x, w / math.sqrt(2 * math.pi)


@lru_cache(maxsize=None)
def _legendre_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    return roots_legendre(n)


def _rule(n: int, breakpoints: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for E[f(Z)], Z ~ N(0,1).

    Smooth integrands use Gauss-Hermite.  With breakpoints the line is cut
    there and each piece of [-_TAIL, _TAIL] gets a Gauss-Legendre rule on the
    density-weighted integrand, which keeps kinks from spoiling convergence.
    """
    if not breakpoints:
        return _hermite_rule(n)
    t, wt = _legendre_rule(n)
    edges = [-_TAIL, *sorted(b for b in breakpoints if -_TAIL < b < _TAIL), _TAIL]
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        x = lo + half * (t + 1)
        xs.append(x)
        ws.append(half * wt * np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi))
    return np.concatenate(xs), np.concatenate(ws)


def gaussian_expectation(
    integrand: Callable[[np.ndarray], np.ndarray],
    breakpoints: tuple[float, ...] = (),
    *,
    tol: float = _QUAD_TOL,
) -> np.ndarray:
    """E[integrand(Z)] for vector-valued integrands, doubling nodes until stable."""
    n = _START_NODES
    x, w = _rule(n, breakpoints)
    prev = w @ np.atleast_2d(integrand(x)).T
    while n < _MAX_NODES:
        n *= 2
        x, w = _rule(n, breakpoints)
        cur = w @ np.atleast_2d(integrand(x)).T
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    raise ConvergenceError(f"Gaussian quadrature did not settle with {n} nodes", (n / 2, n))


@dataclass(frozen=True)
class ActivationSpec:
    """Activation plus its Gaussian moments ``mu = E[Z f(Z)]`` and ``v = E[f(Z)^2]``.

    Build instances with the class constructors; they centre the function so
    that ``E[f(Z)] = 0`` and compute the moments once.
    """

    kind: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    mu: float
    v: float
    offset: float = 0.0
    scale: float | None = None
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return self.func(x)

    @property
    def name(self) -> str:
        return self.kind if self.scale is None else f"{self.kind}({self.scale:g})"

    @property
    def is_linear(self) -> bool:
        return self.kind in ("identity", "scaled_linear")

    @property
    def linearity_ratio(self) -> float:
        """``mu**2 / v``; equals 1 exactly for linear activations."""
        return self.mu * self.mu / self.v

    @classmethod
    def identity(cls) -> "ActivationSpec":
        return cls("identity", _identity, 1.0, 1.0)

    @classmethod
    def scaled_linear(cls, k: float) -> "ActivationSpec":
        if k == 0:
            raise DomainError("scaled_linear needs a non-zero slope")
        return cls("scaled_linear", _Scaled(k), float(k), float(k) * k, scale=float(k))

    @classmethod
    def centered_relu(cls) -> "ActivationSpec":
        return cls.custom(lambda x: np.maximum(x, 0.0), breakpoints=(0.0,), kind="crelu")

    @classmethod
    def custom(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        *,
        center: bool | float = True,
        breakpoints: tuple[float, ...] = (),
        kind: str = "custom",
    ) -> "ActivationSpec":
        """Wrap an arbitrary activation.

        ``center=True`` subtracts ``E[func(Z)]``; a float subtracts that
        constant instead; ``False`` requires the function to be centred
        already.  Non-smooth points should be listed in ``breakpoints``.
        """
        breakpoints = tuple(float(b) for b in breakpoints)
        if center is True:
            offset = float(gaussian_expectation(func, breakpoints)[0])
        elif center is False:
            offset = 0.0
        else:
            offset = float(center)
        shifted = _Shifted(func, offset)
        mean, mu, v = gaussian_expectation(
            lambda x: np.vstack([shifted(x), x * shifted(x), shifted(x) ** 2]), breakpoints
        )
        if abs(mean) > 1e-8:
            raise DomainError(f"activation has non-zero Gaussian mean {mean:.3g}; centre it first")
        if v < mu * mu - 1e-10:
            raise DomainError("activation moments violate v >= mu^2")
        return cls(kind, shifted, float(mu), float(v), offset, None, breakpoints)

    @classmethod
    def from_name(cls, name: str) -> "ActivationSpec":
        """Parse ``identity``, ``crelu`` / ``centered_relu``, ``linear:<k>`` or ``tanh``."""
        key = name.strip().lower()
        if key in ("identity", "linear"):
            return cls.identity()
        if key in ("crelu", "centered_relu", "relu"):
            return cls.centered_relu()
        if key.startswith(("linear:", "scaled_linear:")):
            return cls.scaled_linear(float(key.split(":", 1)[1]))
        if key == "tanh":
            return cls.custom(np.tanh, kind="tanh")
        raise ValueError(f"unknown activation {name!r}")


def _identity(x):
    return x


class _Scaled:
    def __init__(self, k: float):
        self.k = k

    def __call__(self, x):
        return self.k * x


class _Shifted:
    def __init__(self, func, offset: float):
        self.func, self.offset = func, offset

    def __call__(self, x):
        return self.func(x) - self.offset


def activation_moments(activation: ActivationSpec | str) -> tuple[float, float]:
    if isinstance(activation, str):
        activation = ActivationSpec.from_name(activation)
    return activation.mu, activation.v


@dataclass(frozen=True)
class NonlinearRisk:
    bias2: float
    variance: float
    mse_formula: float
    noise_floor: float
    lam: float
    lambda_star: float | None

    @property
    def mse(self) -> float:
        return self.bias2 + self.variance + self.noise_floor

    @property
    def excess_mse(self) -> float:
        return self.bias2 + self.variance

    def as_dict(self) -> dict[str, float]:
        return {"mse": self.mse, "bias2": self.bias2, "variance": self.variance}


def optimal_lambda_nl(params: ModelParams, activation: ActivationSpec) -> float:
    mu, v = activation.mu, activation.v
    if mu == 0:
        raise DomainError("optimal lambda is undefined when mu = 0")
    lam = (v * v / (mu * mu)) * (
        params.delta * (1 - params.pi + params.sigma2 / params.alpha2)
        + (v - mu * mu) * params.gamma / v
    )
    if lam <= 0:
        raise DomainError("optimal lambda is 0 (degenerate) for this linear activation with pi = 1, sigma = 0")
    return lam


def nonlinear_risk(
    params: ModelParams, activation: ActivationSpec, *, include_noise: bool = True
) -> NonlinearRisk:
    """Limiting bias, variance and MSE.  ``params.lam=None`` selects the optimum.

    ``mse_formula`` is the direct MSE expression; ``mse`` is the sum of the
    parts.  They agree up to rounding, which the tests exploit.
    """
    mu, v = activation.mu, activation.v
    try:
        lam_star = optimal_lambda_nl(params, activation)
    except DomainError:
        lam_star = None
    lam = lam_star if params.lam is None else params.require_lambda()
    if lam is None:
        raise DomainError("no penalty given and the optimum is degenerate")
    a2, s2, pi, delta, gamma = params.alpha2, params.sigma2, params.pi, params.delta, params.gamma
    eff = lam / v
    t1, t2 = theta1(gamma, eff), theta2(gamma, eff)
    r = mu * mu / v
    excess = v - mu * mu
    extra = excess * (gamma * t1 / v + 1 / v - lam * gamma * t2 / (v * v))
    curv = eff * (lam * mu * mu / (v * v) - delta * (1 - pi)) * t2
    label = s2 * gamma * (t1 - eff * t2)

    mse = a2 * pi * (1 / pi - 1 + delta * (1 - pi) * t1 + curv + extra) + label + s2
    shrink = 1 - eff * t1
    bias2 = a2 * (pi * r * shrink - 1) ** 2
    variance = a2 * pi * (
        2 * r - 1
        + (-2 * lam * mu * mu / (v * v) + delta * (1 - pi)) * t1
        + curv
        - pi * r * r * shrink * shrink
        + extra
    ) + label
    floor = s2 if include_noise else 0.0
    return NonlinearRisk(bias2, variance, mse - s2 + floor, floor, lam, lam_star)


def check_monotonicity_nl(
    quantity: str, axis: str, params: ModelParams, activation: ActivationSpec, grid: int = 64
):
    """Shape of an optimal-penalty quantity along ``pi`` or ``delta``; see :mod:`ridge_anova.shapes`."""
    from .shapes import nonlinear_shape_report

    return nonlinear_shape_report(quantity, axis, params, activation, grid)
