"""Marchenko-Pastur resolvent moments and the adjusted ridge penalty.

``theta1(gamma, lam)`` and ``theta2(gamma, lam)`` are the integrals of
``1/(x+lam)`` and ``1/(x+lam)**2`` against the Marchenko-Pastur law with
aspect ratio ``gamma``.  The two-layer formulas also need the penalty
``lambda_tilde`` that the random projection effectively adds; it is available
in closed form (:func:`adjusted_penalty`) and as the root of a scalar
self-consistent equation (:func:`solve_fixed_point`), which serves as an
independent check.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "ConvergenceError",
    "ResolventMoments",
    "AdjustedPenalty",
    "FixedPointSolution",
    "theta1",
    "theta2",
    "resolvent_moments",
    "adjusted_penalty",
    "solve_fixed_point",
]


class DomainError(ValueError):
    """Raised when a parameter lies outside the domain of a formula."""


class ConvergenceError(RuntimeError):
    """Raised when a root finder does not reach its tolerance."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message} (final bracket [{bracket[0]!r}, {bracket[1]!r}])")
        self.bracket = bracket


def _check_positive(**values: float) -> None:
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"{name} must be a finite positive number, got {value!r}")


def _check_pi(pi: float) -> None:
    if not (0 < pi <= 1):
        raise DomainError(f"pi must lie in (0,1], got {pi!r}")


@dataclass(frozen=True)
class ResolventMoments:
    gamma: float
    lam: float
    theta1: float
    theta2: float

    def identity_residuals(self) -> tuple[float, float]:
        """Residuals of the two quadratic identities satisfied by the moments.

        Evaluated in exact rational arithmetic on the stored floats, so the
        result measures the moments themselves and not rounding in the check.
        """
        g, lam, t1, t2 = (Fraction(v) for v in (self.gamma, self.lam, self.theta1, self.theta2))
        r1 = lam * g * t1**2 + (lam - g + 1) * t1 - 1
        r2 = 1 + (g - 1) * t1 - 2 * lam**2 * g * t1 * t2 - lam * (lam - g + 1) * t2
        return float(r1), float(r2)


@dataclass(frozen=True)
class AdjustedPenalty:
    pi: float
    delta: float
    lam: float
    lambda_tilde: float
    theta1_tilde: float
    theta2_tilde: float

    def quadratic_residual(self) -> float:
        """Value of ``h(lambda_tilde)``; ``lambda_tilde`` is the larger root of ``h``."""
        pi, delta, lam = self.pi, self.delta, self.lam
        gamma = pi * delta
        x = self.lambda_tilde
        return (
            pi * x**2
            - ((1 + pi) * lam + (1 - pi) * (1 - gamma)) * x
            + lam * (lam + (1 - delta) * (1 - pi))
        )


@dataclass(frozen=True)
class FixedPointSolution:
    e_bar: float
    e: float
    lambda1: float
    lambda2: float
    iterations: int

    @property
    def lambda_eff(self) -> float:
        """``lambda1 + lambda2 / e_bar``, which equals the adjusted penalty."""
        return self.lambda1 + self.lambda2 / self.e_bar


_EXT = np.longdouble
_ULP_BELOW_ONE = 2.0**-53


def _moments_ext(gamma: float, lam: float):
    """``(theta1, theta2)`` in extended precision where the platform has it.

    Both branches avoid subtracting nearly equal numbers: the plain form when
    ``gamma - 1 - lam >= 0`` and the rationalized form otherwise.  The second
    moment comes from differentiating the quadratic satisfied by the first;
    the derivative at the positive root is exactly ``sqrt(D)``.
    """
    g, lm = _EXT(gamma), _EXT(lam)
    a = g - 1 - lm
    root = np.sqrt(a * a + 4 * lm * g)
    t1 = (a + root) / (2 * lm * g) if a >= 0 else 2 / (root - a)
    return t1, t1 * (1 + g * t1) / root


def theta1(gamma: float, lam: float) -> float:
    return float(_moments_ext(gamma, lam)[0])


def theta2(gamma: float, lam: float) -> float:
    return float(_moments_ext(gamma, lam)[1])


def moments_array(gamma, lam) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``(theta1, theta2)`` as float64 arrays; inputs broadcast."""
    g = np.asarray(gamma, dtype=float)
    lm = np.asarray(lam, dtype=float)
    if not (np.all(g > 0) and np.all(lm > 0) and np.all(np.isfinite(g)) and np.all(np.isfinite(lm))):
        raise DomainError("gamma and lambda must be positive and finite")
    g, lm = np.broadcast_arrays(g.astype(_EXT), lm.astype(_EXT))
    a = g - 1 - lm
    root = np.sqrt(a * a + 4 * lm * g)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(a >= 0, (a + root) / (2 * lm * g), 2 / (root - a))
    t2 = t1 * (1 + g * t1) / root
    return t1.astype(float), t2.astype(float)


def identity_residuals(gamma, lam) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of both quadratic identities for arrays of ``(gamma, lam)``.

    The float64 moments are substituted in extended precision, so rounding
    in the check itself stays far below the residuals being measured.
    """
    t1, t2 = (x.astype(_EXT) for x in moments_array(gamma, lam))
    g, lm = np.broadcast_arrays(np.asarray(gamma, dtype=float).astype(_EXT), np.asarray(lam, dtype=float).astype(_EXT))
    r1 = lm * g * t1 * t1 + (lm - g + 1) * t1 - 1
    r2 = 1 + (g - 1) * t1 - 2 * lm * lm * g * t1 * t2 - lm * (lm - g + 1) * t2
    return r1.astype(float), r2.astype(float)


def resolvent_moments(gamma: float, lam: float) -> ResolventMoments:
    """First and second resolvent moments of the Marchenko-Pastur law.

    Parameters
    ----------
    gamma : float
        Aspect ratio of the sample covariance (``lim p/n``), positive.
    lam : float
        Ridge penalty, positive.
    """
    _check_positive(gamma=gamma, lam=lam)
    t1, t2 = _moments_ext(gamma, lam)
    return ResolventMoments(gamma, lam, float(t1), float(t2))


def _lambda_tilde(pi: float, delta: float, lam: float) -> float:
    gamma = pi * delta
    b = lam + 1 - gamma
    s = math.sqrt((lam + gamma - 1) ** 2 + 4 * lam)
    # s**2 - b**2 == 4*lam*gamma, so b + s can be rationalized when b < 0.
    bracket = b + s if b >= 0 else 4 * lam * gamma / (s - b)
    return lam + (1 - pi) / (2 * pi) * bracket


def adjusted_penalty(pi: float, delta: float, lam: float) -> AdjustedPenalty:
    """Effective penalty seen by the sample covariance after a Haar projection.

    The moments ``theta1_tilde`` and ``theta2_tilde`` are evaluated at aspect
    ratio ``delta`` (not ``pi * delta``).
    """
    _check_pi(pi)
    _check_positive(delta=delta, lam=lam)
    lt = _lambda_tilde(pi, delta, lam)
    return AdjustedPenalty(pi, delta, lam, lt, theta1(delta, lt), theta2(delta, lt))


def solve_fixed_point(
    pi: float,
    delta: float,
    lambda1: float,
    lambda2: float,
    *,
    eps: float = 1e-12,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> FixedPointSolution:
    """Solve the limiting deterministic-equivalent system for ``(e_bar, e)``.

    ``e_bar`` is the zero on (0, 1) of

        g(x) = 1 - (lambda2/x) * theta1(delta, lambda1 + lambda2/x) - (pi - x)/(1 - x),

    which is increasing there, so plain bisection is used; ``tol`` bounds the
    bracket width relative to its lower end and ``eps`` sets the initial
    bracket ``[eps*pi, 1 - eps*(1 - pi)]``.  For ``pi == 1`` the solution is
    ``e_bar = 1`` exactly.  Below ``pi ~ 1e-8`` the two terms of ``g`` cancel
    to ``O(pi)`` and the result loses about ``-log10(pi)`` digits.
    """
    _check_pi(pi)
    _check_positive(delta=delta, lambda1=lambda1, lambda2=lambda2)

    def e_of(x: float) -> float:
        return (1 - lambda2 / x * theta1(delta, lambda1 + lambda2 / x)) / x

    q = 1 - pi
    # Near 0, g ~ -pi + x (1 + 1/lambda2); near 1, g ~ q/(1 - x) grows without
    # bound.  Scaling the ends keeps the bracket valid as pi -> 0 or 1.
    lo, hi = eps * pi, 1 - max(eps * q, _ULP_BELOW_ONE)

    def g(x: float) -> float:
        # (pi - x)/(1 - x) written as 1 - q/(1 - x)
        return q / (1 - x) - lambda2 / x * theta1(delta, lambda1 + lambda2 / x)

    if q == 0 or g(hi) <= 0:
        # The root lies above the largest float below 1.
        return FixedPointSolution(1.0, e_of(1.0), lambda1, lambda2, 0)
    if not g(lo) < 0:
        raise ConvergenceError("root of the fixed-point map is not bracketed", (lo, hi))
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * lo:
            x = 0.5 * (lo + hi)
            return FixedPointSolution(x, e_of(x), lambda1, lambda2, it)
    raise ConvergenceError(f"bisection did not converge in {max_iter} iterations", (lo, hi))
