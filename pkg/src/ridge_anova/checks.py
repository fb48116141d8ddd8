"""Consistency checks over the closed forms, grouped into named suites.

Every check returns a :class:`CheckResult`; failures are data, so a suite
always runs to completion.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .linear import (
    ModelParams,
    added_noise_delta,
    all_ordered_decompositions,
    one_layer_risk,
    optimal_lambda,
    risk_at_optimum,
    risk_decomposition,
    variance_components,
)
from .nonlinear import ActivationSpec, nonlinear_risk
from .rmt import adjusted_penalty, identity_residuals, moments_array, solve_fixed_point
from .shapes import AXIS_RANGES, LINEAR_QUANTITIES, NONLINEAR_QUANTITIES, linear_shape_report, nonlinear_shape_report

SUITES = ("identities", "monotonicity", "reduction", "divergence")
DEFAULT_SEED = 12345


@dataclass(frozen=True)
class CheckResult:
    suite: str
    check: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def close(a: float, b: float, tol: float) -> bool:
    """``|a - b| <= tol * max(1, |b|)``: absolute for small values, relative for large."""
    return abs(a - b) <= tol * max(1.0, abs(b))


def _scaled_error(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def random_params(rng: np.random.Generator, *, with_lambda: bool = True, noisy: bool = False) -> ModelParams:
    """Random regime parameters over the ranges used by the checks."""
    lam = float(10 ** rng.uniform(-3, 1)) if with_lambda else None
    sigma2 = float(rng.uniform(0.01 if noisy else 0.0, 2.0))
    return ModelParams(
        alpha2=float(rng.uniform(0.2, 5.0)),
        sigma2=sigma2,
        pi=float(rng.uniform(0.05, 1.0)),
        delta=float(rng.uniform(0.1, 5.0)),
        lam=lam,
    )


# ----------------------------------------------------------------------------
# identities


def mp_identity_residual(pairs: int, rng: np.random.Generator) -> tuple[float, float]:
    """Largest identity residual and largest finite-difference relative error."""
    gammas = np.exp(rng.uniform(math.log(0.05), math.log(20), pairs))
    lams = np.exp(rng.uniform(math.log(1e-4), math.log(10), pairs))
    r1, r2 = identity_residuals(gammas, lams)
    t1, t2 = moments_array(gammas, lams)
    h = 1e-5 * lams
    fd = -(moments_array(gammas, lams + h)[0] - moments_array(gammas, lams - h)[0]) / (2 * h)
    worst_res = float(max(np.abs(r1).max(), np.abs(r2).max()))
    return worst_res, float(np.max(np.abs(fd - t2) / t2))


def penalty_fixed_point_gap(tuples: int, rng: np.random.Generator, splits: int = 3) -> float:
    worst = 0.0
    for _ in range(tuples):
        pi, delta, lam = rng.uniform(0.05, 1.0), rng.uniform(0.1, 5.0), 10 ** rng.uniform(-3, 1)
        target = adjusted_penalty(pi, delta, lam).lambda_tilde
        for share in rng.uniform(0.05, 0.95, splits):
            sol = solve_fixed_point(pi, delta, share * lam, (1 - share) * lam)
            worst = max(worst, abs(sol.lambda_eff - target) / max(1.0, target))
    return worst


def component_sum_gap(tuples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Worst gaps: seven components vs variance, and spread of ordered totals."""
    worst_sum = worst_order = 0.0
    for _ in range(tuples):
        p = random_params(rng)
        variance = risk_decomposition(p).variance
        worst_sum = max(worst_sum, _scaled_error(variance_components(p).total, variance))
        totals = [o.total for o in all_ordered_decompositions(p)]
        worst_order = max(worst_order, (max(totals) - min(totals)) / max(1.0, variance))
    return worst_sum, worst_order


def optimum_gaps(tuples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Worst gaps: Var vs Bias*(alpha - Bias), and closed forms vs the general formulas."""
    worst_rel = worst_cf = 0.0
    for _ in range(tuples):
        p = random_params(rng, with_lambda=False, noisy=True)
        opt = risk_at_optimum(p)
        bias = math.sqrt(opt.bias2)
        worst_rel = max(worst_rel, _scaled_error(opt.variance, bias * (p.alpha - bias)))
        gen = risk_decomposition(p.with_lambda(optimal_lambda(p)))
        worst_cf = max(worst_cf, *(
            _scaled_error(getattr(opt, q), getattr(gen, q)) for q in ("bias2", "variance", "mse")
        ))
    return worst_rel, worst_cf


def added_noise_gap(tuples: int, rng: np.random.Generator) -> float:
    worst = 0.0
    for _ in range(tuples):
        p = random_params(rng, with_lambda=False, noisy=True)
        extra = added_noise_delta(p)
        single = ModelParams(p.alpha2, p.sigma2 + extra, 1.0, p.delta)
        a = risk_at_optimum(p, include_noise=False).mse
        b = risk_at_optimum(single, include_noise=False).mse
        worst = max(worst, _scaled_error(a, b))
    return worst


def one_layer_peak(alpha2: float = 1.0, points: int = 2001) -> tuple[float, float, float, float]:
    """``(argmax, target, grid step, |bias2 - var| at the target)`` for the one-layer variance."""
    gammas = np.linspace(1e-3, 3.0, points)
    var = np.array([one_layer_risk(alpha2, g).variance for g in gammas])
    target = alpha2 / (alpha2 + 1)
    at = one_layer_risk(alpha2, target)
    return float(gammas[int(np.argmax(var))]), target, float(gammas[1] - gammas[0]), abs(at.bias2 - at.variance)


def suite_identities(seed: int = DEFAULT_SEED) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    res, fd = mp_identity_residual(10_000, rng)
    gap_fp = penalty_fixed_point_gap(100, rng)
    gap_sum, gap_order = component_sum_gap(1000, rng)
    gap_rel, gap_cf = optimum_gaps(1000, rng)
    gap_noise = added_noise_gap(100, rng)
    argmax, target, step, balance = one_layer_peak()
    out = [
        CheckResult("identities", "mp_quadratic_identities", bool(res < 1e-10), res, 1e-10, "10000 pairs"),
        CheckResult("identities", "theta2_finite_difference", bool(fd < 1e-5), fd, 1e-5, "relative error"),
        CheckResult("identities", "adjusted_penalty_vs_fixed_point", bool(gap_fp < 1e-8), gap_fp, 1e-8, "100 tuples x 3 splits"),
        CheckResult("identities", "component_sum", bool(gap_sum < 1e-10), gap_sum, 1e-10, "1000 tuples"),
        CheckResult("identities", "ordered_totals", bool(gap_order < 1e-10), gap_order, 1e-10, "6 orders"),
        CheckResult("identities", "optimum_balance", bool(gap_rel < 1e-10), gap_rel, 1e-10, "Var = Bias*(alpha-Bias)"),
        CheckResult("identities", "optimum_closed_forms", bool(gap_cf < 1e-10), gap_cf, 1e-10, "vs general formulas at optimum"),
        CheckResult("identities", "added_noise_equivalence", bool(gap_noise < 1e-9), gap_noise, 1e-9, "100 tuples"),
        CheckResult("identities", "one_layer_variance_peak", bool(abs(argmax - target) <= step), abs(argmax - target), step,
                    f"argmax {argmax:.4f} vs {target:.4f}"),
        CheckResult("identities", "one_layer_balance_at_peak", bool(balance < 1e-9), balance, 1e-9, "bias2 = variance"),
    ]
    return out


# ----------------------------------------------------------------------------
# monotonicity


def random_slice(rng: np.random.Generator, axis: str) -> ModelParams:
    other = "delta" if axis == "pi" else "pi"
    lo, hi = AXIS_RANGES[other]
    return ModelParams(
        alpha2=float(rng.uniform(0.5, 2.0)),
        sigma2=float(rng.uniform(0.05, 1.0)),
        **{other: float(rng.uniform(lo, hi))},
    )


def monotonicity_reports(seed: int = DEFAULT_SEED, slices: int = 20, grid: int = 64):
    rng = np.random.default_rng(seed)
    crelu = ActivationSpec.centered_relu()
    reports = []
    for axis in ("pi", "delta"):
        for _ in range(slices):
            params = random_slice(rng, axis)
            for q in LINEAR_QUANTITIES:
                reports.append(("linear", params, linear_shape_report(q, axis, params, grid)))
            for q in NONLINEAR_QUANTITIES:
                reports.append(("crelu", params, nonlinear_shape_report(q, axis, params, crelu, grid)))
    return reports


def suite_monotonicity(seed: int = DEFAULT_SEED) -> list[CheckResult]:
    out = []
    for model, params, rep in monotonicity_reports(seed):
        where = f"{model} alpha2={params.alpha2:.4g} sigma2={params.sigma2:.4g} pi={params.pi:.4g} delta={params.delta:.4g}"
        detail = f"{where}: found {rep.shape}, expected {rep.expected}"
        if rep.expected_peak is not None:
            detail += f", argmax {rep.argmax} vs peak {rep.expected_peak:.4g}"
        if not rep.asserted:
            detail += " (reported only)"
        offset = abs(rep.argmax - rep.expected_peak) if (rep.argmax is not None and rep.expected_peak is not None) else 0.0
        out.append(CheckResult("monotonicity", f"{model}:{rep.quantity}:{rep.axis}", rep.passed,
                               offset, rep.grid_step, detail))
    return out


# ----------------------------------------------------------------------------
# reduction


def reduction_gap(tuples: int, rng: np.random.Generator) -> float:
    ident = ActivationSpec.identity()
    worst = 0.0
    for _ in range(tuples):
        p = random_params(rng)
        lin, nl = risk_decomposition(p), nonlinear_risk(p, ident)
        for a, b in ((nl.bias2, lin.bias2), (nl.variance, lin.variance), (nl.mse_formula, lin.mse)):
            worst = max(worst, _scaled_error(a, b))
    return worst


def suite_reduction(seed: int = DEFAULT_SEED) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    gap = reduction_gap(100, rng)
    crelu = ActivationSpec.centered_relu()
    mu_err = abs(crelu.mu - 0.5)
    v_err = abs(crelu.v - (0.5 - 1 / (2 * math.pi)))
    return [
        CheckResult("reduction", "identity_matches_linear", bool(gap < 1e-10), gap, 1e-10, "100 tuples"),
        CheckResult("reduction", "crelu_mu", bool(mu_err < 1e-8), mu_err, 1e-8, f"mu={crelu.mu!r}"),
        CheckResult("reduction", "crelu_v", bool(v_err < 1e-8), v_err, 1e-8, f"v={crelu.v!r}"),
    ]


# ----------------------------------------------------------------------------
# divergence


DIVERGENCE_LAMBDAS = (1e-3, 1e-4, 1e-5)


def relative_spread(values) -> float:
    vals = np.asarray(values, dtype=float)
    return float((vals.max() - vals.min()) / np.abs(vals).max())


def divergence_profile(pi: float = 0.8, alpha2: float = 1.0, sigma2: float = 0.09,
                       lambdas=DIVERGENCE_LAMBDAS) -> dict[str, np.ndarray]:
    """Components along the interpolation line ``delta = 1/pi`` for decreasing penalties."""
    rows = [variance_components(ModelParams(alpha2, sigma2, pi, 1 / pi, lam)) for lam in lambdas]
    out = {k: np.array([getattr(r, k) for r in rows]) for k in ("v_s", "v_i", "v_sl", "v_si", "v_sli")}
    out["lambda"] = np.asarray(lambdas, dtype=float)
    return out


def suite_divergence(pi: float = 0.8, alpha2: float = 1.0, sigma2: float = 0.09) -> list[CheckResult]:
    """Blow-up of the interactions and convergence of the bounded terms on ``delta = 1/pi``.

    ``v_si * sqrt(lambda)`` should settle to a constant.  ``v_sli`` must grow
    by more than a factor 2 per decade of ``lambda``.  The bounded terms
    approach their limits at rate ``sqrt(lambda)``, so their successive
    increments must shrink by more than a factor 2 per decade.
    """
    prof = divergence_profile(pi, alpha2, sigma2)
    scaled = prof["v_si"] * np.sqrt(prof["lambda"])
    spread = relative_spread(scaled)
    out = [CheckResult("divergence", "v_si_sqrt_lambda_stable", bool(spread < 0.1), spread, 0.1,
                       f"v_si*sqrt(lambda) = {np.round(scaled, 6).tolist()}")]
    growth = prof["v_sli"][1:] / prof["v_sli"][:-1]
    out.append(CheckResult("divergence", "v_sli_unbounded", bool(np.all(growth > 2.0)), float(growth.min()), 2.0,
                           f"growth per decade {np.round(growth, 3).tolist()}"))
    fine = divergence_profile(pi, alpha2, sigma2, lambdas=(1e-3, 1e-4, 1e-5, 1e-6, 1e-7))
    for name in ("v_s", "v_i", "v_sl"):
        steps = np.abs(np.diff(fine[name]))
        ratios = steps[:-1] / steps[1:]
        out.append(CheckResult("divergence", f"{name}_converges", bool(np.all(ratios > 2.0)), float(ratios.min()),
                               2.0, f"increment ratios per decade {np.round(ratios, 3).tolist()}"))
    return out


SUITE_FUNCS: dict[str, Callable[..., list[CheckResult]]] = {
    "identities": suite_identities,
    "monotonicity": suite_monotonicity,
    "reduction": suite_reduction,
    "divergence": suite_divergence,
}
