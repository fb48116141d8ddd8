"""Finite-size Monte Carlo for the ridge-fitted two-layer network.

Every random draw comes from its own generator keyed by
``(seed, cell, run, role, index)``, so results do not depend on how the work
is scheduled across threads and any sweep cell can be recomputed alone.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky, solve_triangular, toeplitz

from .linear import ModelParams, risk_decomposition, variance_components
from .nonlinear import ActivationSpec, nonlinear_risk
from .rmt import DomainError

__all__ = [
    "DataLaw",
    "SimConfig",
    "FunctionalEstimates",
    "MSEEstimate",
    "RidgeSnapshot",
    "sample_orthogonal",
    "sample_data",
    "ridge_fit",
    "ridge_snapshot",
    "estimate_mse_direct",
    "estimate_functionals",
    "theory_values",
    "sweep",
    "RECORD_COLUMNS",
    "FUNCTIONAL_NAMES",
]

ROLE_X, ROLE_W, ROLE_THETA, ROLE_EPS, ROLE_TEST = range(5)
LARGE_D = 4096

FUNCTIONAL_NAMES = (
    "mse", "bias2", "variance", "sigma_label", "sigma_sample", "sigma_init",
    "v_s", "v_l", "v_i", "v_sl", "v_si", "v_li", "v_sli",
)
RECORD_COLUMNS = (
    "axis", "value", "quantity", "estimate", "std", "runs", "n", "d", "p",
    "lambda", "alpha2", "sigma2", "activation", "data_law", "seed",
)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


# ----------------------------------------------------------------------------
# Data laws


@dataclass(frozen=True)
class DataLaw:
    """Distribution of the rows of ``X``.

    ``gaussian``: i.i.d. N(0, 1).  ``rademacher`` / ``uniform``: i.i.d.
    unit-variance entries.  ``ar1``: rows N(0, S) with ``S[i, j] = r**|i-j|``.
    ``custom``: ``sampler(rng, shape)`` returning unit-variance entries.
    """

    kind: str = "gaussian"
    r: float = 0.0
    sampler: Callable[[np.random.Generator, tuple[int, int]], np.ndarray] | None = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "rademacher", "uniform", "ar1", "custom"):
            raise ValueError(f"unknown data law {self.kind!r}")
        if self.kind == "ar1" and not -1 < self.r < 1:
            raise DomainError(f"ar1 coefficient must lie in (-1, 1), got {self.r!r}")
        if self.kind == "custom" and self.sampler is None:
            raise ValueError("custom data law needs a sampler")

    @classmethod
    def parse(cls, text: "str | DataLaw") -> "DataLaw":
        if isinstance(text, DataLaw):
            return text
        key = text.strip().lower()
        if key.startswith("ar1"):
            _, _, r = key.partition(":")
            return cls("ar1", float(r or 0.5))
        return cls(key)

    @property
    def label(self) -> str:
        return f"ar1:{self.r:g}" if self.kind == "ar1" else self.kind

    @property
    def is_isotropic(self) -> bool:
        return self.kind != "ar1" or self.r == 0


@lru_cache(maxsize=32)
def _ar1_factor(d: int, r: float) -> np.ndarray:
    """Lower Cholesky factor of the AR-1 covariance."""
    try:
        return cholesky(toeplitz(r ** np.arange(d)), lower=True)
    except LinAlgError as exc:
        raise DomainError(f"AR-1 covariance with r={r} is not positive definite") from exc


def sample_data(law: DataLaw | str, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    law = DataLaw.parse(law)
    if law.kind == "gaussian":
        return rng.standard_normal((n, d))
    if law.kind == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=(n, d))
    if law.kind == "uniform":
        return rng.uniform(-math.sqrt(3), math.sqrt(3), size=(n, d))
    if law.kind == "ar1":
        return rng.standard_normal((n, d)) @ _ar1_factor(d, law.r).T
    return np.asarray(law.sampler(rng, (n, d)), dtype=float)


def sample_orthogonal(d: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``p x d`` matrix with orthonormal rows."""
    if not (1 <= p <= d):
        raise ValueError(f"need 1 <= p <= d, got p={p}, d={d}")
    g = rng.standard_normal((p, d))
    if p <= 0.9 * d:
        # Same matrix as sign-fixed QR of g.T (L = R^T), but all level-3 BLAS.
        chol = np.linalg.cholesky(g @ g.T)
        return solve_triangular(chol, g, lower=True, check_finite=False)
    q, r = np.linalg.qr(g.T)
    q *= np.sign(np.diag(r))
    return q.T


# ----------------------------------------------------------------------------
# Ridge fit


@dataclass(frozen=True)
class RidgeSnapshot:
    """Linear maps of a fitted model: prediction at ``x`` is ``x @ M_tilde @ Y``.

    ``M = M_tilde @ X`` acts on the true parameter.
    """

    M: np.ndarray
    M_tilde: np.ndarray
    n: int
    d: int
    p: int


def _features(X: np.ndarray, W: np.ndarray, activation: ActivationSpec | None) -> np.ndarray:
    Z = X @ W.T
    return Z if activation is None else activation(Z)


def _factor(gram: np.ndarray, lam: float):
    gram[np.diag_indices_from(gram)] += lam
    try:
        return cho_factor(gram, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise LinAlgError(f"ridge system is not positive definite (lambda={lam})") from exc


def ridge_fit(
    X: np.ndarray,
    Y: np.ndarray,
    W: np.ndarray,
    lam: float,
    activation: ActivationSpec | None = None,
) -> np.ndarray:
    """Second-layer ridge coefficients on features ``activation(X W^T)``."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    n = X.shape[0]
    F = _features(X, W, activation)
    if F.shape[1] <= n:
        return cho_solve(_factor(F.T @ F / n, lam), F.T @ Y / n, check_finite=False)
    # Kernel form: cheaper when the feature count exceeds the sample count.
    return F.T @ cho_solve(_factor(F @ F.T / n, lam), Y / n, check_finite=False)


def ridge_snapshot(
    X: np.ndarray, W: np.ndarray, lam: float, activation: ActivationSpec | None = None
) -> RidgeSnapshot:
    """Linear-activation maps ``M_tilde = k W^T R k W X^T / n`` and ``M = M_tilde X``."""
    slope = _linear_slope(activation)
    n, d = X.shape
    Z = slope * (X @ W.T)
    S = cho_solve(_factor(Z.T @ Z / n, lam), Z.T, check_finite=False) / n
    M_tilde = slope * (W.T @ S)
    return RidgeSnapshot(M_tilde @ X, M_tilde, n, d, W.shape[0])


def _linear_slope(activation: ActivationSpec | None) -> float:
    if activation is None or activation.kind == "identity":
        return 1.0
    if activation.kind == "scaled_linear":
        return float(activation.scale)
    raise DomainError("matrix functionals are only defined for linear activations")


# ----------------------------------------------------------------------------
# Configuration and results


@dataclass(frozen=True)
class SimConfig:
    n: int = 150
    d: int = 150
    p: int = 120
    alpha2: float = 1.0
    sigma2: float = 0.09
    lam: float = 0.01
    activation: ActivationSpec | str = "identity"
    data_law: DataLaw | str = "gaussian"
    k_outer: int = 100
    k_grid: int = 20
    runs: int = 5
    seed: int = 20240101
    bias_correction: bool = False
    cell: int = 0
    pi_nominal: float | None = None
    delta_nominal: float | None = None

    def __post_init__(self) -> None:
        if isinstance(self.activation, str):
            object.__setattr__(self, "activation", ActivationSpec.from_name(self.activation))
        object.__setattr__(self, "data_law", DataLaw.parse(self.data_law))
        if min(self.n, self.d, self.p) < 1:
            raise ValueError("n, d and p must be at least 1")
        if self.p > self.d:
            raise DomainError(f"p ({self.p}) must not exceed d ({self.d})")
        if not self.lam > 0:
            raise DomainError(f"lambda must be positive, got {self.lam!r}")
        if self.runs < 1 or self.k_outer < 1 or self.k_grid < 1:
            raise ValueError("runs, k_outer and k_grid must be positive")
        if self.d > LARGE_D:
            warnings.warn(f"d={self.d} stores dense d x d matrices; memory use may be large", stacklevel=3)

    @classmethod
    def from_ratios(cls, n: int, delta: float, pi: float, **kwargs) -> "SimConfig":
        """``d = floor(n * delta)``, ``p = floor(d * pi)``."""
        if not 0 < pi <= 1:
            raise DomainError(f"pi must lie in (0,1], got {pi!r}")
        d = max(1, math.floor(n * delta + 1e-9))
        p = max(1, math.floor(d * pi + 1e-9))
        return cls(n=n, d=d, p=p, pi_nominal=pi, delta_nominal=delta, **kwargs)

    def with_axis(self, axis: str, value: float) -> "SimConfig":
        pi = self.pi if self.pi_nominal is None else self.pi_nominal
        delta = self.delta if self.delta_nominal is None else self.delta_nominal
        base = {f.name: getattr(self, f.name) for f in self.__dataclass_fields__.values()}
        for key in ("n", "d", "p", "pi_nominal", "delta_nominal"):
            base.pop(key)
        if axis == "delta":
            return SimConfig.from_ratios(self.n, value, pi, **base)
        if axis == "pi":
            return SimConfig.from_ratios(self.n, delta, value, **base)
        if axis == "lambda":
            base["lam"] = value
            return SimConfig.from_ratios(self.n, delta, pi, **base)
        raise ValueError(f"axis must be delta, pi or lambda; got {axis!r}")

    @property
    def pi(self) -> float:
        return self.p / self.d

    @property
    def delta(self) -> float:
        return self.d / self.n

    def params(self) -> ModelParams:
        """Regime parameters at the realised ratios ``p/d`` and ``d/n``."""
        return ModelParams(self.alpha2, self.sigma2, self.pi, self.delta, self.lam)


@dataclass(frozen=True)
class FunctionalEstimates:
    """Run-averaged functional estimates with their across-run std."""

    config: SimConfig
    per_run: dict[str, np.ndarray]
    flags: tuple[str, ...] = ()

    def mean(self, name: str) -> float:
        return float(np.mean(self.per_run[name]))

    def std(self, name: str) -> float:
        vals = self.per_run[name]
        return float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0

    def __getattr__(self, name: str) -> float:
        if name in FUNCTIONAL_NAMES:
            return self.mean(name)
        raise AttributeError(name)


@dataclass(frozen=True)
class MSEEstimate:
    config: SimConfig
    per_run: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_run))

    @property
    def std(self) -> float:
        return float(np.std(self.per_run, ddof=1)) if self.per_run.size > 1 else 0.0


def _run_tasks(fn, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------------------------
# Direct MSE


def _direct_mse_run(cfg: SimConfig, run: int) -> float:
    act = None if cfg.activation.kind == "identity" else cfg.activation
    sd = math.sqrt(cfg.alpha2 / cfg.d)
    noise = math.sqrt(cfg.sigma2)
    errs = np.empty(cfg.k_outer)
    for k in range(cfg.k_outer):
        key = (cfg.cell, run)
        X = sample_data(cfg.data_law, cfg.n, cfg.d, stream(cfg.seed, *key, ROLE_X, k))
        W = sample_orthogonal(cfg.d, cfg.p, stream(cfg.seed, *key, ROLE_W, k))
        theta = sd * stream(cfg.seed, *key, ROLE_THETA, k).standard_normal(cfg.d)
        eps = noise * stream(cfg.seed, *key, ROLE_EPS, k).standard_normal(cfg.n)
        x = sample_data(cfg.data_law, 1, cfg.d, stream(cfg.seed, *key, ROLE_TEST, k))
        beta = ridge_fit(X, X @ theta + eps, W, cfg.lam, act)
        pred = (_features(x, W, act) @ beta)[0]
        errs[k] = (pred - x[0] @ theta) ** 2
    return float(np.mean(errs))


def estimate_mse_direct(config: SimConfig, *, threads: int = 1) -> MSEEstimate:
    """Average squared error at fresh test points, test label noise excluded."""
    vals = _run_tasks(lambda r: _direct_mse_run(config, r), range(config.runs), threads)
    return MSEEstimate(config, np.array(vals))


# ----------------------------------------------------------------------------
# Functional estimators


def _norm2(a: np.ndarray) -> float:
    return float(np.vdot(a, a).real)


class _GridMoments:
    """Row sums, column sums and the sum of squares over a ``k x k`` matrix grid."""

    def __init__(self, k: int, shape: tuple[int, int]):
        self.k = k
        self.rows = np.zeros((k, *shape))
        self.cols = np.zeros((k, *shape))
        self.sum_sq = 0.0

    def add(self, i: int, j: int, mat: np.ndarray) -> None:
        self.rows[i] += mat
        self.cols[j] += mat
        self.sum_sq += _norm2(mat)

    def effects(self, corrected: bool) -> tuple[float, float, float, float]:
        """``(row, col, interaction, mean_sq)`` variance effects in Frobenius units.

        Plain estimates plug the nested Monte Carlo means into the ANOVA
        formulas.  Corrected estimates use two-way random-effects mean
        squares, which remove the O(1/k) bias of the plain version.
        """
        k = self.k
        total = self.rows.sum(axis=0)
        grand_sq = _norm2(total) / k**2
        row_ss = sum(_norm2(r) for r in self.rows) / k
        col_ss = sum(_norm2(c) for c in self.cols) / k
        if not corrected:
            row = row_ss / k**2 - grand_sq / k**2
            col = col_ss / k**2 - grand_sq / k**2
            inter = self.sum_sq / k**2 - row - col - grand_sq / k**2
            return row, col, inter, grand_sq / k**2
        ss_rows = row_ss - grand_sq
        ss_cols = col_ss - grand_sq
        ss_err = self.sum_sq - grand_sq - ss_rows - ss_cols
        ms_rows, ms_cols = ss_rows / (k - 1), ss_cols / (k - 1)
        ms_err = ss_err / (k - 1) ** 2
        mean_sq = (grand_sq - ms_rows - ms_cols + ms_err) / k**2
        return (ms_rows - ms_err) / k, (ms_cols - ms_err) / k, ms_err, mean_sq


def _weight(cfg: SimConfig) -> np.ndarray | None:
    """Transpose of the covariance factor; ``None`` for isotropic data."""
    if cfg.data_law.is_isotropic:
        return None
    return _ar1_factor(cfg.d, cfg.data_law.r).T


def _functional_run(cfg: SimConfig, run: int) -> dict[str, float]:
    act = cfg.activation
    weight = _weight(cfg)
    a_scale, s2 = cfg.alpha2 / cfg.d, cfg.sigma2
    ident = np.eye(cfg.d) if weight is None else weight

    def draw(role: int, idx: int):
        g = stream(cfg.seed, cfg.cell, run, role, idx)
        return (sample_data(cfg.data_law, cfg.n, cfg.d, g) if role == ROLE_X
                else sample_orthogonal(cfg.d, cfg.p, g))

    def weighted(snap: RidgeSnapshot):
        if weight is None:
            return snap.M, snap.M_tilde
        return weight @ snap.M, weight @ snap.M_tilde

    # Bias, variance and MSE from independent (X, W) pairs.
    k = cfg.k_outer
    sum_m = np.zeros((cfg.d, cfg.d))
    sq_m = sq_mt = 0.0
    # Offset indices keep these draws disjoint from the grid draws below.
    for idx in range(k):
        X, W = draw(ROLE_X, cfg.k_grid + idx), draw(ROLE_W, cfg.k_grid + idx)
        M, Mt = weighted(ridge_snapshot(X, W, cfg.lam, act))
        sum_m += M
        sq_m += _norm2(M)
        sq_mt += _norm2(Mt)
    mean_m = sum_m / k
    spread = sq_m / k - _norm2(mean_m)
    bias_core = _norm2(mean_m - ident)
    if cfg.bias_correction and k > 1:
        spread_u = spread * k / (k - 1)
        bias_core -= spread_u / k
        spread = spread_u
    out = {
        "bias2": a_scale * bias_core,
        "sigma_label": s2 * sq_mt / k,
    }
    out["variance"] = a_scale * spread + out["sigma_label"]
    out["mse"] = out["bias2"] + out["variance"] + s2

    # ANOVA components from a k_grid x k_grid cross of X and W draws.
    kg = cfg.k_grid
    if kg >= 2:
        grid_m = _GridMoments(kg, (cfg.d, cfg.d))
        grid_mt = _GridMoments(kg, (cfg.d, cfg.n))
        Ws = [draw(ROLE_W, j) for j in range(kg)]
        for i in range(kg):
            X = draw(ROLE_X, i)
            for j, W in enumerate(Ws):
                M, Mt = weighted(ridge_snapshot(X, W, cfg.lam, act))
                grid_m.add(i, j, M)
                grid_mt.add(i, j, Mt)
        v_s, v_i, v_si, _ = (a_scale * v for v in grid_m.effects(cfg.bias_correction))
        v_sl, v_li, v_sli, v_l = (s2 * v for v in grid_mt.effects(cfg.bias_correction))
        out.update(v_s=v_s, v_i=v_i, v_si=v_si, v_l=v_l, v_sl=v_sl, v_li=v_li, v_sli=v_sli)
        out["sigma_sample"] = v_s + v_si
        out["sigma_init"] = v_i
    else:
        for name in ("v_s", "v_l", "v_i", "v_sl", "v_si", "v_li", "v_sli", "sigma_sample", "sigma_init"):
            out[name] = float("nan")
    return out


def estimate_functionals(config: SimConfig, *, threads: int = 1) -> FunctionalEstimates:
    """Bias, variance, ordered terms and ANOVA components for a linear activation.

    ``k_grid >= 2`` is required; ``bias_correction`` switches the nested
    estimators to their unbiased mean-squares form.
    """
    _linear_slope(config.activation)
    if config.k_grid < 2:
        raise ValueError("k_grid must be at least 2 for the nested ANOVA estimators")
    if config.k_outer < 2:
        raise ValueError("k_outer must be at least 2 for the bias/variance estimators")
    rows = _run_tasks(lambda r: _functional_run(config, r), range(config.runs), threads)
    per_run = {name: np.array([row[name] for row in rows]) for name in FUNCTIONAL_NAMES}
    flags = tuple(
        name for name in FUNCTIONAL_NAMES
        if name not in ("mse", "bias2") and np.any(per_run[name] < 0)
    )
    # v_l and v_li vanish in the limit, so their sign carries no information.
    if set(flags) - {"v_l", "v_li"}:
        warnings.warn(f"negative variance estimates for {', '.join(flags)} (Monte Carlo noise)", stacklevel=2)
    return FunctionalEstimates(config, per_run, flags)


def theory_values(config: SimConfig, *, exclude_noise: bool = False) -> dict[str, float]:
    """Limiting values of every functional at the configuration's realised ratios."""
    params = config.params()
    if config.activation.is_linear and _linear_slope(config.activation) == 1.0:
        risk = risk_decomposition(params, include_noise=not exclude_noise)
        out = {"mse": risk.mse, "bias2": risk.bias2, "variance": risk.variance,
               "sigma_label": risk.sigma_label, "sigma_sample": risk.sigma_sample,
               "sigma_init": risk.sigma_init}
        out.update(variance_components(params).as_dict())
        return out
    risk = nonlinear_risk(params, config.activation, include_noise=not exclude_noise)
    return {"mse": risk.mse, "bias2": risk.bias2, "variance": risk.variance}


# ----------------------------------------------------------------------------
# Sweeps


def _record(axis, value, quantity, estimate, std, cfg: SimConfig) -> dict:
    return {
        "axis": axis, "value": float(value), "quantity": quantity,
        "estimate": float(estimate), "std": float(std), "runs": cfg.runs,
        "n": cfg.n, "d": cfg.d, "p": cfg.p, "lambda": float(cfg.lam),
        "alpha2": float(cfg.alpha2), "sigma2": float(cfg.sigma2),
        "activation": cfg.activation.name, "data_law": cfg.data_law.label, "seed": cfg.seed,
    }


def sweep(
    template: SimConfig,
    axis: str,
    values: Iterable[float],
    *,
    estimator: str = "functionals",
    threads: int = 1,
    lambda_rule: Callable[[SimConfig], float] | None = None,
) -> list[dict]:
    """Evaluate an estimator along ``axis`` and return long-format records.

    Cell ``c`` is seeded with ``(template.seed, c)``.  ``lambda_rule`` maps
    each cell's configuration to a penalty, e.g. the optimal one.
    """
    vals = [float(v) for v in values]
    if any(not math.isfinite(v) for v in vals):
        raise ValueError("sweep values must be finite")
    if vals != sorted(vals):
        raise ValueError("sweep values must be sorted")
    if estimator not in ("functionals", "mse"):
        raise ValueError("estimator must be 'functionals' or 'mse'")

    cells = []
    for c, v in enumerate(vals):
        cfg = replace(template.with_axis(axis, v), cell=c)
        if lambda_rule is not None:
            cfg = replace(cfg, lam=float(lambda_rule(cfg)))
        cells.append(cfg)

    def one(pair):
        c, cfg = pair
        try:
            if estimator == "mse":
                res = estimate_mse_direct(cfg)
                return [_record(axis, vals[c], "mse", res.mean, res.std, cfg)]
            res = estimate_functionals(cfg)
            return [_record(axis, vals[c], q, res.mean(q), res.std(q), cfg) for q in FUNCTIONAL_NAMES]
        except Exception as exc:  # attach cell identity, keep the original type
            raise type(exc)(f"sweep cell {c} ({axis}={vals[c]}): {exc}") from exc

    out: list[dict] = []
    for rows in _run_tasks(one, list(enumerate(cells)), threads):
        out.extend(rows)
    return out
