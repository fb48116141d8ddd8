"""Variance decomposition of ridge-fitted two-layer predictors on tabular data.

Training subsamples ``X_i`` and Haar projections ``W_j`` are crossed into an
``n_s x n_i`` grid of fitted predictors, all evaluated on a held-out test set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rmt import DomainError
from .simulator import ROLE_W, ROLE_X, _run_tasks, ridge_fit, sample_orthogonal, stream

__all__ = [
    "Dataset",
    "EmpiricalEstimates",
    "PAPER_LAMBDA_GRID",
    "read_table",
    "synthetic_table",
    "write_synthetic_csv",
    "prepare",
    "load_and_prepare",
    "empirical_grid",
    "lambda_select",
    "n_sweep",
]

PAPER_LAMBDA_GRID = tuple(sorted(i * 10.0**-j for i in (1, 2, 5) for j in range(4)))
SYNTHETIC_SEED = 7


@dataclass(frozen=True)
class Dataset:
    """Standardized features and response plus the statistics used to standardize them."""

    features: np.ndarray
    response: np.ndarray
    feature_names: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray
    response_mean: float
    response_std: float
    name: str = "data"

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.response))):
            raise ValueError("dataset contains NaN or Inf")

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def raw_features(self) -> np.ndarray:
        return self.features * self.stds + self.means

    def raw_response(self) -> np.ndarray:
        return self.response * self.response_std + self.response_mean


@dataclass(frozen=True)
class EmpiricalEstimates:
    mse: float
    variance: float
    bias2: float
    v_s: float
    v_i: float
    n: int
    p: int
    lam: float
    n_s: int
    n_i: int

    @property
    def rest(self) -> float:
        return self.variance - self.v_s - self.v_i

    def as_dict(self) -> dict[str, float]:
        return {"mse": self.mse, "variance": self.variance, "bias2": self.bias2,
                "v_s": self.v_s, "v_i": self.v_i, "rest": self.rest}


def read_table(path: str | Path, response: str | int = -1) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Read a numeric CSV with a header row; returns ``(features, response, names)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                col = next(c for c, cell in enumerate(row) if not _is_float(cell))
                raise ValueError(
                    f"{path}:{line_no}: non-numeric value {row[col]!r} in column {header[col]!r}"
                ) from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    table = np.array(rows)
    if isinstance(response, str):
        if response not in header:
            raise ValueError(f"response column {response!r} not in header")
        col = header.index(response)
    else:
        col = response % len(header)
    names = tuple(h for c, h in enumerate(header) if c != col)
    return np.delete(table, col, axis=1), table[:, col], names


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def synthetic_table(
    size: int = 2000, dim: int = 20, alpha2: float = 1.0, sigma2: float = 0.25, seed: int = SYNTHETIC_SEED
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear data ``y = x @ theta + noise`` with ``theta ~ N(0, alpha2/dim)``.

    Returns ``(features, response, theta)``.
    """
    rng = np.random.default_rng(seed)
    theta = rng.normal(0.0, math.sqrt(alpha2 / dim), dim)
    X = rng.standard_normal((size, dim))
    y = X @ theta + rng.normal(0.0, math.sqrt(sigma2), size)
    return X, y, theta


def write_synthetic_csv(path: str | Path, **kwargs) -> Path:
    X, y, _ = synthetic_table(**kwargs)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{c}" for c in range(X.shape[1])] + ["y"])
        for row, target in zip(X, y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
    return path


def prepare(
    features: np.ndarray,
    response: np.ndarray,
    *,
    names: Sequence[str] | None = None,
    split_fraction: float = 0.9,
    seed: int = 0,
    name: str = "data",
) -> tuple[Dataset, Dataset]:
    """Shuffle, split and standardize with training statistics.

    The training part has ``floor(split_fraction * N)`` rows.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("features must be N x d and response length N")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("input contains NaN or Inf")
    if not 0 < split_fraction < 1:
        raise ValueError("split_fraction must lie in (0, 1)")
    names = tuple(names) if names is not None else tuple(f"x{c}" for c in range(X.shape[1]))
    order = np.random.default_rng(seed).permutation(X.shape[0])
    n_train = math.floor(split_fraction * X.shape[0])
    if n_train < 2 or n_train == X.shape[0]:
        raise ValueError("split leaves an empty or degenerate part")
    tr, te = order[:n_train], order[n_train:]

    means, stds = X[tr].mean(axis=0), X[tr].std(axis=0)
    flat = np.flatnonzero(stds == 0)
    if flat.size:
        raise ValueError(f"constant feature column(s): {', '.join(names[c] for c in flat)}")
    y_mean, y_std = float(y[tr].mean()), float(y[tr].std())
    if y_std == 0:
        raise ValueError("response is constant on the training split")

    def part(idx):
        return Dataset((X[idx] - means) / stds, (y[idx] - y_mean) / y_std, names,
                       means, stds, y_mean, y_std, name)

    return part(tr), part(te)


def load_and_prepare(
    path: str | Path, split_fraction: float = 0.9, seed: int = 0, *, response: str | int = -1
) -> tuple[Dataset, Dataset]:
    """Read ``path`` (or ``"synthetic"``) and return standardized (train, test)."""
    if str(path) == "synthetic":
        X, y, _ = synthetic_table()
        return prepare(X, y, split_fraction=split_fraction, seed=seed, name="synthetic")
    X, y, names = read_table(path, response)
    return prepare(X, y, names=names, split_fraction=split_fraction, seed=seed, name=Path(path).stem)


def _predictions(
    train: Dataset, test: Dataset, n: int, p: int, lam: float,
    n_s: int, n_i: int, seed: int, cell: int, threads: int,
) -> np.ndarray:
    """Test-set predictions of every grid model, shape ``(n_s, n_i, N_test)``."""
    if not 1 <= n <= train.size:
        raise DomainError(f"subsample size n={n} must lie in [1, {train.size}]")
    if not 1 <= p <= train.dim:
        raise DomainError(f"projection width p={p} must lie in [1, {train.dim}]")
    Ws = [sample_orthogonal(train.dim, p, stream(seed, cell, 0, ROLE_W, j)) for j in range(n_i)]
    test_proj = [test.features @ W.T for W in Ws]

    def row(i: int) -> np.ndarray:
        idx = stream(seed, cell, 0, ROLE_X, i).choice(train.size, size=n, replace=False)
        X, y = train.features[idx], train.response[idx]
        out = np.empty((n_i, test.size))
        for j, W in enumerate(Ws):
            try:
                out[j] = test_proj[j] @ ridge_fit(X, y, W, lam)
            except Exception as exc:
                raise type(exc)(f"grid cell (i={i}, j={j}): {exc}") from exc
        return out

    return np.stack(_run_tasks(row, list(range(n_s)), threads))


def empirical_grid(
    train: Dataset,
    test: Dataset,
    n: int,
    p: int,
    lam: float,
    n_s: int = 50,
    n_i: int = 50,
    seed: int = 0,
    *,
    cell: int = 0,
    threads: int = 1,
) -> EmpiricalEstimates:
    """MSE, variance, bias and the two main effects over an ``n_s x n_i`` model grid.

    Averages over test points are plain means; the test response is the
    standardized target, so estimates are in standardized units.
    """
    f = _predictions(train, test, n, p, lam, n_s, n_i, seed, cell, threads)
    y = test.response
    mean_f = f.mean(axis=(0, 1))
    mse = float(np.mean((f - y) ** 2))
    variance = float(np.mean((f - mean_f) ** 2))
    bias2 = float(np.mean((mean_f - y) ** 2))
    v_s = float(np.mean((f.mean(axis=1) - mean_f) ** 2))
    v_i = float(np.mean((f.mean(axis=0) - mean_f) ** 2))
    return EmpiricalEstimates(mse, variance, bias2, v_s, v_i, n, p, float(lam), n_s, n_i)


def lambda_select(
    train: Dataset,
    test: Dataset,
    candidates: Iterable[float] = PAPER_LAMBDA_GRID,
    *,
    n: int,
    p: int,
    n_s: int = 50,
    n_i: int = 50,
    seed: int = 0,
    cell: int = 0,
    threads: int = 1,
    tie_tol: float = 1e-12,
) -> tuple[float, EmpiricalEstimates]:
    """Candidate penalty with the lowest grid MSE; near-ties go to the larger penalty."""
    cands = sorted({float(c) for c in candidates}, reverse=True)
    if not cands:
        raise ValueError("candidate set is empty")
    best: tuple[float, EmpiricalEstimates] | None = None
    for lam in cands:
        est = empirical_grid(train, test, n, p, lam, n_s, n_i, seed, cell=cell, threads=threads)
        if best is None or est.mse < best[1].mse - tie_tol:
            best = (lam, est)
    return best


@dataclass
class SweepRow:
    n: int
    rep: int
    lam: float
    estimates: EmpiricalEstimates = field(repr=False)


def n_sweep(
    train: Dataset,
    test: Dataset,
    n_values: Sequence[int],
    p: int,
    lam: float | str,
    *,
    n_s: int = 50,
    n_i: int = 50,
    reps: int = 1,
    seed: int = 0,
    candidates: Iterable[float] = PAPER_LAMBDA_GRID,
    threads: int = 1,
) -> list[SweepRow]:
    """Grid estimates along subsample sizes; ``lam="select"`` picks the penalty per cell."""
    cands = tuple(candidates)
    rows = []
    for c, n in enumerate(n_values):
        for rep in range(reps):
            cell_seed = seed + rep
            if lam == "select":
                chosen, est = lambda_select(train, test, cands, n=n, p=p, n_s=n_s, n_i=n_i,
                                            seed=cell_seed, cell=c, threads=threads)
            else:
                chosen = float(lam)
                est = empirical_grid(train, test, n, p, chosen, n_s, n_i, cell_seed, cell=c, threads=threads)
            rows.append(SweepRow(int(n), rep, chosen, est))
    return rows
