import numpy as np
import pytest

from ridge_anova import empirical
from ridge_anova.empirical import (
    PAPER_LAMBDA_GRID,
    empirical_grid,
    lambda_select,
    load_and_prepare,
    n_sweep,
    prepare,
    read_table,
    synthetic_table,
    write_synthetic_csv,
)
from ridge_anova.rmt import DomainError


@pytest.fixture(scope="module")
def data():
    return load_and_prepare("synthetic")


def test_candidate_grid():
    assert len(PAPER_LAMBDA_GRID) == 12
    assert PAPER_LAMBDA_GRID[0] == pytest.approx(1e-3) and PAPER_LAMBDA_GRID[-1] == 5.0
    assert {0.01, 0.02, 0.05, 1.0} <= {round(x, 12) for x in PAPER_LAMBDA_GRID}


def test_csv_round_trip(tmp_path):
    path = write_synthetic_csv(tmp_path / "syn.csv", size=50, dim=4)
    X, y, names = read_table(path)
    X0, y0, _ = synthetic_table(size=50, dim=4)
    assert np.array_equal(X, X0) and np.array_equal(y, y0)
    assert names == ("x0", "x1", "x2", "x3")
    X1, y1, names1 = read_table(path, response="x2")
    assert np.array_equal(y1, X0[:, 2]) and "x2" not in names1 and "y" in names1
    _, y2, _ = read_table(path, response=0)
    assert np.array_equal(y2, X0[:, 0])


@pytest.mark.parametrize("text,match", [
    ("a,b\n1,2\n3,x\n", r":3: non-numeric value 'x' in column 'b'"),
    ("a,b\n1,2\n3\n", r":3: expected 2 fields"),
    ("a,b\n", "no data rows"),
    ("", "empty file"),
])
def test_read_errors_name_row_and_column(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ValueError, match=match):
        read_table(path)


def test_unknown_response_column(tmp_path):
    path = write_synthetic_csv(tmp_path / "syn.csv", size=5, dim=2)
    with pytest.raises(ValueError, match="not in header"):
        read_table(path, response="target")


def test_standardisation_round_trip():
    X, y, _ = synthetic_table()
    train, test = prepare(X, y, seed=3)
    assert train.size == 1800 and test.size == 200
    assert np.allclose(train.features.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(train.features.std(axis=0), 1, atol=1e-12)
    both = np.vstack([train.raw_features(), test.raw_features()])
    order = np.random.default_rng(3).permutation(len(X))
    assert np.allclose(both, X[order], atol=1e-9)
    assert np.allclose(np.concatenate([train.raw_response(), test.raw_response()]), y[order], atol=1e-9)


def test_split_size_floor():
    X = np.random.default_rng(0).standard_normal((21263, 2))
    train, test = prepare(X, X[:, 0] + 1.0)
    assert (train.size, test.size) == (19136, 2127)


def test_split_is_reproducible():
    X, y, _ = synthetic_table(size=100, dim=3)
    a, _ = prepare(X, y, seed=5)
    b, _ = prepare(X, y, seed=5)
    c, _ = prepare(X, y, seed=6)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)


def test_prepare_rejects_bad_input():
    X = np.ones((20, 2))
    X[:, 1] = np.arange(20)
    with pytest.raises(ValueError, match="constant feature"):
        prepare(X, np.arange(20.0), names=["c", "k"])
    with pytest.raises(ValueError, match="NaN"):
        prepare(np.full((5, 1), np.nan), np.ones(5))
    with pytest.raises(ValueError):
        prepare(X, np.arange(20.0), split_fraction=1.0)


def test_single_model_has_no_variance(data):
    est = empirical_grid(*data, n=50, p=10, lam=0.01, n_s=1, n_i=1)
    assert est.variance == 0 and est.v_s == 0 and est.v_i == 0
    assert est.mse == est.bias2


def test_grid_identities(data):
    est = empirical_grid(*data, n=30, p=15, lam=0.01, n_s=6, n_i=5, seed=2)
    assert est.variance - (est.v_s + est.v_i + est.rest) == 0
    assert est.mse == pytest.approx(est.bias2 + est.variance, rel=1e-12)
    assert est.v_s + est.v_i <= est.variance + 1e-12


def test_test_row_permutation(data):
    train, test = data
    perm = np.random.default_rng(1).permutation(test.size)
    shuffled = type(test)(test.features[perm], test.response[perm], test.feature_names, test.means,
                          test.stds, test.response_mean, test.response_std, test.name)
    a = empirical_grid(train, test, n=30, p=15, lam=0.01, n_s=4, n_i=4).as_dict()
    b = empirical_grid(train, shuffled, n=30, p=15, lam=0.01, n_s=4, n_i=4).as_dict()
    for key in a:
        assert a[key] == pytest.approx(b[key], rel=1e-12, abs=1e-15)


def test_thread_invariance(data):
    a = empirical_grid(*data, n=30, p=15, lam=0.01, n_s=5, n_i=5, threads=1)
    b = empirical_grid(*data, n=30, p=15, lam=0.01, n_s=5, n_i=5, threads=4)
    assert a == b


def test_grid_domain_errors(data):
    with pytest.raises(DomainError):
        empirical_grid(*data, n=0, p=5, lam=0.01, n_s=2, n_i=2)
    with pytest.raises(DomainError):
        empirical_grid(*data, n=10, p=21, lam=0.01, n_s=2, n_i=2)


def test_single_candidate(data):
    lam, _ = lambda_select(*data, [0.3], n=30, p=10, n_s=2, n_i=2)
    assert lam == 0.3


def test_ties_go_to_larger_penalty(data, monkeypatch):
    real = empirical.empirical_grid

    def flat(*args, **kwargs):
        est = real(*args, **kwargs)
        return empirical.EmpiricalEstimates(1.0, *[getattr(est, f) for f in
                                                   ("variance", "bias2", "v_s", "v_i", "n", "p", "lam", "n_s", "n_i")])

    monkeypatch.setattr(empirical, "empirical_grid", flat)
    lam, _ = lambda_select(*data, [0.01, 0.5, 0.1], n=30, p=10, n_s=2, n_i=2)
    assert lam == 0.5


def test_empty_candidates(data):
    with pytest.raises(ValueError):
        lambda_select(*data, [], n=30, p=10)


@pytest.mark.parametrize("n", [40, 100])
def test_selection_near_theoretical_optimum(data, n):
    # signal/noise ratio of the generator is 1/0.25; p/d = 18/20
    target = 20 / n * (1 - 0.9 + 0.25)
    grid = sorted(PAPER_LAMBDA_GRID)
    lam, _ = lambda_select(*data, n=n, p=18, n_s=20, n_i=20, seed=0)
    below = max(g for g in grid if g <= target)
    above = min(g for g in grid if g >= target)
    k = grid.index(lam)
    assert grid.index(below) - 1 <= k <= grid.index(above) + 1


def test_n_sweep_shapes(data):
    rows = n_sweep(*data, [10, 20], 10, 0.01, n_s=3, n_i=3, reps=2)
    assert [(r.n, r.rep) for r in rows] == [(10, 0), (10, 1), (20, 0), (20, 1)]
    assert rows[0].estimates != rows[1].estimates
    sel = n_sweep(*data, [20], 10, "select", n_s=2, n_i=2, candidates=[0.01, 1.0])
    assert sel[0].lam in (0.01, 1.0)
