import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from ridge_anova.linear import ModelParams, optimal_lambda, risk_decomposition
from ridge_anova.nonlinear import (
    ActivationSpec,
    activation_moments,
    gaussian_expectation,
    nonlinear_risk,
    optimal_lambda_nl,
)
from ridge_anova.rmt import DomainError

from oracles import gaussian_mean
from strategies import model_params

CRELU = ActivationSpec.centered_relu()


def test_identity_moments():
    assert activation_moments("identity") == (1.0, 1.0)


def test_centered_relu_moments():
    mu, v = activation_moments(CRELU)
    assert mu == pytest.approx(0.5, abs=1e-8)
    assert v == pytest.approx(0.5 - 1 / (2 * math.pi), abs=1e-8)
    assert CRELU.offset == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)


def test_scaled_linear_moments():
    act = ActivationSpec.scaled_linear(2.0)
    assert (act.mu, act.v) == (2.0, 4.0)
    assert act.linearity_ratio == 1.0


def test_tanh_against_adaptive_quadrature():
    act = ActivationSpec.from_name("tanh")
    assert act.offset == pytest.approx(0.0, abs=1e-14)
    assert act.mu == pytest.approx(gaussian_mean(lambda z: z * math.tanh(z)), abs=1e-10)
    assert act.v == pytest.approx(gaussian_mean(lambda z: math.tanh(z) ** 2), abs=1e-10)
    assert act.v > act.mu**2


def test_custom_with_breakpoints_against_adaptive_quadrature():
    act = ActivationSpec.custom(lambda x: np.abs(x - 0.3), breakpoints=(0.3,))
    m = gaussian_mean(lambda z: abs(z - 0.3))
    assert act.offset == pytest.approx(m, abs=1e-10)
    assert act.mu == pytest.approx(gaussian_mean(lambda z: z * (abs(z - 0.3) - m)), abs=1e-10)
    assert act.v == pytest.approx(gaussian_mean(lambda z: (abs(z - 0.3) - m) ** 2), abs=1e-10)


def test_custom_rejects_uncentred():
    with pytest.raises(DomainError, match="mean"):
        ActivationSpec.custom(lambda x: x + 1.0, center=False)


def test_gaussian_expectation_polynomials():
    got = gaussian_expectation(lambda x: np.vstack([x**2, x**4, x**6]))
    assert np.allclose(got, [1, 3, 15], atol=1e-10)


def test_from_name_errors():
    with pytest.raises(ValueError):
        ActivationSpec.from_name("softsign")
    assert ActivationSpec.from_name("linear:3").mu == 3.0


@given(model_params())
def test_identity_reduces_to_linear(params):
    nl = nonlinear_risk(params, ActivationSpec.identity())
    lin = risk_decomposition(params)
    for name in ("bias2", "variance", "mse"):
        assert getattr(nl, name) == pytest.approx(getattr(lin, name), abs=1e-10)
    assert nl.mse_formula == pytest.approx(lin.mse, abs=1e-10)


@given(model_params(with_lambda=False))
def test_identity_optimum_reduces_to_linear(params):
    assert optimal_lambda_nl(params, ActivationSpec.identity()) == pytest.approx(optimal_lambda(params), rel=1e-14)


@given(model_params(), st.sampled_from(["crelu", "tanh", "linear:0.5"]))
def test_parts_sum_to_direct_mse(params, name):
    r = nonlinear_risk(params, ActivationSpec.from_name(name))
    assert r.mse == pytest.approx(r.mse_formula, abs=1e-10 * max(1.0, r.mse))
    assert r.bias2 >= 0 and r.variance >= -1e-12


@pytest.mark.parametrize("params", [ModelParams(1.0, 0.09, 0.8, 1.25), ModelParams(2.0, 0.5, 0.4, 3.0)])
@pytest.mark.parametrize("name", ["crelu", "tanh"])
def test_optimal_lambda_nl_minimizes_mse(params, name):
    act = ActivationSpec.from_name(name)
    res = optimize.minimize_scalar(
        lambda t: nonlinear_risk(params.with_lambda(math.exp(t)), act).mse,
        bounds=(-8, 4), method="bounded", options={"xatol": 1e-10},
    )
    assert math.exp(res.x) == pytest.approx(optimal_lambda_nl(params, act), rel=1e-4)


def test_default_penalty_is_optimum():
    params = ModelParams(1.0, 0.09, 0.8, 1.25)
    r = nonlinear_risk(params, CRELU)
    assert r.lam == r.lambda_star == optimal_lambda_nl(params, CRELU)


def test_degenerate_optimum():
    with pytest.raises(DomainError):
        nonlinear_risk(ModelParams(1.0, 0.0, 1.0, 1.0), ActivationSpec.identity())
    # ReLU keeps a positive optimum even without noise at pi = 1
    assert optimal_lambda_nl(ModelParams(1.0, 0.0, 1.0, 1.0), CRELU) > 0


def test_noise_floor_flag():
    params = ModelParams(1.0, 0.09, 0.8, 1.25, 0.01)
    assert nonlinear_risk(params, CRELU).mse - nonlinear_risk(params, CRELU, include_noise=False).mse == pytest.approx(0.09)
