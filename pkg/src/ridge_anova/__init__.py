"""Variance decompositions for ridge-fitted two-layer networks with orthogonal initialization."""

from .linear import (
    ModelParams,
    OrderedDecomposition,
    RiskDecomposition,
    VarianceComponents,
    added_noise_delta,
    check_monotonicity,
    one_layer_risk,
    optimal_lambda,
    ordered_decomposition,
    risk_at_optimum,
    risk_decomposition,
    variance_components,
)
from .nonlinear import ActivationSpec, NonlinearRisk, activation_moments, check_monotonicity_nl, nonlinear_risk
from .rmt import (
    AdjustedPenalty,
    ConvergenceError,
    DomainError,
    FixedPointSolution,
    ResolventMoments,
    adjusted_penalty,
    identity_residuals,
    moments_array,
    resolvent_moments,
    solve_fixed_point,
    theta1,
    theta2,
)

__all__ = [
    "activation_moments",
    "ActivationSpec",
    "added_noise_delta",
    "adjusted_penalty",
    "AdjustedPenalty",
    "check_monotonicity",
    "check_monotonicity_nl",
    "ConvergenceError",
    "DomainError",
    "FixedPointSolution",
    "identity_residuals",
    "ModelParams",
    "moments_array",
    "nonlinear_risk",
    "NonlinearRisk",
    "one_layer_risk",
    "optimal_lambda",
    "ordered_decomposition",
    "OrderedDecomposition",
    "resolvent_moments",
    "ResolventMoments",
    "risk_at_optimum",
    "risk_decomposition",
    "RiskDecomposition",
    "solve_fixed_point",
    "theta1",
    "theta2",
    "variance_components",
    "VarianceComponents",
]

__version__ = "0.1.0"
