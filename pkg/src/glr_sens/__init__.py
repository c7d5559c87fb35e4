"""Generalized likelihood ratio derivative estimators with quadrature oracles."""

from .calculus import DEFAULT_FD, FDConfig, SensitivityWeights, velocity, weight_d, weight_l, weights
from .errors import GLRError, ReplicationError
from .estimators import EstimateReport, EstimatorKind, estimate, glr_full_estimate
from .model import (
    Face,
    ParameterInterval,
    ParametricDensity,
    Performance,
    Problem,
    PushOut,
    Smoothness,
    Support,
    Transform,
)
from .problems import BUILTIN, builtin_toy_problem, get_problem
from .quadrature import QuadratureConfig
from .sampling import RngStream, summarize
from .validation import ValidationReport, validate_problem
from .verify import fd_derivative_oracle, glr_identity_check, quadrature_expectation

__version__ = "0.1.0"

__all__ = [
    "BUILTIN",
    "DEFAULT_FD",
    "EstimateReport",
    "EstimatorKind",
    "FDConfig",
    "Face",
    "GLRError",
    "ParameterInterval",
    "ParametricDensity",
    "Performance",
    "Problem",
    "PushOut",
    "QuadratureConfig",
    "ReplicationError",
    "RngStream",
    "SensitivityWeights",
    "Smoothness",
    "Support",
    "Transform",
    "ValidationReport",
    "builtin_toy_problem",
    "estimate",
    "fd_derivative_oracle",
    "get_problem",
    "glr_full_estimate",
    "glr_identity_check",
    "quadrature_expectation",
    "summarize",
    "validate_problem",
    "velocity",
    "weight_d",
    "weight_l",
    "weights",
]
