"""Bayesian multiple imputation for high-dimensional multivariate normal data."""

__version__ = "0.1.0"

from .engine import ImputationResult, impute, initial_impute, run_chain, stationarity_check
from .prior import estimate_prior, log_marginal_likelihood, posterior_mode, scatter
from .types import (
    Dense,
    DiagPlusLowRank,
    ImputationConfig,
    IncompleteMatrix,
    MissingnessPattern,
    NonPositiveDefinite,
    PriorParams,
    TraceLog,
    TruthCells,
    ValidationError,
    patterns,
    validate,
)

__all__ = [
    "Dense",
    "DiagPlusLowRank",
    "ImputationConfig",
    "ImputationResult",
    "IncompleteMatrix",
    "MissingnessPattern",
    "NonPositiveDefinite",
    "PriorParams",
    "TraceLog",
    "TruthCells",
    "ValidationError",
    "estimate_prior",
    "impute",
    "initial_impute",
    "log_marginal_likelihood",
    "patterns",
    "posterior_mode",
    "run_chain",
    "scatter",
    "stationarity_check",
    "validate",
]
