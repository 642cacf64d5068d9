"""Inference on average treatment effects under covariate-adaptive randomization."""
from .core import (AteEstimate, BalanceProfile, CarError, Dataset, EmptyCellError, EstimatorKind,
                   GridMismatchError, LinearHypothesis, Observation, Scheme, SingularDesignError,
                   SingularStudentizerError, StratumCounts, TargetProportions, VarianceKind,
                   count_cells, validate_dataset)
from .estimators import ate_saturated, ate_sfe, fit_saturated, fit_sfe
from .rng import RngSeed

__version__ = "0.1.0"

__all__ = [
    "AteEstimate", "BalanceProfile", "CarError", "Dataset", "EmptyCellError", "EstimatorKind",
    "GridMismatchError", "LinearHypothesis", "Observation", "RngSeed", "Scheme",
    "SingularDesignError", "SingularStudentizerError", "StratumCounts", "TargetProportions",
    "VarianceKind", "ate_saturated", "ate_sfe", "count_cells", "fit_saturated", "fit_sfe",
    "validate_dataset",
]
