"""Finite-time-singularity fits of hyperinflation CPI series.

Cagan (constant growth rate), linear-feedback and nonlinear-feedback models
with a Levenberg-Marquardt fitter, a synthetic-data simulator and a CLI.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ArgumentError,
    DomainError,
    NoConvergenceError,
    NoSingularityError,
    PoleError,
    RangeError,
    SingfitError,
    SingularityError,
    UnsupportedBranchError,
)
from .fitter import FitConfig, FitResult, compare_models, fit, profile_beta_tc  # noqa: E402
from .models import Family, ModelSpec, Objective, ParameterSet, StzParameterSet  # noqa: E402
from .series import Kind, ObservationSeries, SeriesMeta  # noqa: E402

__all__ = [
    "ArgumentError",
    "DomainError",
    "NoConvergenceError",
    "NoSingularityError",
    "PoleError",
    "RangeError",
    "SingfitError",
    "SingularityError",
    "UnsupportedBranchError",
    "FitConfig",
    "FitResult",
    "compare_models",
    "fit",
    "profile_beta_tc",
    "Family",
    "ModelSpec",
    "Objective",
    "ParameterSet",
    "StzParameterSet",
    "Kind",
    "ObservationSeries",
    "SeriesMeta",
]
