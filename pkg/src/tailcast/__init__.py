"""Optimal prediction of extreme exceedances in heavy-tailed linear time series."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    BacktestError,
    ConfigError,
    DataError,
    DegenerateLambdaWarning,
    DomainError,
    FitError,
    NonCausalError,
    TailcastError,
)
from .series import EmpiricalDistribution, Series, ecdf_eval, generalized_inverse  # noqa: E402

__all__ = [
    "__version__",
    "Series",
    "EmpiricalDistribution",
    "generalized_inverse",
    "ecdf_eval",
    "TailcastError",
    "DomainError",
    "DataError",
    "ConfigError",
    "NonCausalError",
    "FitError",
    "BacktestError",
    "DegenerateLambdaWarning",
]
