"""Exception and warning types shared across the package."""


class TailcastError(Exception):
    """Base class for all package errors."""


class DomainError(TailcastError, ValueError):
    """An argument lies outside the domain of the operation."""


class DataError(TailcastError):
    """Input data is malformed, missing, or unusable."""


class ConfigError(TailcastError):
    """A configuration value is invalid."""


class NonCausalError(DomainError):
    """AR polynomial has a root on or inside the unit circle."""


class FitError(TailcastError):
    """An estimator failed to converge or produced an invalid fit.

    ``best`` holds the best iterate reached, when one exists, and
    ``diagnostics`` carries solver details.
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = dict(diagnostics or {})


class BacktestError(TailcastError):
    """Too many windows failed during a backtest run."""


class DegenerateLambdaWarning(UserWarning):
    """The numerator tail sum vanished, so the optimal precision is zero."""
