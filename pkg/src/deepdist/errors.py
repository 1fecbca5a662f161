"""Exception hierarchy shared across the package."""


class DeepDistError(Exception):
    """Base class for all package errors."""


class DomainError(DeepDistError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(DeepDistError, ArithmeticError):
    """A numerical routine failed to converge or produced a non-finite value."""


class ShapeError(DeepDistError, ValueError):
    """Tensor shapes are incompatible for an operation."""


class DataError(DeepDistError, ValueError):
    """Input data is malformed (bad CSV rows, duplicates, non-positive prices)."""


class ConfigError(DeepDistError, ValueError):
    """A configuration value or flag combination is invalid."""


class InsufficientDataError(DeepDistError, ValueError):
    """Too few observations for a statistic to be meaningful."""


class EstimationError(DeepDistError, RuntimeError):
    """Maximum-likelihood estimation failed from every starting point."""
