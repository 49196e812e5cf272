"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Inputs have inconsistent or invalid dimensions."""


class DegenerateVarianceError(ValueError):
    """A variance matrix has rank zero where a positive rank is required."""


class InvalidCorrelationError(ValueError):
    """Assembled correlation matrix is not positive semi-definite."""


class InsufficientDataError(ValueError):
    """Not enough observations to carry out the requested adjustment."""


class ConfigError(ValueError):
    """Invalid or missing run configuration."""
