"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter violates a precondition (e.g. a non-SPD covariance)."""


class NumericError(ArithmeticError):
    """A numerical quantity left its valid domain (e.g. a non-positive variance)."""


class ConfigError(ValueError):
    """An experiment or agent configuration is invalid."""
