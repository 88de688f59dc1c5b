"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the domain of an operation (bad shape, empty ensemble, ...)."""


class NumericalError(ArithmeticError):
    """A computation failed numerically (singular system, blow-up, non-finite loss)."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
