"""Exception types shared across the package."""


class DomainError(ValueError):
    """A function was evaluated outside its smooth domain (y = 0, u <= 0, ...)."""


class ConvexityError(DomainError):
    """The fundamental tensor is not positive definite at a sampled point."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class ConditioningError(DomainError):
    """A matrix that must be inverted is too badly conditioned."""


class JetOrderError(ValueError):
    """A derivative was requested beyond the truncation order of a jet."""


class InsufficientSamples(ValueError):
    """A classification was asked to decide from too few sample points."""


class IntegrationError(RuntimeError):
    """An ODE integration drifted beyond its invariant budget or left the chart."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
