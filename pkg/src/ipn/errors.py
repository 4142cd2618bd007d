"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class ConfigError(ValueError):
    """Inconsistent or invalid model/experiment configuration."""


class SolverError(RuntimeError):
    """A numerical routine failed to converge."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
