"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InternalError(RuntimeError):
    """An internal consistency check failed (likely a bug, not user error)."""


class IntegrationError(RuntimeError):
    """Time stepping produced a non-finite state.

    Carries the step index at which the failure was detected.
    """

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class SupportCapError(ValueError):
    """Pooled support too large for the exact distance solver."""


class ConfigError(ValueError):
    """A scenario configuration failed validation."""
