"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad schema, bad constants, bad schedule."""


class SlaterViolationError(ConfigError):
    """The declared strictly feasible point is not strictly feasible."""


class NumericsError(RuntimeError):
    """A run produced a non-finite state; carries the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step
