"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user input: a bad parameter, id, or config field."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class InfeasibleGridError(ConfigError):
    """Not enough distinct grid levels for the requested number of types."""


class UndefinedEstimateError(ValueError):
    """A statistic was requested for a (context, message) cell with no samples."""


class CoverGuardError(ValueError):
    """Exhaustive covering search refused because the instance is too large."""


class MalformedLogError(ValueError):
    """A logged interaction record violates the log schema."""
