"""Exception types shared across the toolkit."""


class ConfigurationError(ValueError):
    """A formulation, model, or run configuration is missing or malformed."""


class ParseError(ValueError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DegenerateGradientError(RuntimeError):
    """A requirement gradient is numerically zero where a direction is needed."""


class InvalidStartError(ValueError):
    """The objective or a constraint is non-finite at the requested start point."""
