"""Exceptions shared across more than one module. Module-specific errors live
next to the code that raises them."""


class PatvarError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PatvarError):
    """A file or response could not be parsed; carries a location when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantViolation(PatvarError):
    """A domain object failed one of its structural invariants."""


class ProviderFailure(PatvarError):
    """An annotation provider returned malformed output or failed outright."""


class ConfigError(PatvarError):
    """Experiment configuration is missing, malformed, or inconsistent."""
