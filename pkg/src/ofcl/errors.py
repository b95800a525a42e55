"""Exception types shared across the package."""


class OfclError(Exception):
    """Base class for every error raised by this package."""


class UsageError(OfclError):
    """An operation was called in a way its contract forbids."""


class DegenerateInputError(OfclError):
    """Input is structurally valid but degenerate (empty set, zero vector)."""


class NumericalError(OfclError):
    """A computation produced a non-finite intermediate."""


class ParseError(OfclError):
    """A file could not be parsed. Carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GenerationError(OfclError):
    """Synthetic stream generation could not satisfy its constraints."""
