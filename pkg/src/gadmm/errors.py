"""Exception types shared across the package."""


class GadmmError(Exception):
    """Base class for all package errors."""


class InputError(GadmmError, ValueError):
    """Invalid data passed to an operation (bad shapes, non-finite entries, ...)."""


class ConfigError(GadmmError, ValueError):
    """Invalid solver or operator configuration."""


class NumericalError(GadmmError, RuntimeError):
    """A numerical routine failed to converge or produced unusable output."""


class ParseError(GadmmError, ValueError):
    """Malformed instance file.  Carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFormatError(GadmmError, ValueError):
    """File is syntactically valid but uses features outside the supported subset."""


class UnsupportedOperationError(GadmmError, RuntimeError):
    """Operation requires data the object does not carry (e.g. missing eval oracle)."""
