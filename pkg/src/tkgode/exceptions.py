"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand shapes do not conform to the requested operation."""


class ContractError(RuntimeError):
    """A documented precondition was violated by the caller."""


class ParseError(ValueError):
    """Malformed dataset input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValueError):
    """Invalid or unknown configuration value."""


class LeakageError(ContractError):
    """A forward pass tried to read a snapshot at or after the prediction time."""


class NumericError(FloatingPointError):
    """A computation produced a non-finite value."""
