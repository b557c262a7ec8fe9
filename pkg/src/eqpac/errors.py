"""Exception types shared across the package."""


class NonFreeOrbit(ValueError):
    """Raised when an input is fixed by a non-identity group element."""


class ShiftOutOfWindow(ValueError):
    """Raised when a shift would move nonzero support outside the padded window."""


class ClosureNotCertified(ValueError):
    """Raised when closure of a hypothesis family under averaging cannot be guaranteed."""


class NotInDomain(KeyError):
    """Raised when a tabular predictor is evaluated outside its enumerated inputs."""


class NonCanonicalRow(ValueError):
    """Raised when a representative sample contains a non-canonical input."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"row {index} is not a canonical representative")


class DatasetFormatError(ValueError):
    """Raised when a dataset CSV violates the schema."""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigError(ValueError):
    """Raised for unknown keys or malformed values in a run config."""


class NotIdempotent(ValueError):
    """Raised when a parameter projection fails the idempotency check."""
