"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError (and its
subclasses) -> 3, ContractError / NumericError -> 4, TransportError -> 5.
"""


class NeurosemError(Exception):
    """Base class for all package errors."""


class ConfigError(NeurosemError):
    """Invalid or unknown configuration value."""


class DataError(NeurosemError):
    """Malformed input data (files, banks, datasets)."""


class DimensionError(DataError):
    """Shape or dimension mismatch between tensors or records."""


class SchemaError(DataError):
    """A record violates the file schema; carries line context where known."""


class CoverageError(DataError):
    """A caption bank is missing required (class, category) pairs."""


class BankLookupError(DataError):
    """An id or category is not present in the bank."""


class StratificationError(DataError):
    """A class has too few epochs to stratify across the requested splits."""


class LayoutError(DataError):
    """A channel required for rendering is missing from the layout."""


class ContractError(NeurosemError):
    """A documented precondition was violated by the caller."""


class NumericError(NeurosemError):
    """A numerical routine failed (non-finite values, divergence)."""


class TransportError(NeurosemError):
    """An endpoint request failed; carries the endpoint response if any."""

    def __init__(self, message, status=None, body=None):
        super().__init__(message)
        self.status = status
        self.body = body


class CalibrationWarning(UserWarning):
    """Emitted when an iterative calibration falls back to a default."""
