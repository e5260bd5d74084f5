"""Error types raised by the toolkit."""

from typing import Optional


class DecompoundingError(Exception):
    """Base class for every toolkit error."""


class ParameterError(DecompoundingError, ValueError):
    """A numeric parameter is non-finite, out of range or inconsistent."""


class EmptyInputError(DecompoundingError, ValueError):
    """An operation received no data to work on."""


class ResolutionError(DecompoundingError, ValueError):
    """A wavelet resolution level cannot be represented."""


class InsufficientDataError(DecompoundingError, ValueError):
    """Too few nonzero increments for the requested operation."""


class DegenerateEstimateError(DecompoundingError, ValueError):
    """The data carry no information for the requested estimate."""


class ExperimentError(DecompoundingError, RuntimeError):
    """A Monte Carlo experiment produced no usable replicate."""


class StorageError(DecompoundingError, OSError):
    """Reading or writing a file failed."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path
