class LoopQRNGError(Exception):
    """Base class for package errors."""


class DomainError(LoopQRNGError, ValueError):
    """An argument lies outside the domain of the operation."""


class DataError(LoopQRNGError, ValueError):
    """Input data is malformed or inconsistent (unsorted stream, bad file, ...)."""


class InsufficientDataError(DataError):
    """Input is too short for an estimator's block structure."""
