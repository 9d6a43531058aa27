"""Exceptions raised by the hypertime toolkit.

All of them derive from ``ValueError`` so callers that only care about bad input can keep
catching the builtin.
"""


class HypertimeError(ValueError):
    """Base class for errors raised by this package."""


class DatasetError(HypertimeError):
    """Raised for malformed, empty or inconsistent measurement data."""


class SpectralError(HypertimeError):
    """Raised when a spectral query cannot be answered (e.g. every candidate excluded)."""


class ClusteringError(HypertimeError):
    """Raised when a mixture cannot be fitted to the given points."""


class ModelError(HypertimeError):
    """Raised for queries that do not match a model's layout or mode."""


class EvaluationError(HypertimeError):
    """Raised by grid, comparison and sweep helpers."""
