"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An input fell outside the documented domain of an operation."""


class ConfigurationError(ValueError):
    """A configuration value violates a validity condition."""


class NumericalError(RuntimeError):
    """An iterative routine failed to converge.

    Carries the best iterate and its residual so callers can inspect
    how far the routine got.
    """

    def __init__(self, message: str, *, residual: float | None = None, iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate
