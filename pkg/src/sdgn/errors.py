"""Shared exception types.

The CLI maps ValidationError (and subclasses) to exit code 2 and
RuntimeFailure (and subclasses) to exit code 3.
"""

from __future__ import annotations


class SdgnError(Exception):
    """Base class for all package errors."""


class ValidationError(SdgnError):
    """Bad configuration, bad arguments, or malformed input data."""


class EventFileError(ValidationError):
    """Malformed event or graph file; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class RuntimeFailure(SdgnError):
    """A computation failed after inputs validated."""


class SimulationError(RuntimeFailure):
    """Simulation left its stable regime (e.g. intensity overflow)."""


class InsufficientDataError(RuntimeFailure):
    """Not enough data to compute the requested statistic."""
