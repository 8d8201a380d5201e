"""Exception types shared across the package."""

from __future__ import annotations


class EulerLabError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EulerLabError, ValueError):
    """Raised for out-of-range parameters or malformed fields."""


class ResolutionError(EulerLabError):
    """Raised when a grid cannot resolve the requested scales or frequencies."""


class BlowupError(EulerLabError):
    """Raised when a time integration produces non-finite values.

    ``last_state`` holds the most recent finite state.
    """

    def __init__(self, message: str, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class InversionError(EulerLabError):
    """Raised when Newton inversion of a flow map fails at some targets."""

    def __init__(self, message: str, failed_indices=None):
        super().__init__(message)
        self.failed_indices = failed_indices


class ConfigError(EulerLabError):
    """Raised for malformed experiment configurations."""
