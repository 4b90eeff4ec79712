"""Exception types raised by pointer_sim."""

from __future__ import annotations


class PointerSimError(Exception):
    """Base class for all package errors."""


class ValidationError(PointerSimError, ValueError):
    """Invalid input. ``field`` names the offending document path when known."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class CapacityError(PointerSimError):
    """Hilbert-space dimension exceeds the configured cap."""


class ResolutionError(PointerSimError):
    """Theta quadrature too coarse for the accumulated phase."""

    def __init__(self, message: str, suggested_nodes: int):
        self.suggested_nodes = suggested_nodes
        super().__init__(f"{message} (suggest at least {suggested_nodes} nodes)")


class DegeneracyError(PointerSimError):
    """Pointer selection impossible, e.g. equal up/down actions."""


class UnsupportedProfileError(PointerSimError):
    """Operation requires a constant coupling profile."""
