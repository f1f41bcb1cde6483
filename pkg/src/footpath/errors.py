"""Exception hierarchy shared across the pipeline.

Each class maps to one process exit code in the CLI (see cli.EXIT_CODES).
"""
from __future__ import annotations


class FootpathError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FootpathError):
    """Input outside the documented domain (bad latitude, zoom, counts...)."""


class GeometryError(FootpathError):
    """Invalid or unprocessable geometry (open ring, self-intersection...)."""


class TransportError(FootpathError):
    """Network failure after exhausting retries."""


class ServerError(TransportError):
    """Tile server answered with a non-200 status."""

    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


class FormatError(TransportError):
    """Server payload decoded but violates the tile contract (size, mode)."""


class MissingInputError(FootpathError):
    """A required input file or directory does not exist."""
