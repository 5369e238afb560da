"""Exception types shared across the package."""


class KppError(Exception):
    """Base class for errors raised by this package."""


class ImageLoadError(KppError):
    """An input image could not be read or decoded."""


class GeometryError(KppError):
    """Image, grid, or patch dimensions do not agree."""


class OracleError(KppError):
    """A reconstruction oracle failed to produce a result."""
