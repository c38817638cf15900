"""Exception hierarchy shared across the engine."""


class GeopatchError(Exception):
    """Base class for all engine errors."""


class EmptyIntersection(GeopatchError):
    """Two extents share no area (or no time overlap)."""


class OutOfDomain(GeopatchError):
    """Coordinate outside a projection's valid domain."""


class UnsupportedFormat(GeopatchError):
    """File uses a feature outside the supported raster subset."""


class CorruptFile(GeopatchError):
    """File violates its own format rules (bad magic, truncated data)."""


class IoError(GeopatchError):
    """Read or write failure while producing an output file."""


class ParseError(GeopatchError):
    """Malformed vector or config text."""


class UnsupportedGeometry(GeopatchError):
    """Vector feature is not a polygon."""


class NoScenesFound(GeopatchError):
    """Dataset root matched no parseable scenes."""


class QueryOutsideBounds(GeopatchError):
    """Query box does not intersect the dataset bounds."""


class PatchLargerThanExtent(GeopatchError):
    """Requested patch size exceeds the sampleable extent."""


class PatchLargerThanScene(GeopatchError):
    """No scene is large enough to hold the requested patch."""
