"""Bounding boxes, resolutions, affine geotransforms, and grid-shape arithmetic.

All types are immutable values and every operation is pure, so they are safe
to share across worker threads without synchronization.

Spatial intervals are closed on the min edge and open on the max edge
([minx, maxx)), so abutting boxes share no pixels.  Time intervals are closed
on both ends so that point timestamps (mint == maxt) still match queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyIntersection


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Spatiotemporal extent: [minx, maxx) x [miny, maxy) x [mint, maxt].

    Spatial coordinates are in the units of an associated CRS (meters or
    degrees); times are seconds since the epoch, unbounded by default.
    """

    minx: float
    maxx: float
    miny: float
    maxy: float
    mint: float = -math.inf
    maxt: float = math.inf

    def __post_init__(self):
        if self.minx > self.maxx:
            raise ValueError(f"minx {self.minx} > maxx {self.maxx}")
        if self.miny > self.maxy:
            raise ValueError(f"miny {self.miny} > maxy {self.maxy}")
        if self.mint > self.maxt:
            raise ValueError(f"mint {self.mint} > maxt {self.maxt}")

    @property
    def width(self) -> float:
        return self.maxx - self.minx

    @property
    def height(self) -> float:
        return self.maxy - self.miny

    def area(self) -> float:
        return self.width * self.height

    def intersects(self, other: "BoundingBox") -> bool:
        """True when the boxes overlap spatially (open max edges) and in time."""
        return (
            self.minx < other.maxx
            and other.minx < self.maxx
            and self.miny < other.maxy
            and other.miny < self.maxy
            and self.mint <= other.maxt
            and other.mint <= self.maxt
        )

    def contains_point(self, x: float, y: float) -> bool:
        return self.minx <= x < self.maxx and self.miny <= y < self.maxy

    def with_time(self, mint: float, maxt: float) -> "BoundingBox":
        return BoundingBox(self.minx, self.maxx, self.miny, self.maxy, mint, maxt)


def bbox_intersection(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Componentwise interval intersection across x, y, and t.

    Raises EmptyIntersection when the boxes do not overlap; a zero-width or
    zero-height overlap counts as empty because max edges are open.
    """
    minx, maxx = max(a.minx, b.minx), min(a.maxx, b.maxx)
    miny, maxy = max(a.miny, b.miny), min(a.maxy, b.maxy)
    mint, maxt = max(a.mint, b.mint), min(a.maxt, b.maxt)
    if minx >= maxx or miny >= maxy or mint > maxt:
        raise EmptyIntersection(f"{a} and {b} do not overlap")
    return BoundingBox(minx, maxx, miny, maxy, mint, maxt)


def bbox_union(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Componentwise interval hull (smallest box containing both)."""
    return BoundingBox(
        min(a.minx, b.minx),
        max(a.maxx, b.maxx),
        min(a.miny, b.miny),
        max(a.maxy, b.maxy),
        min(a.mint, b.mint),
        max(a.maxt, b.maxt),
    )


@dataclass(frozen=True)
class Resolution:
    """Pixel size in CRS units per pixel; strictly positive."""

    xres: float
    yres: float

    def __post_init__(self):
        if not (self.xres > 0 and self.yres > 0):
            raise ValueError(f"resolution must be positive, got {self}")

    @classmethod
    def square(cls, res: float) -> "Resolution":
        return cls(res, res)


@dataclass(frozen=True)
class GridShape:
    """Pixel grid dimensions (rows x cols), each at least 1."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid shape must be >= 1x1, got {self}")


def grid_shape(b: BoundingBox, r: Resolution) -> GridShape:
    """Pixel counts covering box b at resolution r.

    Rounds to nearest (ties away from zero) so exactly-divisible bounds are
    stable under floating-point noise; clamped to at least one pixel.
    """
    cols = max(1, int(math.floor(b.width / r.xres + 0.5)))
    rows = max(1, int(math.floor(b.height / r.yres + 0.5)))
    return GridShape(rows, cols)


@dataclass(frozen=True)
class GeoTransform:
    """Affine map between pixel and world coordinates, north-up only.

    origin_x/origin_y locate the outer corner of pixel (row 0, col 0); dx is
    the positive x pixel size and dy the (negative) y pixel size.  Samples sit
    at pixel centers, i.e. fractional coordinates (row + 0.5, col + 0.5).
    """

    origin_x: float
    origin_y: float
    dx: float
    dy: float

    def __post_init__(self):
        if self.dx <= 0:
            raise ValueError(f"dx must be positive, got {self.dx}")
        if self.dy >= 0:
            raise ValueError(f"dy must be negative (north-up), got {self.dy}")

    def world_to_pixel(self, x, y):
        """World (x, y) -> fractional (row_f, col_f); accepts scalars or arrays."""
        return (y - self.origin_y) / self.dy, (x - self.origin_x) / self.dx

    def pixel_to_world(self, row_f, col_f):
        """Fractional (row_f, col_f) -> world (x, y); exact inverse of world_to_pixel."""
        return self.origin_x + col_f * self.dx, self.origin_y + row_f * self.dy

    def bounds(self, shape: GridShape) -> BoundingBox:
        """World extent of a grid of the given shape anchored at the origin."""
        x1, y1 = self.pixel_to_world(shape.rows, shape.cols)
        return BoundingBox(
            min(self.origin_x, x1), max(self.origin_x, x1),
            min(self.origin_y, y1), max(self.origin_y, y1),
        )

    @property
    def resolution(self) -> Resolution:
        return Resolution(abs(self.dx), abs(self.dy))


def world_to_pixel(t: GeoTransform, x, y):
    return t.world_to_pixel(x, y)


def pixel_to_world(t: GeoTransform, row_f, col_f):
    return t.pixel_to_world(row_f, col_f)
