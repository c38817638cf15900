"""Polygon feature parsing and scanline rasterization to label masks.

The vector subset is a JSON FeatureCollection of Polygon/MultiPolygon
geometries with an integer burn property.  Rasterization burns a pixel iff
its center is inside the polygon under the even-odd rule; centers exactly on
an edge count as inside (closed polygons), decided with exact rational
arithmetic so float ties cannot flip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ParseError, UnsupportedGeometry
from .geometry import BoundingBox, Resolution, grid_shape
from .patch import Patch
from .projection import CrsDef, crs_from_epsg


@dataclass(frozen=True)
class Polygon:
    """Closed rings (first exterior, rest holes) with an integer burn value."""

    rings: tuple
    burn_value: int


@dataclass(frozen=True)
class PolygonSet:
    polygons: tuple
    crs: CrsDef

    def bounds(self) -> BoundingBox:
        xs = [p[0] for poly in self.polygons for ring in poly.rings for p in ring]
        ys = [p[1] for poly in self.polygons for ring in poly.rings for p in ring]
        if not xs:
            raise ValueError("empty polygon set has no bounds")
        return BoundingBox(min(xs), max(xs), min(ys), max(ys))


def _segments(ring):
    return [(ring[i], ring[i + 1]) for i in range(len(ring) - 1)]


def _proper_crossing(a, b, c, d) -> bool:
    """True when segment ab strictly crosses cd (exact arithmetic)."""
    ax, ay = Fraction(a[0]), Fraction(a[1])
    bx, by = Fraction(b[0]), Fraction(b[1])
    cx, cy = Fraction(c[0]), Fraction(c[1])
    dx, dy = Fraction(d[0]), Fraction(d[1])

    def orient(px, py, qx, qy, rx, ry):
        return (qx - px) * (ry - py) - (qy - py) * (rx - px)

    o1 = orient(ax, ay, bx, by, cx, cy)
    o2 = orient(ax, ay, bx, by, dx, dy)
    o3 = orient(cx, cy, dx, dy, ax, ay)
    o4 = orient(cx, cy, dx, dy, bx, by)
    return (o1 > 0) != (o2 > 0) and (o3 > 0) != (o4 > 0) and 0 not in (o1, o2, o3, o4)


def _validate_exterior(ring, where: str):
    """Reject self-intersecting exteriors via a sort-and-sweep over segments."""
    segs = _segments(ring)
    order = sorted(range(len(segs)), key=lambda i: min(segs[i][0][0], segs[i][1][0]))
    active: list[int] = []
    for i in order:
        si = segs[i]
        xi_min = min(si[0][0], si[1][0])
        xi_max = max(si[0][0], si[1][0])
        active = [j for j in active if max(segs[j][0][0], segs[j][1][0]) >= xi_min]
        for j in active:
            adjacent = abs(i - j) in (1, len(segs) - 1)
            if not adjacent and _proper_crossing(*si, *segs[j]):
                raise ParseError(f"{where}: exterior ring self-intersects")
        if xi_max >= xi_min:
            active.append(i)


def _check_ring(ring, where: str):
    if len(ring) < 4:
        raise ParseError(f"{where}: ring has {len(ring)} points, need >= 4")
    if tuple(ring[0]) != tuple(ring[-1]):
        raise ParseError(f"{where}: ring is not closed")
    for p in ring:
        if len(p) < 2:
            raise ParseError(f"{where}: bad coordinate {p!r}")


def parse_polygons(text: str, burn_property: str = "burn",
                   crs: CrsDef | None = None) -> PolygonSet:
    """Parse a FeatureCollection of polygons with integer burn labels."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError("expected a FeatureCollection object")

    polygons = []
    for k, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        props = feat.get("properties") or {}
        try:
            burn = int(props.get(burn_property, 1))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"feature {k}: burn property is not an integer") from exc
        if gtype == "Polygon":
            parts = [geom.get("coordinates", [])]
        elif gtype == "MultiPolygon":
            parts = geom.get("coordinates", [])
        else:
            raise UnsupportedGeometry(f"feature {k}: geometry {gtype!r} not supported")
        for p, rings in enumerate(parts):
            where = f"feature {k} part {p}"
            if not rings:
                raise ParseError(f"{where}: no rings")
            for ring in rings:
                _check_ring(ring, where)
            _validate_exterior(rings[0], where)
            clean = tuple(tuple((float(pt[0]), float(pt[1])) for pt in ring)
                          for ring in rings)
            polygons.append(Polygon(clean, burn))
    return PolygonSet(tuple(polygons), crs if crs is not None else crs_from_epsg(4326))


def _frac_ceil(f: Fraction) -> int:
    return -((-f.numerator) // f.denominator)


def _frac_floor(f: Fraction) -> int:
    return f.numerator // f.denominator


def _burn_span(mask, i, a, z, fx_min, fxres, w):
    """Burn pixels in row i whose center x lies in the closed span [a, z]."""
    j_lo = (a - fx_min) / fxres - Fraction(1, 2)
    j_hi = (z - fx_min) / fxres - Fraction(1, 2)
    j0 = max(0, _frac_ceil(j_lo))
    j1 = min(w - 1, _frac_floor(j_hi))
    if j0 <= j1:
        mask[i, j0:j1 + 1] = True


def _fill_polygon(mask: np.ndarray, poly: Polygon, b: BoundingBox, r: Resolution):
    """Even-odd scanline fill at pixel centers, boundary centers included."""
    h, w = mask.shape
    fx_min = Fraction(b.minx)
    fy_max = Fraction(b.maxy)
    fxres = Fraction(r.xres)
    fyres = Fraction(r.yres)
    edges = []
    horizontals = []
    for ring in poly.rings:
        for (x1, y1), (x2, y2) in _segments(ring):
            e = (Fraction(x1), Fraction(y1), Fraction(x2), Fraction(y2))
            if e[1] == e[3]:
                horizontals.append(e)
            else:
                edges.append(e)

    for i in range(h):
        yc = fy_max - fyres * Fraction(2 * i + 1, 2)
        crossings = []
        for x1, y1, x2, y2 in edges:
            ylo, yhi = (y1, y2) if y1 < y2 else (y2, y1)
            # half-open vertical rule so shared vertices count once
            if ylo <= yc < yhi:
                crossings.append(x1 + (yc - y1) * (x2 - x1) / (y2 - y1))
        crossings.sort()
        for a, z in zip(crossings[::2], crossings[1::2]):
            # closed span: centers exactly on a crossing burn too
            _burn_span(mask, i, a, z, fx_min, fxres, w)
        # closed-boundary rule: any center exactly on an edge is burned,
        # including tangent vertices the parity pass cannot see
        for x1, y1, x2, y2 in edges:
            ylo, yhi = (y1, y2) if y1 < y2 else (y2, y1)
            if ylo <= yc <= yhi:
                xi = x1 + (yc - y1) * (x2 - x1) / (y2 - y1)
                j = (xi - fx_min) / fxres - Fraction(1, 2)
                if j.denominator == 1 and 0 <= j.numerator < w:
                    mask[i, j.numerator] = True
        for x1, y1, x2, y2 in horizontals:
            if y1 == yc:
                a, z = (x1, x2) if x1 < x2 else (x2, x1)
                _burn_span(mask, i, a, z, fx_min, fxres, w)


def rasterize(polys: PolygonSet, b: BoundingBox, r: Resolution,
              fill_value: float = 0.0) -> Patch:
    """Burn polygons into a 1-band integer mask on the grid (b, r).

    Later polygons overwrite earlier ones; background stays 0.  The query box
    must already be expressed in the polygon set's CRS.
    """
    shape = grid_shape(b, r)
    out = np.zeros((1, shape.rows, shape.cols), dtype=np.float32)
    for poly in polys.polygons:
        mask = np.zeros((shape.rows, shape.cols), dtype=bool)
        _fill_polygon(mask, poly, b, r)
        out[0][mask] = float(poly.burn_value)
    valid = np.ones((shape.rows, shape.cols), dtype=bool)
    return Patch(out, valid, b, polys.crs, r, sample_type="u16",
                 fill_value=fill_value)
