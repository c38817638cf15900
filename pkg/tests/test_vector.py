import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from geopatch.errors import ParseError, UnsupportedGeometry
from geopatch.geometry import BoundingBox, Resolution
from geopatch.projection import crs_from_epsg
from geopatch.vector import PolygonSet, Polygon, parse_polygons, rasterize

WGS84 = crs_from_epsg(4326)


def fc(*features):
    return json.dumps({"type": "FeatureCollection", "features": list(features)})


def poly_feature(coords, burn=1, gtype="Polygon"):
    return {"type": "Feature", "geometry": {"type": gtype, "coordinates": coords},
            "properties": {"burn": burn}}


UNIT_SQUARE = [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]]


def point_in_polygon_oracle(poly: Polygon, x, y) -> bool:
    """Even-odd ray cast with exact arithmetic; boundary counts as inside."""
    fx, fy = Fraction(x), Fraction(y)
    crossings = 0
    for ring in poly.rings:
        for i in range(len(ring) - 1):
            (x1, y1), (x2, y2) = ring[i], ring[i + 1]
            a = (Fraction(x1), Fraction(y1))
            b = (Fraction(x2), Fraction(y2))
            # on-segment test (closed boundary)
            cross = (b[0] - a[0]) * (fy - a[1]) - (b[1] - a[1]) * (fx - a[0])
            if cross == 0 and min(a[0], b[0]) <= fx <= max(a[0], b[0]) \
                    and min(a[1], b[1]) <= fy <= max(a[1], b[1]):
                return True
            if a[1] == b[1]:
                continue
            ylo, yhi = (a, b) if a[1] < b[1] else (b, a)
            if ylo[1] <= fy < yhi[1]:
                xi = a[0] + (fy - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
                if xi > fx:
                    crossings += 1
    return crossings % 2 == 1


def oracle_mask(polys: PolygonSet, b: BoundingBox, r: Resolution) -> np.ndarray:
    from geopatch.geometry import grid_shape
    shape = grid_shape(b, r)
    out = np.zeros((shape.rows, shape.cols), dtype=np.float32)
    for poly in polys.polygons:
        for i in range(shape.rows):
            for j in range(shape.cols):
                cx = b.minx + (j + 0.5) * r.xres
                cy = b.maxy - (i + 0.5) * r.yres
                if point_in_polygon_oracle(poly, cx, cy):
                    out[i, j] = poly.burn_value
    return out


class TestParsing:
    def test_unit_square(self):
        ps = parse_polygons(fc(poly_feature(UNIT_SQUARE)))
        assert len(ps.polygons) == 1
        assert len(ps.polygons[0].rings) == 1
        assert len(ps.polygons[0].rings[0]) == 5

    def test_multipolygon_shares_burn_value(self):
        sq2 = [[[2, 2], [3, 2], [3, 3], [2, 3], [2, 2]]]
        ps = parse_polygons(fc(poly_feature([UNIT_SQUARE[0]], burn=7,
                                            gtype="Polygon"),
                               poly_feature([UNIT_SQUARE, sq2], burn=9,
                                            gtype="MultiPolygon")))
        assert [p.burn_value for p in ps.polygons] == [7, 9, 9]

    def test_linestring_unsupported(self):
        feat = {"type": "Feature",
                "geometry": {"type": "LineString", "coordinates": [[0, 0], [1, 1]]},
                "properties": {}}
        with pytest.raises(UnsupportedGeometry):
            parse_polygons(fc(feat))

    def test_malformed_json(self):
        with pytest.raises(ParseError):
            parse_polygons("{not json")

    def test_open_ring_rejected(self):
        bad = [[[0, 0], [1, 0], [1, 1], [0, 1]]]
        with pytest.raises(ParseError):
            parse_polygons(fc(poly_feature(bad)))

    def test_short_ring_rejected(self):
        bad = [[[0, 0], [1, 0], [0, 0]]]
        with pytest.raises(ParseError):
            parse_polygons(fc(poly_feature(bad)))

    def test_bowtie_exterior_rejected(self):
        bowtie = [[[0, 0], [2, 2], [2, 0], [0, 2], [0, 0]]]
        with pytest.raises(ParseError):
            parse_polygons(fc(poly_feature(bowtie)))

    def test_burn_property_name_is_configurable(self):
        feat = poly_feature(UNIT_SQUARE)
        feat["properties"] = {"class_id": 42}
        ps = parse_polygons(fc(feat), burn_property="class_id")
        assert ps.polygons[0].burn_value == 42

    def test_hole_ring_kept(self):
        donut = [UNIT_SQUARE[0],
                 [[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75],
                  [0.25, 0.25]]]
        ps = parse_polygons(fc(poly_feature(donut)))
        assert len(ps.polygons[0].rings) == 2


class TestRasterize:
    def test_unit_square_all_centers_inside(self):
        ps = parse_polygons(fc(poly_feature(UNIT_SQUARE)))
        patch = rasterize(ps, BoundingBox(0, 1, 0, 1), Resolution.square(0.5))
        assert patch.samples.shape == (1, 2, 2)
        assert (patch.samples == 1).all()

    def test_empty_set_all_zero(self):
        ps = PolygonSet((), WGS84)
        patch = rasterize(ps, BoundingBox(0, 4, 0, 4), Resolution.square(1))
        assert (patch.samples == 0).all()
        assert patch.valid.all()

    def test_right_triangle_matches_oracle(self):
        tri = [[[0, 0], [4, 0], [0, 4], [0, 0]]]
        ps = parse_polygons(fc(poly_feature(tri)))
        b = BoundingBox(0, 4, 0, 4)
        r = Resolution.square(1)
        got = rasterize(ps, b, r).samples[0]
        want = oracle_mask(ps, b, r)
        assert np.array_equal(got, want)

    def test_boundary_center_burned(self):
        # hypotenuse x + y = 2 passes exactly through the center (0.5, 1.5)
        tri = [[[0, 0], [2, 0], [0, 2], [0, 0]]]
        ps = parse_polygons(fc(poly_feature(tri)))
        got = rasterize(ps, BoundingBox(0, 2, 0, 2), Resolution.square(1)).samples[0]
        assert got[0, 0] == 1  # center (0.5, 1.5) on the edge
        assert got[1, 1] == 1  # center (1.5, 0.5) on the edge
        assert got[0, 1] == 0  # (1.5, 1.5) strictly outside

    def test_horizontal_edge_center_burned(self):
        sq = [[[0, 0.5], [2, 0.5], [2, 1], [0, 1], [0, 0.5]]]
        ps = parse_polygons(fc(poly_feature(sq)))
        got = rasterize(ps, BoundingBox(0, 2, 0, 2), Resolution.square(1)).samples[0]
        # bottom edge y = 0.5 runs exactly through centers (0.5, 0.5), (1.5, 0.5)
        assert got[1, 0] == 1 and got[1, 1] == 1

    def test_hole_not_burned(self):
        donut = [[[0, 0], [4, 0], [4, 4], [0, 4], [0, 0]],
                 [[1, 1], [3, 1], [3, 3], [1, 3], [1, 1]]]
        ps = parse_polygons(fc(poly_feature(donut)))
        got = rasterize(ps, BoundingBox(0, 4, 0, 4), Resolution.square(1)).samples[0]
        assert got[0, 0] == 1
        assert got[1, 1] == 0  # center (1.5, 2.5) inside the hole
        want = oracle_mask(ps, BoundingBox(0, 4, 0, 4), Resolution.square(1))
        assert np.array_equal(got, want)

    def test_later_polygon_overwrites(self):
        a = poly_feature(UNIT_SQUARE, burn=1)
        b = poly_feature([[[0.5, 0.5], [1.5, 0.5], [1.5, 1.5], [0.5, 1.5],
                           [0.5, 0.5]]], burn=2)
        ps = parse_polygons(fc(a, b))
        got = rasterize(ps, BoundingBox(0, 2, 0, 2),
                        Resolution.square(0.5)).samples[0]
        assert got[2, 0] == 1   # only in first square
        assert got[1, 1] == 2   # overlap takes the later value

    def test_translation_equivariance(self):
        tri = [[[0.2, 0.1], [3.7, 0.4], [1.1, 3.9], [0.2, 0.1]]]
        ps = parse_polygons(fc(poly_feature(tri)))
        base = rasterize(ps, BoundingBox(0, 4, 0, 4), Resolution.square(0.5))
        for dx, dy in ((17.0, -4.0), (1234.5, 987.25)):
            moved = PolygonSet(tuple(
                Polygon(tuple(tuple((x + dx, y + dy) for x, y in ring)
                              for ring in p.rings), p.burn_value)
                for p in ps.polygons), ps.crs)
            got = rasterize(moved, BoundingBox(0 + dx, 4 + dx, 0 + dy, 4 + dy),
                            Resolution.square(0.5))
            assert np.array_equal(got.samples, base.samples)


halves = st.integers(-8, 8).map(lambda v: v / 2)


@settings(max_examples=60, deadline=None)
@given(halves, halves, halves, halves, halves, halves)
def test_rasterize_equals_point_in_polygon_oracle(x1, y1, x2, y2, x3, y3):
    area2 = (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1)
    assume(area2 != 0)  # degenerate triangles rejected
    ring = [[x1, y1], [x2, y2], [x3, y3], [x1, y1]]
    ps = parse_polygons(fc(poly_feature([ring])))
    b = BoundingBox(-4, 4, -4, 4)
    r = Resolution.square(1)
    got = rasterize(ps, b, r).samples[0]
    want = oracle_mask(ps, b, r)
    assert np.array_equal(got, want)
