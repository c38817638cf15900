import json

import numpy as np
import pytest

from conftest import constant_scene
from geopatch.cache import BlockCache
from geopatch.dataset import (
    IntersectionDataset,
    RasterLayerDataset,
    UnionDataset,
    VectorLayerDataset,
    intersect,
    load_dataset_config,
    open_raster_dataset,
    union,
)
from geopatch.errors import EmptyIntersection, NoScenesFound, QueryOutsideBounds
from geopatch.geometry import BoundingBox, Resolution, bbox_union, grid_shape
from geopatch.projection import crs_from_epsg, equivalent

UTM19 = crs_from_epsg(32619)
ALBERS = crs_from_epsg(5070)
R30 = Resolution.square(30)


class TestOpenRasterDataset:
    def test_bounds_are_hull_of_footprints(self, tiny_fixture):
        import pathlib
        d = open_raster_dataset(pathlib.Path(tiny_fixture["dir"]) / "image",
                                {"crs": "EPSG:5070"})
        hull = d.scene_footprints()[0]
        for fp in d.scene_footprints()[1:]:
            hull = bbox_union(hull, fp)
        assert d.bounds == hull
        assert len(d.scene_footprints()) == 6

    def test_scene_geometry_bounds_exact(self, tmp_path):
        # scaled scene with the reference origin; bounds derive exactly
        bbox = BoundingBox(186585, 186585 + 789 * 30, 4745415 - 801 * 30, 4745415)
        constant_scene(tmp_path / "s.tif", 3, bbox)
        d = open_raster_dataset(tmp_path)
        assert d.bounds.minx == 186585
        assert d.bounds.maxy == 4745415
        assert d.bounds.maxx == 186585 + 789 * 30

    def test_empty_directory_raises(self, tmp_path):
        with pytest.raises(NoScenesFound):
            open_raster_dataset(tmp_path)

    def test_lenient_mode_skips_bad_files(self, tmp_path):
        bbox = BoundingBox(0, 300, 0, 300)
        constant_scene(tmp_path / "good.tif", 1, bbox)
        (tmp_path / "junk.tif").write_bytes(b"not a tiff at all")
        with pytest.raises(Exception):
            open_raster_dataset(tmp_path)  # strict by default
        d = open_raster_dataset(tmp_path, {"strict": False})
        assert len(d.scenes) == 1

    def test_native_crs_and_res_defaults(self, tmp_path):
        constant_scene(tmp_path / "s.tif", 1, BoundingBox(0, 300, 0, 300))
        d = open_raster_dataset(tmp_path)
        assert equivalent(d.crs, UTM19)
        assert d.res == R30


class TestQuery:
    def test_single_scene_reduces_to_read_window(self, tmp_path):
        from geopatch.tiff import parse_geotiff_header
        from geopatch.warp import read_window, resample
        bbox = BoundingBox(300000, 300000 + 300 * 30, 4650000, 4650000 + 300 * 30)
        path = constant_scene(tmp_path / "s.tif", 11, bbox)
        d = open_raster_dataset(tmp_path)
        q = BoundingBox(bbox.minx + 900, bbox.minx + 3900,
                        bbox.miny + 600, bbox.miny + 3600)
        got = d.query(q)["image"]
        meta = parse_geotiff_header(path)
        want = resample(read_window(meta, q), UTM19, q, R30, "nearest")
        assert np.array_equal(got.samples, want.samples)
        assert np.array_equal(got.valid, want.valid)

    def test_mosaic_later_scene_wins(self, tmp_path):
        # two overlapping scenes; sorted filename order decides precedence
        a = BoundingBox(0, 3000, 0, 3000)
        b = BoundingBox(1500, 4500, 0, 3000)
        constant_scene(tmp_path / "scene_a.tif", 1, a)
        constant_scene(tmp_path / "scene_b.tif", 2, b)
        d = open_raster_dataset(tmp_path)
        q = BoundingBox(0, 4500, 0, 3000)
        patch = d.query(q)["image"]
        assert patch.valid.all()
        assert (patch.samples[0, :, :49] == 1).all()     # only scene_a
        assert (patch.samples[0, :, 50:100] == 2).all()  # overlap: b wins
        assert (patch.samples[0, :, 100:] == 2).all()    # only scene_b

    def test_query_outside_bounds_raises(self, tmp_path):
        constant_scene(tmp_path / "s.tif", 1, BoundingBox(0, 300, 0, 300))
        d = open_raster_dataset(tmp_path)
        with pytest.raises(QueryOutsideBounds):
            d.query(BoundingBox(10000, 10300, 10000, 10300))

    def test_all_invalid_in_coverage_hole_warns(self, tmp_path):
        constant_scene(tmp_path / "a.tif", 1, BoundingBox(0, 300, 0, 300))
        constant_scene(tmp_path / "b.tif", 2, BoundingBox(3000, 3300, 0, 300))
        d = open_raster_dataset(tmp_path)
        sample = d.query(BoundingBox(1000, 1300, 0, 300))
        assert sample.all_invalid
        assert sample.warning is not None

    def test_temporal_filter_selects_scene(self, tmp_path):
        box = BoundingBox(0, 300, 0, 300)
        constant_scene(tmp_path / "s_20190101.tif", 1, box)
        constant_scene(tmp_path / "s_20200101.tif", 2, box)
        d = open_raster_dataset(tmp_path, {
            "filename_regex": r"_(?P<date>\d{8})", "date_format": "%Y%m%d"})
        t2019 = d.scenes[0].time_range[0]
        t2020 = d.scenes[1].time_range[0]
        early = d.query(box.with_time(t2019 - 10, t2019 + 10))["image"]
        late = d.query(box.with_time(t2020 - 10, t2020 + 10))["image"]
        both = d.query(box)["image"]
        assert (early.samples == 1).all()
        assert (late.samples == 2).all()
        assert (both.samples == 2).all()  # later scene wins


class TestComposition:
    def test_listing_style_intersection_sample(self, tiny_fixture):
        d = load_dataset_config(tiny_fixture["config_mask1"])
        minx = d.bounds.minx + 0.4 * d.bounds.width
        miny = d.bounds.miny + 0.4 * d.bounds.height
        q = BoundingBox(minx, minx + 1000, miny, miny + 1000)  # 1 km^2 chip
        sample = d.query(q)
        shape = grid_shape(q, R30)
        assert sample["image"].samples.shape == (4, shape.rows, shape.cols)
        assert sample["mask"].samples.shape == (1, shape.rows, shape.cols)
        assert sample["image"].bbox == sample["mask"].bbox
        assert shape.rows == shape.cols == 33  # round(1000 / 30)

    def test_intersection_bounds_and_disjoint_error(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        (tmp_path / "c").mkdir()
        constant_scene(tmp_path / "a" / "s.tif", 1, BoundingBox(0, 3000, 0, 3000))
        constant_scene(tmp_path / "b" / "s.tif", 2, BoundingBox(1500, 4500, 0, 3000))
        constant_scene(tmp_path / "c" / "s.tif", 3,
                       BoundingBox(90000, 93000, 90000, 93000))
        da = open_raster_dataset(tmp_path / "a", {"role": "image"})
        db = open_raster_dataset(tmp_path / "b", {"role": "mask"})
        dc = open_raster_dataset(tmp_path / "c", {"role": "mask"})
        ds = intersect(da, db)
        assert ds.bounds == BoundingBox(1500, 3000, 0, 3000)
        with pytest.raises(EmptyIntersection):
            intersect(da, dc)

    def test_self_intersection_keeps_bounds(self, tmp_path):
        constant_scene(tmp_path / "s.tif", 1, BoundingBox(0, 3000, 0, 3000))
        d = open_raster_dataset(tmp_path)
        ds = intersect(d, d)
        assert ds.bounds == d.bounds
        sample = ds.query(BoundingBox(0, 900, 0, 900))
        assert len(sample.patches) == 2  # duplicate role disambiguated

    def test_union_mosaic_first_valid_wins(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        constant_scene(tmp_path / "a" / "s.tif", 1, BoundingBox(0, 3000, 0, 3000))
        constant_scene(tmp_path / "b" / "s.tif", 2, BoundingBox(1500, 4500, 0, 3000))
        da = open_raster_dataset(tmp_path / "a")
        db = open_raster_dataset(tmp_path / "b")
        ds = union(da, db)
        assert ds.bounds == BoundingBox(0, 4500, 0, 3000)
        patch = ds.query(BoundingBox(0, 4500, 0, 3000))["image"]
        assert patch.valid.all()
        assert (patch.samples[0, :, 50:100] == 1).all()  # overlap: first wins

    def test_operators_match_functions(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        constant_scene(tmp_path / "a" / "s.tif", 1, BoundingBox(0, 3000, 0, 3000))
        constant_scene(tmp_path / "b" / "s.tif", 2, BoundingBox(1500, 4500, 0, 3000))
        da = open_raster_dataset(tmp_path / "a", {"role": "image"})
        db = open_raster_dataset(tmp_path / "b", {"role": "mask"})
        assert isinstance(da & db, IntersectionDataset)
        assert isinstance(da | db, UnionDataset)
        assert (da & db).bounds == intersect(da, db).bounds

    def test_cross_crs_alignment_through_intersection(self, tiny_fixture):
        """Image (UTM zones) and label (Albers) stay pixel-aligned to ground."""
        from geopatch.projection import transform_arrays
        d = load_dataset_config(tiny_fixture["config"])
        rng = np.random.default_rng(17)
        modulus = 65536 * 30.0
        zones = [crs_from_epsg(c) for c in (32617, 32618, 32619)]

        def moddist(a, b):
            e = np.abs(a - b) % modulus
            return np.minimum(e, modulus - e)

        checked = 0
        for _ in range(12):
            minx = rng.uniform(d.bounds.minx, d.bounds.maxx - 64 * 30)
            miny = rng.uniform(d.bounds.miny, d.bounds.maxy - 64 * 30)
            q = BoundingBox(minx, minx + 64 * 30, miny, miny + 64 * 30)
            sample = d.query(q)
            img, msk = sample["image"], sample["mask"]
            if not img.valid.any():
                continue
            h, w = img.shape.rows, img.shape.cols
            xs = q.minx + (np.arange(w) + 0.5) * 30
            ys = q.maxy - (np.arange(h) + 0.5) * 30
            gx, gy = np.meshgrid(xs, ys)

            # mask encodes Albers ground directly
            ex = moddist(msk.samples[0] * 30, gx)[msk.valid]
            ey = moddist(msk.samples[1] * 30, gy)[msk.valid]
            assert float(ex.max(initial=0)) <= 15.0
            assert float(ey.max(initial=0)) <= 15.0

            # each image pixel encodes coordinates in the CRS of whichever
            # zone its source scene used; accept the best zone per pixel
            err = np.full((h, w), np.inf)
            for zone in zones:
                ux, uy = transform_arrays(ALBERS, zone, gx, gy)
                ez = np.maximum(moddist(img.samples[0] * 30, ux),
                                moddist(img.samples[1] * 30, uy))
                err = np.minimum(err, ez)
            assert float(err[img.valid].max(initial=0)) <= 15.0
            checked += 1
        assert checked >= 6


class TestVectorLayer:
    def test_vector_layer_in_composition(self, tmp_path):
        (tmp_path / "img").mkdir()
        (tmp_path / "vec").mkdir()
        box = BoundingBox(300000, 306000, 4650000, 4656000)
        constant_scene(tmp_path / "img" / "s.tif", 5, box)
        square = {"type": "FeatureCollection", "features": [{
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [[
                [301500, 4651500], [304500, 4651500], [304500, 4654500],
                [301500, 4654500], [301500, 4651500]]]},
            "properties": {"burn": 3}}]}
        (tmp_path / "vec" / "squares.json").write_text(json.dumps(square))
        cfg = {
            "crs": "EPSG:32619", "res": 30, "compose": "intersection",
            "layers": [
                {"type": "raster", "role": "image", "root": "img", "glob": "*.tif"},
                {"type": "vector", "role": "mask", "root": "vec", "glob": "*.json",
                 "source_crs": "EPSG:32619"},
            ],
        }
        (tmp_path / "ds.json").write_text(json.dumps(cfg))
        d = load_dataset_config(tmp_path / "ds.json")
        q = BoundingBox(300900, 303900, 4650900, 4653900)
        sample = d.query(q)
        assert sample["mask"].samples.shape == (1, 100, 100)
        m = sample["mask"].samples[0]
        assert m[60, 60] == 3.0   # inside the square
        assert m[5, 5] == 0.0     # outside
        assert sample["image"].samples.shape == (1, 100, 100)

    def test_vector_needs_resolution(self, tmp_path):
        (tmp_path / "vec").mkdir()
        (tmp_path / "vec" / "f.json").write_text(json.dumps(
            {"type": "FeatureCollection", "features": []}))
        with pytest.raises(ValueError):
            VectorLayerDataset(tmp_path / "vec")


class TestConfigLoading:
    def test_env_var_overrides_cache_bytes(self, tiny_fixture, monkeypatch):
        monkeypatch.setenv("GEOPATCH_CACHE_BYTES", "4096")
        cache = BlockCache(0)
        d = load_dataset_config(tiny_fixture["config"])
        ds_cache = d.d1.cache
        assert ds_cache.capacity_bytes == 4096

    def test_layers_share_one_cache(self, tiny_fixture):
        d = load_dataset_config(tiny_fixture["config"])
        assert d.d1.cache is d.d2.cache
