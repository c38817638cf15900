import json

import numpy as np
import pytest

from geopatch.geometry import BoundingBox, Resolution
from geopatch.patch import Patch
from geopatch.projection import crs_from_epsg
from geopatch.synth import SynthSpec, make_desk_fixture, synth_raster
from geopatch.tiff import write_geotiff

UTM19 = crs_from_epsg(32619)
ALBERS = crs_from_epsg(5070)


@pytest.fixture(scope="session")
def desk_fixture(tmp_path_factory):
    """Full benchmark fixture: 12 UTM scenes of 2048 px across 3 zones plus
    an Albers label raster covering them (the acceptance workload)."""
    out = tmp_path_factory.mktemp("desk_fixture")
    return make_desk_fixture(out, scene_px=2048, bands=4, scenes=12)


@pytest.fixture(scope="session")
def tiny_fixture(tmp_path_factory):
    """Small heterogeneous-CRS fixture: 6 UTM scenes + an Albers label raster."""
    out = tmp_path_factory.mktemp("tiny_fixture")
    info = make_desk_fixture(out, scene_px=192, bands=4, scenes=6)

    # 1-band label variant for mask-shaped samples
    from geopatch.tiff import parse_geotiff_header
    label_meta = parse_geotiff_header(out / "label" / "labels_5070.tif")
    (out / "label1").mkdir()
    spec = SynthSpec(crs=ALBERS, bounds=label_meta.bounds(),
                     res=Resolution.square(30), bands=1, encoding="coord_sum")
    synth_raster(spec, out / "label1" / "labels1_5070.tif")
    cfg = {
        "crs": "EPSG:5070", "res": 30, "compose": "intersection",
        "layers": [
            {"type": "raster", "role": "image", "root": "image", "glob": "*.tif",
             "resampling": "nearest"},
            {"type": "raster", "role": "mask", "root": "label1", "glob": "*.tif",
             "is_label": True},
        ],
    }
    (out / "dataset_mask1.json").write_text(json.dumps(cfg, indent=1))
    info["config_mask1"] = str(out / "dataset_mask1.json")
    return info


def constant_scene(path, value, bbox, crs=UTM19, res=30.0, bands=1,
                   sample_type="u16", nodata=None, valid=None):
    """Write a constant-valued scene; helper for mosaic and cache tests."""
    from geopatch.geometry import grid_shape
    shape = grid_shape(bbox, Resolution.square(res))
    samples = np.full((bands, shape.rows, shape.cols), value, dtype=np.float32)
    v = np.ones((shape.rows, shape.cols), bool) if valid is None else valid
    patch = Patch(samples, v, bbox, crs, Resolution.square(res),
                  sample_type=sample_type, nodata=nodata)
    write_geotiff(path, patch)
    return path
