import numpy as np

from geopatch.geometry import BoundingBox, Resolution, grid_shape
from geopatch.patch import Patch
from geopatch.projection import crs_from_epsg
from geopatch.tiff import write_geotiff


def constant_scene_far(path):
    """Scene far away from the bridge fixture, for disjoint-layer tests."""
    crs = crs_from_epsg(32619)
    bbox = BoundingBox(900000, 903000, 100000, 103000)
    shape = grid_shape(bbox, Resolution.square(30))
    samples = np.ones((1, shape.rows, shape.cols), dtype=np.float32)
    patch = Patch(samples, np.ones((shape.rows, shape.cols), bool), bbox, crs,
                  Resolution.square(30), sample_type="u16")
    write_geotiff(path, patch)
