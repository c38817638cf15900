"""geopatch: pixel-aligned patch sampling from heterogeneous geospatial layers."""

from .errors import (
    CorruptFile,
    EmptyIntersection,
    GeopatchError,
    IoError,
    NoScenesFound,
    OutOfDomain,
    ParseError,
    PatchLargerThanExtent,
    PatchLargerThanScene,
    QueryOutsideBounds,
    UnsupportedFormat,
    UnsupportedGeometry,
)
from .geometry import (
    BoundingBox,
    GeoTransform,
    GridShape,
    Resolution,
    bbox_intersection,
    bbox_union,
    grid_shape,
)
from .projection import (
    CrsDef,
    LonLat,
    ProjXY,
    crs_from_epsg,
    equivalent,
    parse_crs,
    project_forward,
    project_inverse,
    transform_bbox,
    transform_point,
)
from .cache import Block, BlockCache
from .patch import Patch
from .tiff import SceneMetadata, parse_geotiff_header, write_geotiff
from .synth import SynthSpec, make_desk_fixture, synth_raster
from .vector import PolygonSet, parse_polygons, rasterize
from .warp import read_window, resample, warp_scene
from .rtree import SpatialIndex
from .dataset import (
    GeoDataset,
    IntersectionDataset,
    RasterLayerDataset,
    Sample,
    UnionDataset,
    VectorLayerDataset,
    dataset_query,
    intersect,
    load_dataset_config,
    open_raster_dataset,
    union,
)
from .samplers import (
    Pcg32,
    SamplerConfig,
    grid_sampler,
    random_batch_sampler,
    random_sampler,
)
from .bench import BenchConfig, BenchReport, run_benchmark

__version__ = "0.1.0"
