"""Geospatial datasets indexed by spatial coordinates.

A dataset answers bounding-box queries with pixel-aligned patches in its
declared CRS/resolution.  Raster layers mosaic intersecting scenes
(later-in-sort-order wins on valid pixels); vector layers rasterize polygon
masks; intersection and union compose two datasets over a shared grid.

Scene discovery sorts filenames lexicographically, which makes mosaicking and
sampling deterministic for a fixed directory.  Datasets are immutable after
opening; the shared BlockCache is the only mutable state, and it locks
internally, so query() may be called from many workers at once.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from .cache import BlockCache
from .errors import (EmptyIntersection, GeopatchError, NoScenesFound,
                     QueryOutsideBounds)
from .geometry import BoundingBox, Resolution, bbox_intersection, bbox_union, grid_shape
from .patch import Patch, full_invalid
from .projection import CrsDef, equivalent, parse_crs, transform_bbox_finite
from .rtree import SpatialIndex
from .tiff import parse_geotiff_header
from .vector import parse_polygons, rasterize
from .warp import BILINEAR, NEAREST, resample, warp_scene

log = logging.getLogger(__name__)

DEFAULT_CACHE_BYTES = 128 * 1024 * 1024
CACHE_ENV_VAR = "GEOPATCH_CACHE_BYTES"


@dataclass
class Sample:
    """Pixel-aligned patches by layer role, as returned by a query."""

    patches: dict
    bbox: BoundingBox
    crs: CrsDef
    warning: str | None = None

    def __post_init__(self):
        shapes = {p.shape for p in self.patches.values()}
        if len(shapes) > 1:
            raise ValueError(f"patches are not pixel-aligned: {shapes}")

    @property
    def all_invalid(self) -> bool:
        return all(p.all_invalid() for p in self.patches.values())

    def __getitem__(self, role: str) -> Patch:
        return self.patches[role]


class GeoDataset:
    """Queryable layer (raster, vector, or composition).

    Subclasses provide bounds/crs/res plus _query_grid, which answers on an
    arbitrary destination grid so compositions can retarget constituents.
    """

    bounds: BoundingBox
    crs: CrsDef
    res: Resolution
    roles: tuple

    def query(self, b: BoundingBox) -> Sample:
        """Pixel-aligned patches covering b, in the dataset's CRS/resolution."""
        if not b.intersects(self.bounds):
            raise QueryOutsideBounds(f"{b} does not intersect {self.bounds}")
        patches = self._query_grid(b, self.crs, self.res)
        sample = Sample(patches, b, self.crs)
        if sample.all_invalid:
            sample.warning = "no valid source coverage in query window"
        return sample

    def _query_grid(self, b: BoundingBox, crs: CrsDef, res: Resolution) -> dict:
        raise NotImplementedError

    def scene_footprints(self) -> list:
        """Per-scene bounds in the dataset CRS, sorted by discovery order."""
        raise NotImplementedError

    def __and__(self, other: "GeoDataset") -> "IntersectionDataset":
        return IntersectionDataset(self, other)

    def __or__(self, other: "GeoDataset") -> "UnionDataset":
        return UnionDataset(self, other)


class RasterLayerDataset(GeoDataset):
    """Directory of georeferenced scenes behaving as one spatial layer."""

    def __init__(self, root, glob: str = "*.tif", crs: CrsDef | None = None,
                 res: Resolution | None = None, role: str = "image",
                 resampling: str | None = None, is_label: bool = False,
                 filename_regex: str | None = None, date_format: str | None = None,
                 cache: BlockCache | None = None, fill_value: float = 0.0,
                 strict: bool = True):
        root = Path(root)
        if not root.is_dir():
            raise NoScenesFound(f"{root} is not a directory")
        files = sorted(root.glob(glob))
        scenes = []
        for f in files:
            try:
                scenes.append(parse_geotiff_header(f, filename_regex, date_format))
            except GeopatchError as exc:
                if strict:
                    raise
                log.warning("skipping %s: %s", f, exc)
        if not scenes:
            raise NoScenesFound(f"no scenes under {root} match {glob!r}")
        bands = {s.bands for s in scenes}
        if len(bands) != 1:
            raise ValueError(f"scenes disagree on band count: {sorted(bands)}")

        self.scenes = scenes
        self.bands = bands.pop()
        self.role = role
        self.roles = (role,)
        self.is_label = is_label
        self.cache = cache
        self.fill_value = fill_value
        self.crs = crs if crs is not None else scenes[0].crs
        self.res = res if res is not None else scenes[0].resolution
        if is_label:
            # averaging class ids would be meaningless
            self.resampling = NEAREST
        elif resampling is not None:
            self.resampling = resampling
        else:
            self.resampling = NEAREST if scenes[0].sample_type != "f32" else BILINEAR

        self._footprints = []
        entries = []
        for i, scene in enumerate(scenes):
            fp = transform_bbox_finite(scene.crs, self.crs, scene.bounds())
            if fp is None:
                log.warning("scene %s does not map into the dataset CRS", scene.path)
                continue
            self._footprints.append(fp)
            entries.append((fp, i))
        if not entries:
            raise NoScenesFound(f"no scene under {root} maps into {self.crs}")
        self.bounds = self._footprints[0]
        for fp in self._footprints[1:]:
            self.bounds = bbox_union(self.bounds, fp)
        self.index = SpatialIndex(entries)

    def scene_footprints(self):
        return list(self._footprints)

    def _query_grid(self, b, crs, res):
        b_index = b if equivalent(crs, self.crs) else \
            transform_bbox_finite(crs, self.crs, b)
        ids = self.index.query(b_index) if b_index is not None else []
        contributing = []
        for i in ids:
            patch = warp_scene(self.scenes[i], crs, b, res,
                               self.resampling, self.cache, self.fill_value)
            if not patch.all_invalid():
                contributing.append(patch)
        if not contributing:
            return {self.role: full_invalid(self.bands, b, crs, res,
                                            self.scenes[0].sample_type,
                                            self.fill_value)}
        # later scene wins wherever it has valid pixels
        out = contributing[0]
        for patch in contributing[1:]:
            out.samples[:, patch.valid] = patch.samples[:, patch.valid]
            out.valid |= patch.valid
            out.sample_type = patch.sample_type
        return {self.role: out}


class VectorLayerDataset(GeoDataset):
    """Polygon files rasterized to integer label masks on demand."""

    def __init__(self, root, glob: str = "*.json", crs: CrsDef | None = None,
                 res: Resolution | None = None, role: str = "mask",
                 burn_property: str = "burn", source_crs: CrsDef | None = None,
                 fill_value: float = 0.0):
        root = Path(root)
        if not root.is_dir():
            raise NoScenesFound(f"{root} is not a directory")
        files = sorted(root.glob(glob))
        if not files:
            raise NoScenesFound(f"no vector files under {root} match {glob!r}")
        if res is None:
            raise ValueError("vector layers need an explicit resolution")
        self.source_crs = source_crs if source_crs is not None else \
            (crs if crs is not None else parse_crs("EPSG:4326"))
        sets = [parse_polygons(f.read_text(), burn_property, self.source_crs)
                for f in files]
        self.polygons = tuple(p for s in sets for p in s.polygons)
        self.role = role
        self.roles = (role,)
        self.res = res
        self.crs = crs if crs is not None else self.source_crs
        self.fill_value = fill_value

        from .vector import PolygonSet
        self._set = PolygonSet(self.polygons, self.source_crs)
        native = self._set.bounds()
        fp = transform_bbox_finite(self.source_crs, self.crs, native)
        if fp is None:
            raise NoScenesFound(f"polygons under {root} do not map into {self.crs}")
        self.bounds = fp
        self._footprints = [fp]

    def scene_footprints(self):
        return list(self._footprints)

    def _query_grid(self, b, crs, res):
        if equivalent(crs, self.source_crs):
            return {self.role: rasterize(self._set, b, res, self.fill_value)}
        src_box = transform_bbox_finite(crs, self.source_crs, b)
        if src_box is None:
            return {self.role: full_invalid(1, b, crs, res, "u16", self.fill_value)}
        shape = grid_shape(b, res)
        src_res = Resolution(max(src_box.width / shape.cols, 1e-12),
                             max(src_box.height / shape.rows, 1e-12))
        mask = rasterize(self._set, src_box, src_res, self.fill_value)
        return {self.role: resample(mask, crs, b, res, NEAREST, self.fill_value)}


def _retarget_bounds(d: GeoDataset, crs: CrsDef) -> BoundingBox:
    fp = transform_bbox_finite(d.crs, crs, d.bounds)
    if fp is None:
        raise EmptyIntersection(f"{d.bounds} does not map into {crs}")
    return fp


def _disambiguated_roles(d1: GeoDataset, d2: GeoDataset):
    """Role list plus a rename map for d2 roles colliding with d1's."""
    renames = {}
    roles = list(d1.roles)
    for r in d2.roles:
        name = r
        k = 2
        while name in roles:
            name = f"{r}_{k}"
            k += 1
        if name != r:
            renames[r] = name
        roles.append(name)
    return tuple(roles), renames


class IntersectionDataset(GeoDataset):
    """Sample where both constituents have data; one patch per role."""

    def __init__(self, d1: GeoDataset, d2: GeoDataset,
                 crs: CrsDef | None = None, res: Resolution | None = None):
        self.d1, self.d2 = d1, d2
        self.crs = crs if crs is not None else d1.crs
        self.res = res if res is not None else d1.res
        self.roles, self._renames = _disambiguated_roles(d1, d2)
        self.bounds = bbox_intersection(_retarget_bounds(d1, self.crs),
                                        _retarget_bounds(d2, self.crs))

    def scene_footprints(self):
        # first constituent drives locality; clip to where both layers exist
        out = []
        for fp in self.d1.scene_footprints():
            fp = fp if equivalent(self.d1.crs, self.crs) else \
                transform_bbox_finite(self.d1.crs, self.crs, fp)
            if fp is None or not fp.intersects(self.bounds):
                continue
            out.append(bbox_intersection(fp, self.bounds))
        return out

    def _query_grid(self, b, crs, res):
        patches = dict(self.d1._query_grid(b, crs, res))
        for role, patch in self.d2._query_grid(b, crs, res).items():
            patches[self._renames.get(role, role)] = patch
        return patches


class UnionDataset(GeoDataset):
    """Sample anywhere either constituent has data; shared roles mosaic."""

    def __init__(self, d1: GeoDataset, d2: GeoDataset,
                 crs: CrsDef | None = None, res: Resolution | None = None):
        self.d1, self.d2 = d1, d2
        self.crs = crs if crs is not None else d1.crs
        self.res = res if res is not None else d1.res
        # union mosaics shared roles rather than renaming them
        self.roles = tuple(d1.roles) + tuple(r for r in d2.roles
                                             if r not in d1.roles)
        self.bounds = bbox_union(_retarget_bounds(d1, self.crs),
                                 _retarget_bounds(d2, self.crs))

    def scene_footprints(self):
        out = []
        for d in (self.d1, self.d2):
            for fp in d.scene_footprints():
                fp = fp if equivalent(d.crs, self.crs) else \
                    transform_bbox_finite(d.crs, self.crs, fp)
                if fp is not None:
                    out.append(fp)
        return out

    def _query_grid(self, b, crs, res):
        p1 = self.d1._query_grid(b, crs, res)
        p2 = self.d2._query_grid(b, crs, res)
        merged = {}
        for role in self.roles:
            if role in p1 and role in p2:
                # first valid pixel wins in constituent order
                first, second = p1[role], p2[role]
                take = ~first.valid & second.valid
                first.samples[:, take] = second.samples[:, take]
                first.valid |= take
                merged[role] = first
            else:
                merged[role] = p1.get(role) or p2[role]
        return merged


def intersect(d1: GeoDataset, d2: GeoDataset, crs=None, res=None) -> IntersectionDataset:
    return IntersectionDataset(d1, d2, crs, res)


def union(d1: GeoDataset, d2: GeoDataset, crs=None, res=None) -> UnionDataset:
    return UnionDataset(d1, d2, crs, res)


def dataset_query(d: GeoDataset, b: BoundingBox) -> Sample:
    return d.query(b)


def open_raster_dataset(root, config: dict | None = None,
                        cache: BlockCache | None = None) -> RasterLayerDataset:
    """Open a raster layer from a directory plus a declarative config dict."""
    config = dict(config or {})
    if "crs" in config and isinstance(config["crs"], str):
        config["crs"] = parse_crs(config["crs"])
    if "res" in config and not isinstance(config["res"], Resolution):
        r = config["res"]
        config["res"] = Resolution(*r) if isinstance(r, (list, tuple)) \
            else Resolution.square(r)
    return RasterLayerDataset(root, cache=cache, **config)


def _resolve_cache_bytes(config: dict) -> int:
    env = os.environ.get(CACHE_ENV_VAR)
    if env is not None:
        return int(env)
    return int(config.get("cache_bytes", DEFAULT_CACHE_BYTES))


def load_dataset_config(path, cache: BlockCache | None = None) -> GeoDataset:
    """Build a (possibly composed) dataset from a JSON config file.

    Layer roots are resolved relative to the config file.  All raster layers
    share one block cache, sized by cache_bytes in the config unless the
    GEOPATCH_CACHE_BYTES environment variable overrides it.
    """
    path = Path(path)
    cfg = json.loads(path.read_text())
    base = path.parent
    crs = parse_crs(cfg["crs"]) if "crs" in cfg else None
    res = None
    if "res" in cfg:
        r = cfg["res"]
        res = Resolution(*r) if isinstance(r, (list, tuple)) else Resolution.square(r)
    fill = float(cfg.get("fill_value", 0.0))
    if cache is None:
        cache = BlockCache(_resolve_cache_bytes(cfg))

    layers = []
    for lc in cfg["layers"]:
        lc = dict(lc)
        ltype = lc.pop("type", "raster")
        root = base / lc.pop("root")
        lcrs = parse_crs(lc.pop("crs")) if "crs" in lc else crs
        lres = lc.pop("res", None)
        lres = (Resolution(*lres) if isinstance(lres, (list, tuple))
                else Resolution.square(lres)) if lres is not None else res
        if ltype == "raster":
            layers.append(RasterLayerDataset(root, crs=lcrs, res=lres,
                                             cache=cache, fill_value=fill, **lc))
        elif ltype == "vector":
            src = lc.pop("source_crs", None)
            layers.append(VectorLayerDataset(
                root, crs=lcrs, res=lres, fill_value=fill,
                source_crs=parse_crs(src) if src else None, **lc))
        else:
            raise ValueError(f"unknown layer type {ltype!r}")

    if len(layers) == 1:
        return layers[0]
    compose = cfg.get("compose", "intersection")
    ctor = intersect if compose == "intersection" else union
    if compose not in ("intersection", "union"):
        raise ValueError(f"unknown compose mode {compose!r}")
    combined = layers[0]
    for nxt in layers[1:]:
        combined = ctor(combined, nxt, crs=crs if crs is not None else combined.crs,
                        res=res if res is not None else combined.res)
    return combined
