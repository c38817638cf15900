"""Thin array bridge: geopatch datasets and samplers for ML pipelines.

Mirrors the canonical session shape: open a label layer, open an image layer
on the label's grid, merge them spatially, then iterate fixed-size batches as
numpy arrays.  No geospatial logic lives here; every computation routes
through the geopatch engine, and engine errors propagate unchanged.

    from geopatch_bridge import RasterLayer, BridgeSession

    cdl = RasterLayer("labels/", is_label=True, role="mask")
    landsat = RasterLayer("scenes/", crs=cdl.crs, res=cdl.res, role="image")
    merged = cdl + landsat  # spatial merge
    session = BridgeSession(merged, size=1000, length=512, batch_size=32)
    for arrays, boxes in session:
        ...  # arrays["image"].shape == (B, C, H, W)
"""

from __future__ import annotations

import numpy as np

from geopatch.cache import BlockCache
from geopatch.dataset import (
    GeoDataset,
    RasterLayerDataset,
    VectorLayerDataset,
    intersect,
    load_dataset_config,
    union,
)
from geopatch.geometry import Resolution
from geopatch.projection import parse_crs
from geopatch.samplers import SAMPLERS, SamplerConfig, iter_boxes

__all__ = ["RasterLayer", "VectorLayer", "BridgeSession", "open_config"]

__version__ = "0.1.0"


def _coerce_res(res):
    if res is None or isinstance(res, Resolution):
        return res
    if isinstance(res, (tuple, list)):
        return Resolution(*res)
    return Resolution.square(res)


def _coerce_crs(crs):
    if crs is None or not isinstance(crs, str):
        return crs
    return parse_crs(crs)


class _Composable:
    """Mixin giving layer wrappers the spatial-merge operators."""

    def __add__(self, other):  # spatial merge, Listing-1 style
        return MergedLayers(intersect(_dataset(self), _dataset(other)))

    def __and__(self, other):
        return MergedLayers(intersect(_dataset(self), _dataset(other)))

    def __or__(self, other):
        return MergedLayers(union(_dataset(self), _dataset(other)))

    @property
    def crs(self):
        return _dataset(self).crs

    @property
    def res(self):
        return _dataset(self).res

    @property
    def bounds(self):
        return _dataset(self).bounds


def _dataset(obj) -> GeoDataset:
    return obj._engine if isinstance(obj, _Composable) else obj


class RasterLayer(_Composable):
    """Directory of georeferenced scenes, opened through the engine."""

    def __init__(self, root, glob="*.tif", crs=None, res=None, role="image",
                 resampling=None, is_label=False, cache_bytes=None, **kwargs):
        cache = BlockCache(cache_bytes) if cache_bytes is not None else None
        self._engine = RasterLayerDataset(
            root, glob=glob, crs=_coerce_crs(crs), res=_coerce_res(res),
            role=role, resampling=resampling, is_label=is_label, cache=cache,
            **kwargs)


class VectorLayer(_Composable):
    """Polygon features rasterized to label masks by the engine."""

    def __init__(self, root, glob="*.json", crs=None, res=None, role="mask",
                 **kwargs):
        self._engine = VectorLayerDataset(
            root, glob=glob, crs=_coerce_crs(crs), res=_coerce_res(res),
            role=role, **kwargs)


class MergedLayers(_Composable):
    def __init__(self, engine_dataset: GeoDataset):
        self._engine = engine_dataset


def open_config(path) -> MergedLayers:
    """Open a (possibly composed) dataset from an engine config file."""
    return MergedLayers(load_dataset_config(path))


class BridgeSession:
    """Iterable of (arrays by role, bounding boxes) batches.

    size is the patch edge in CRS units by default (size=1000 samples 1 km
    chips); pass units="px" for pixel units.  Arrays are float32 with the
    batch axis first and channels first by default: (B, C, H, W).  Values are
    bit-identical to the engine's patches, and therefore to what the engine
    CLI writes for the same dataset, sampler, and seed.
    """

    def __init__(self, dataset, size, length, batch_size=32, seed=0,
                 sampler="random", stride=None, units="crs",
                 channels_last=False):
        if sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {sampler!r}")
        self._dataset = _dataset(dataset)
        self._kind = sampler
        self._cfg = SamplerConfig(width=size, height=size, units=units,
                                  stride=stride, length=length,
                                  batch_size=batch_size, seed=seed)
        self.batch_size = batch_size
        self.length = length
        self.channels_last = channels_last

    def __iter__(self):
        batch_patches = []
        batch_boxes = []
        emitted = 0
        for box in iter_boxes(self._kind, self._dataset, self._cfg):
            if emitted == self.length:
                break
            sample = self._dataset.query(box)
            batch_patches.append(sample.patches)
            batch_boxes.append(box)
            emitted += 1
            if len(batch_boxes) == self.batch_size:
                yield self._stack(batch_patches), batch_boxes
                batch_patches, batch_boxes = [], []
        if batch_boxes:
            yield self._stack(batch_patches), batch_boxes

    def _stack(self, patch_dicts):
        roles = patch_dicts[0].keys()
        arrays = {}
        for role in roles:
            stacked = np.stack([p[role].samples for p in patch_dicts])
            if self.channels_last:
                stacked = np.moveaxis(stacked, 1, -1)
            arrays[role] = stacked
            arrays[f"{role}_valid"] = np.stack(
                [p[role].valid for p in patch_dicts])
        return arrays
