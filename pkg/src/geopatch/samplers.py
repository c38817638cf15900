"""Geospatial samplers: random, random-batch, and grid query generators.

Sampling is driven by a self-contained PCG32 generator so that a (dataset,
config) pair always yields the same bounding-box sequence, on any platform.

PCG32 here means the XSH-RR 64/32 variant: 64-bit LCG state with multiplier
6364136223846793005 and the fixed odd increment 2891336453298357875
(= 1442695040888963407 * 2 + 1), seeded by state = 0, step, state += seed,
step.  Doubles in [0, 1) take the top 26 + 27 bits of two consecutive outputs
as a 53-bit mantissa.  Samplers draw in a fixed order (scene choice, then x,
then y), which is the cross-implementation reproducibility contract.
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass

from .dataset import GeoDataset
from .errors import PatchLargerThanExtent, PatchLargerThanScene
from .geometry import BoundingBox, Resolution, bbox_intersection

_MASK64 = (1 << 64) - 1
_PCG_MULT = 6364136223846793005
_PCG_INC = (1442695040888963407 << 1) | 1


class Pcg32:
    """PCG32 (XSH-RR) with a fixed stream; same seed, same sequence."""

    def __init__(self, seed: int):
        self.state = 0
        self._step()
        self.state = (self.state + (seed & _MASK64)) & _MASK64
        self._step()

    def _step(self):
        self.state = (self.state * _PCG_MULT + _PCG_INC) & _MASK64

    def next_u32(self) -> int:
        old = self.state
        self._step()
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def random(self) -> float:
        """53-bit uniform double in [0, 1)."""
        hi = self.next_u32() >> 6    # 26 bits
        lo = self.next_u32() >> 5    # 27 bits
        return ((hi << 27) | lo) * (1.0 / (1 << 53))

    def uniform(self, a: float, b: float) -> float:
        return a + self.random() * (b - a)


@dataclass
class SamplerConfig:
    """Patch geometry and epoch layout for the samplers.

    width/height are the emitted box size; with units="px" they are given in
    pixels and converted through the dataset resolution at sampler start.
    """

    width: float
    height: float
    units: str = "crs"  # "crs" | "px"
    stride: float | None = None
    length: int = 1
    batch_size: int = 1
    seed: int = 0
    roi: BoundingBox | None = None
    extent_mode: str = "footprints"  # "footprints" | "hull"

    def __post_init__(self):
        if self.units not in ("crs", "px"):
            raise ValueError(f"units must be 'crs' or 'px', got {self.units!r}")
        if self.extent_mode not in ("footprints", "hull"):
            raise ValueError(f"unknown extent_mode {self.extent_mode!r}")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("patch size must be positive")

    def size_in_crs(self, res: Resolution) -> tuple:
        if self.units == "px":
            return self.width * res.xres, self.height * res.yres
        return self.width, self.height

    def stride_in_crs(self, res: Resolution) -> tuple:
        s = self.stride if self.stride is not None else 0.0
        if s <= 0:
            raise ValueError("grid sampling needs a positive stride")
        if self.units == "px":
            return s * res.xres, s * res.yres
        return s, s


def _clip_roi(boxes, roi):
    if roi is None:
        return list(boxes)
    out = []
    for b in boxes:
        if b.intersects(roi):
            out.append(bbox_intersection(b, roi))
    return out


def _eligible_scenes(d: GeoDataset, cfg: SamplerConfig, w: float, h: float,
                     error_cls):
    scenes = _clip_roi(d.scene_footprints(), cfg.roi)
    usable = [s for s in scenes if s.width >= w and s.height >= h]
    if scenes and not usable:
        raise error_cls(
            f"no scene extent fits a {w} x {h} patch (have {len(scenes)} scenes)")
    if len(usable) < len(scenes):
        warnings.warn(f"{len(scenes) - len(usable)} scenes smaller than the "
                      f"patch were excluded from sampling", stacklevel=3)
    return usable


def _cumulative_areas(scenes):
    cum = []
    total = 0.0
    for s in scenes:
        total += s.area()
        cum.append(total)
    return cum, total


def _uniform_box_in(rng: Pcg32, extent: BoundingBox, w: float, h: float):
    minx = rng.uniform(extent.minx, extent.maxx - w)
    miny = rng.uniform(extent.miny, extent.maxy - h)
    return BoundingBox(minx, minx + w, miny, miny + h, extent.mint, extent.maxt)


def random_sampler(d: GeoDataset, cfg: SamplerConfig):
    """cfg.length boxes of exact patch size, uniformly placed.

    footprints mode picks a scene with probability proportional to area, then
    a uniform box inside it; hull mode samples the whole extent hull and may
    land on empty ground.
    """
    w, h = cfg.size_in_crs(d.res)
    rng = Pcg32(cfg.seed)
    if cfg.extent_mode == "hull":
        extent = d.bounds if cfg.roi is None else bbox_intersection(d.bounds, cfg.roi)
        if extent.width < w or extent.height < h:
            raise PatchLargerThanExtent(
                f"{w} x {h} patch exceeds extent {extent.width} x {extent.height}")
        for _ in range(cfg.length):
            yield _uniform_box_in(rng, extent, w, h)
        return
    scenes = _eligible_scenes(d, cfg, w, h, PatchLargerThanExtent)
    if not scenes:
        raise PatchLargerThanExtent("dataset has no scene footprints")
    cum, total = _cumulative_areas(scenes)
    for _ in range(cfg.length):
        scene = scenes[bisect_right(cum, rng.random() * total)]
        yield _uniform_box_in(rng, scene, w, h)


def random_batch_sampler(d: GeoDataset, cfg: SamplerConfig):
    """ceil(length / batch_size) batches; each batch shares one random scene."""
    w, h = cfg.size_in_crs(d.res)
    rng = Pcg32(cfg.seed)
    scenes = _eligible_scenes(d, cfg, w, h, PatchLargerThanScene)
    if not scenes:
        raise PatchLargerThanScene("dataset has no scene footprints")
    cum, total = _cumulative_areas(scenes)
    for _ in range(math.ceil(cfg.length / cfg.batch_size)):
        scene = scenes[bisect_right(cum, rng.random() * total)]
        yield [_uniform_box_in(rng, scene, w, h) for _ in range(cfg.batch_size)]


def _grid_offsets(extent: float, patch: float, stride: float):
    """k*stride offsets plus a final flush offset so coverage is complete."""
    if extent <= patch:
        return [(extent - patch) / 2.0]
    n = int(math.floor((extent - patch) / stride))
    offsets = [k * stride for k in range(n + 1)]
    if offsets[-1] + patch < extent:
        offsets.append(extent - patch)
    return offsets


def grid_sampler(d: GeoDataset, cfg: SamplerConfig):
    """Row-major grid of boxes over each scene in sorted order.

    A flush row/column hugging the far edge is added whenever the stride does
    not land exactly, so every scene is covered end to end; scenes smaller
    than the patch yield a single centered box.
    """
    w, h = cfg.size_in_crs(d.res)
    sx, sy = cfg.stride_in_crs(d.res)
    scenes = _clip_roi(d.scene_footprints(), cfg.roi)
    for scene in scenes:
        xs = _grid_offsets(scene.width, w, sx)
        ys = _grid_offsets(scene.height, h, sy)
        for oy in ys:
            for ox in xs:
                yield BoundingBox(scene.minx + ox, scene.minx + ox + w,
                                  scene.miny + oy, scene.miny + oy + h,
                                  scene.mint, scene.maxt)


SAMPLERS = {
    "random": random_sampler,
    "random-batch": random_batch_sampler,
    "grid": grid_sampler,
}


def iter_boxes(kind: str, d: GeoDataset, cfg: SamplerConfig):
    """Flat box iterator over any sampler kind (batches are flattened)."""
    gen = SAMPLERS[kind](d, cfg)
    if kind == "random-batch":
        count = 0
        for batch in gen:
            for b in batch:
                if count == cfg.length:
                    return
                count += 1
                yield b
    else:
        yield from gen
