"""Patch: a fixed-size, georeferenced crop with a validity mask."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundingBox, GridShape, Resolution, GeoTransform, grid_shape

SAMPLE_DTYPES = {
    "u8": np.dtype("uint8"),
    "u16": np.dtype("uint16"),
    "i16": np.dtype("int16"),
    "f32": np.dtype("float32"),
}

INTEGER_SAMPLE_TYPES = ("u8", "u16", "i16")


@dataclass
class Patch:
    """C x H x W float32 samples plus georeferencing and a validity mask.

    valid marks cells with real source coverage; invalid cells hold
    fill_value.  sample_type records the narrowest file type that can hold
    the values losslessly (used when the patch is written back to disk).
    """

    samples: np.ndarray
    valid: np.ndarray
    bbox: BoundingBox
    crs: "CrsDef"  # noqa: F821 - import cycle; structural only
    res: Resolution
    sample_type: str = "f32"
    fill_value: float = 0.0
    nodata: float | None = None

    def __post_init__(self):
        if self.samples.ndim != 3:
            raise ValueError(f"samples must be (C, H, W), got {self.samples.shape}")
        expect = grid_shape(self.bbox, self.res)
        got = GridShape(self.samples.shape[1], self.samples.shape[2])
        if got != expect:
            raise ValueError(f"samples {got} do not match bbox/res grid {expect}")
        if self.valid.shape != self.samples.shape[1:]:
            raise ValueError("valid mask must be (H, W)")
        if self.sample_type not in SAMPLE_DTYPES:
            raise ValueError(f"unknown sample type {self.sample_type!r}")

    @property
    def bands(self) -> int:
        return self.samples.shape[0]

    @property
    def shape(self) -> GridShape:
        return GridShape(self.samples.shape[1], self.samples.shape[2])

    @property
    def transform(self) -> GeoTransform:
        return GeoTransform(self.bbox.minx, self.bbox.maxy, self.res.xres, -self.res.yres)

    def all_invalid(self) -> bool:
        return not bool(self.valid.any())


def full_invalid(bands: int, bbox: BoundingBox, crs, res: Resolution,
                 sample_type: str = "f32", fill_value: float = 0.0) -> Patch:
    """Patch with no source coverage anywhere."""
    shape = grid_shape(bbox, res)
    if fill_value == 0.0:
        samples = np.zeros((bands, shape.rows, shape.cols), dtype=np.float32)
    else:
        samples = np.full((bands, shape.rows, shape.cols), fill_value,
                          dtype=np.float32)
    valid = np.zeros((shape.rows, shape.cols), dtype=bool)
    return Patch(samples, valid, bbox, crs, res, sample_type, fill_value)
