"""Synthetic test rasters whose pixel values encode ground coordinates.

Each pixel stores a known function of its center's world coordinate evaluated
in a fixed reference CRS (the raster's own CRS by default), which makes
cross-CRS alignment checkable per pixel: decode a warped patch and compare
against where its pixels claim to be.

Encodings:
  constant    every sample equals `value`
  coord_sum   (floor(x / xres) + floor(y / yres)) mod 65536, all bands
  coord_xy    band 0 encodes floor(x / xres) mod 65536, band 1 encodes
              floor(y / yres) mod 65536; further bands get a deterministic
              mix of the two so multiband imagery has per-band texture
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .geometry import BoundingBox, GeoTransform, Resolution, grid_shape
from .patch import Patch
from .projection import CrsDef, crs_from_epsg, equivalent, parse_crs, transform_arrays, transform_bbox
from .tiff import write_geotiff

COORD_MODULUS = 65536

ENCODINGS = ("constant", "coord_sum", "coord_xy")


@dataclass
class SynthSpec:
    crs: CrsDef
    bounds: BoundingBox
    res: Resolution
    bands: int = 1
    sample_type: str = "u16"
    encoding: str = "coord_sum"
    value: float = 0.0
    ref_crs: CrsDef | None = None
    nodata: float | None = None

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.encoding == "coord_xy" and self.bands < 2:
            raise ValueError("coord_xy needs at least 2 bands")


def synth_patch(spec: SynthSpec) -> Patch:
    """Materialize the synthetic raster in memory as a Patch."""
    shape = grid_shape(spec.bounds, spec.res)
    h, w = shape.rows, shape.cols
    samples = np.empty((spec.bands, h, w), dtype=np.float32)

    if spec.encoding == "constant":
        samples[:] = spec.value
    else:
        t = GeoTransform(spec.bounds.minx, spec.bounds.maxy, spec.res.xres, -spec.res.yres)
        cols = np.arange(w, dtype=np.float64) + 0.5
        rows = np.arange(h, dtype=np.float64) + 0.5
        xs, _ = t.pixel_to_world(np.zeros_like(cols), cols)
        _, ys = t.pixel_to_world(rows, np.zeros_like(rows))
        gx, gy = np.meshgrid(xs, ys)
        ref = spec.ref_crs if spec.ref_crs is not None else spec.crs
        if not equivalent(spec.crs, ref):
            gx, gy = transform_arrays(spec.crs, ref, gx, gy)
        bx = np.floor(gx / spec.res.xres).astype(np.int64) % COORD_MODULUS
        by = np.floor(gy / spec.res.yres).astype(np.int64) % COORD_MODULUS
        if spec.encoding == "coord_sum":
            samples[:] = ((bx + by) % COORD_MODULUS).astype(np.float32)
        else:
            samples[0] = bx.astype(np.float32)
            samples[1] = by.astype(np.float32)
            for b in range(2, spec.bands):
                samples[b] = ((bx * 3 + by * 7 + b * 1009) % COORD_MODULUS).astype(np.float32)

    valid = np.ones((h, w), dtype=bool)
    return Patch(samples, valid, spec.bounds, spec.crs, spec.res,
                 sample_type=spec.sample_type, nodata=spec.nodata)


def synth_raster(spec: SynthSpec, path) -> None:
    """Generate the synthetic raster and write it as a GeoTIFF."""
    write_geotiff(path, synth_patch(spec))


def spec_from_dict(d: dict, base_res: float | None = None) -> SynthSpec:
    try:
        crs = parse_crs(d["crs"])
        res = d.get("res", base_res)
        res = Resolution.square(res) if not isinstance(res, (list, tuple)) \
            else Resolution(*res)
        b = d["bounds"]
        bounds = BoundingBox(b[0], b[2], b[1], b[3])  # xmin ymin xmax ymax
        return SynthSpec(
            crs=crs, bounds=bounds, res=res,
            bands=int(d.get("bands", 1)),
            sample_type=d.get("sample_type", "u16"),
            encoding=d.get("encoding", "coord_sum"),
            value=float(d.get("value", 0.0)),
            ref_crs=parse_crs(d["ref_crs"]) if "ref_crs" in d else None,
            nodata=d.get("nodata"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad synth spec: {exc}") from exc


def _snap_out(b: BoundingBox, res: float, anchor: float) -> BoundingBox:
    """Expand b outward onto the grid res*k + anchor."""
    minx = math.floor((b.minx - anchor) / res) * res + anchor
    miny = math.floor((b.miny - anchor) / res) * res + anchor
    maxx = math.ceil((b.maxx - anchor) / res) * res + anchor
    maxy = math.ceil((b.maxy - anchor) / res) * res + anchor
    return BoundingBox(minx, maxx, miny, maxy, b.mint, b.maxt)


# Desk-scale stand-in for a continental imagery + label workload: a cluster of
# UTM scenes spread over three zone CRSs plus one Albers label raster covering
# them, preserving the CRS heterogeneity of real stacks at ~1% of the volume.
DESK_CENTER_LON = -72.0
DESK_CENTER_LAT = 43.3
DESK_RES = 30.0
DESK_ZONES = (32617, 32618, 32619)


def make_desk_fixture(out_dir, scene_px: int = 2048, bands: int = 4,
                      res: float = DESK_RES, scenes: int = 12) -> dict:
    """Generate the benchmark fixture and its dataset config; returns paths."""
    from pathlib import Path

    out = Path(out_dir)
    (out / "image").mkdir(parents=True, exist_ok=True)
    (out / "label").mkdir(parents=True, exist_ok=True)

    extent_m = scene_px * res
    gap = res * 4  # slight overlap-free spacing between scene centers
    n_cols = 4
    half = extent_m / 2.0
    albers = crs_from_epsg(5070)

    scene_boxes = []
    deg_per_m_lon = 1.0 / (111320.0 * math.cos(math.radians(DESK_CENTER_LAT)))
    deg_per_m_lat = 1.0 / 110540.0
    for i in range(scenes):
        r, c = divmod(i, n_cols)
        lon = DESK_CENTER_LON + (c - (n_cols - 1) / 2) * (extent_m + gap) * deg_per_m_lon
        lat = DESK_CENTER_LAT + (r - 1) * (extent_m + gap) * deg_per_m_lat
        crs = crs_from_epsg(DESK_ZONES[i % len(DESK_ZONES)])
        cx, cy = transform_arrays(crs_from_epsg(4326), crs, lon, lat)
        # center snapped so pixel centers land on multiples of res: exact decode
        cx = round(float(cx) / res) * res + res / 2
        cy = round(float(cy) / res) * res + res / 2
        bounds = BoundingBox(cx - half, cx + half, cy - half, cy + half)
        spec = SynthSpec(crs=crs, bounds=bounds, res=Resolution.square(res),
                         bands=bands, sample_type="u16", encoding="coord_xy")
        path = out / "image" / f"scene_{i:02d}_{crs.epsg}.tif"
        synth_raster(spec, path)
        scene_boxes.append(transform_bbox(crs, albers, bounds))

    hull = scene_boxes[0]
    for b in scene_boxes[1:]:
        hull = BoundingBox(min(hull.minx, b.minx), max(hull.maxx, b.maxx),
                           min(hull.miny, b.miny), max(hull.maxy, b.maxy))
    hull = _snap_out(BoundingBox(hull.minx - 20 * res, hull.maxx + 20 * res,
                                 hull.miny - 20 * res, hull.maxy + 20 * res),
                     res, res / 2)
    label_spec = SynthSpec(crs=albers, bounds=hull, res=Resolution.square(res),
                           bands=2, sample_type="u16", encoding="coord_xy")
    synth_raster(label_spec, out / "label" / "labels_5070.tif")

    config = {
        "crs": "EPSG:5070",
        "res": res,
        "compose": "intersection",
        "layers": [
            {"type": "raster", "role": "image", "root": "image", "glob": "*.tif",
             "resampling": "nearest"},
            {"type": "raster", "role": "mask", "root": "label", "glob": "*.tif",
             "is_label": True},
        ],
    }
    config_path = out / "dataset.json"
    config_path.write_text(json.dumps(config, indent=1, sort_keys=True))
    return {"dir": str(out), "config": str(config_path), "scenes": scenes}
