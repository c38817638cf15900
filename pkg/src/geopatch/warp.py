"""Alignment engine: windowed reads through the block cache plus
inverse-mapped resampling onto an arbitrary destination grid.

Destination pixels are iterated and pulled from the source (never splatted
forward), so output grids have no holes and an exactly grid-aligned same-CRS
request degenerates to a bit-exact block copy.
"""

from __future__ import annotations

import math

import numpy as np

from .cache import BlockCache
from .geometry import BoundingBox, GridShape, Resolution, grid_shape
from .patch import Patch, full_invalid
from .projection import CrsDef, equivalent, transform_arrays, transform_bbox_finite
from .tiff import SceneMetadata, read_block

NEAREST = "nearest"
BILINEAR = "bilinear"

# approximate-transformer tiling: per tile of destination pixels, the exact
# CRS transform is evaluated on a 3x3 control grid and interpolated
# biquadratically; a probe point falls back to exact when interpolation
# error exceeds _APPROX_TOL_M (it stays ~0.1 mm for <= 6 km tiles)
_APPROX_TILE = 192
_APPROX_TOL_M = 1e-3


def _filled(shape, fill_value):
    if fill_value == 0.0:
        return np.zeros(shape, dtype=np.float32)
    return np.full(shape, fill_value, dtype=np.float32)


def _quad_basis(t):
    """Quadratic Lagrange basis at nodes 0, 1/2, 1 for parameters t."""
    return (2.0 * (t - 0.5) * (t - 1.0),
            -4.0 * t * (t - 1.0),
            2.0 * t * (t - 0.5))


def _transform_grid(dst_crs, src_crs, xs, ys):
    """dst-grid pixel centers transformed to src coordinates.

    Equivalent to transform_arrays on the full meshgrid, but evaluates the
    exact projection only on a sparse control lattice per tile and fills the
    interior with biquadratic interpolation (the gdalwarp approximation,
    here with a sub-millimeter acceptance probe).
    """
    h, w = len(ys), len(xs)
    gx = np.empty((h, w), dtype=np.float64)
    gy = np.empty((h, w), dtype=np.float64)
    # probe tolerance lives in src units; geographic CRSs measure degrees
    tol = _APPROX_TOL_M / (111_320.0 if src_crs.kind == "geographic" else 1.0)
    for r0 in range(0, h, _APPROX_TILE):
        r1 = min(h, r0 + _APPROX_TILE)
        for c0 in range(0, w, _APPROX_TILE):
            c1 = min(w, c0 + _APPROX_TILE)
            sub_x = xs[c0:c1]
            sub_y = ys[r0:r1]
            block = np.s_[r0:r1, c0:c1]
            if len(sub_x) < 8 or len(sub_y) < 8:
                mx, my = np.meshgrid(sub_x, sub_y)
                gx[block], gy[block] = transform_arrays(dst_crs, src_crs, mx, my)
                continue
            x_nodes = np.array([sub_x[0], (sub_x[0] + sub_x[-1]) / 2, sub_x[-1]])
            y_nodes = np.array([sub_y[0], (sub_y[0] + sub_y[-1]) / 2, sub_y[-1]])
            # 9 control points plus one off-node probe, transformed exactly
            px = sub_x[0] + (sub_x[-1] - sub_x[0]) * 0.25
            py = sub_y[0] + (sub_y[-1] - sub_y[0]) * 0.25
            cx = np.concatenate([np.tile(x_nodes, 3), [px]])
            cy = np.concatenate([np.repeat(y_nodes, 3), [py]])
            tx, ty = transform_arrays(dst_crs, src_crs, cx, cy)
            if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(ty))):
                mx, my = np.meshgrid(sub_x, sub_y)
                gx[block], gy[block] = transform_arrays(dst_crs, src_crs, mx, my)
                continue
            ctrl_x = tx[:9].reshape(3, 3)
            ctrl_y = ty[:9].reshape(3, 3)

            def interp(u_basis, v_basis, ctrl):
                out = 0.0
                for i in range(3):
                    for j in range(3):
                        out = out + np.outer(v_basis[i], u_basis[j]) * ctrl[i, j]
                return out

            span_x = sub_x[-1] - sub_x[0]
            span_y = sub_y[-1] - sub_y[0]
            bu_probe = _quad_basis(np.array([0.25]))
            bv_probe = _quad_basis(np.array([0.25]))
            ax = interp(bu_probe, bv_probe, ctrl_x)[0, 0]
            ay = interp(bu_probe, bv_probe, ctrl_y)[0, 0]
            if math.hypot(ax - tx[9], ay - ty[9]) > tol:
                mx, my = np.meshgrid(sub_x, sub_y)
                gx[block], gy[block] = transform_arrays(dst_crs, src_crs, mx, my)
                continue
            bu = _quad_basis((sub_x - sub_x[0]) / span_x)
            bv = _quad_basis((sub_y - sub_y[0]) / span_y)
            gx[block] = interp(bu, bv, ctrl_x)
            gy[block] = interp(bu, bv, ctrl_y)
    return gx, gy

# destination pixels transformed per chunk to bound temporary memory
_CHUNK_PIXELS = 2_000_000


def read_window(scene: SceneMetadata, b: BoundingBox,
                cache: BlockCache | None = None, fill_value: float = 0.0) -> Patch:
    """Native-resolution window of a scene, snapped outward to its pixel grid.

    Pixels outside the scene, and pixels holding the nodata value, are marked
    invalid and filled.  Exactly the blocks covering the in-scene part of the
    window are fetched (through the cache when given).
    """
    t = scene.transform
    row_top, col_left = t.world_to_pixel(b.minx, b.maxy)
    row_bot, col_right = t.world_to_pixel(b.maxx, b.miny)
    row0, row1 = int(math.floor(row_top)), int(math.ceil(row_bot))
    col0, col1 = int(math.floor(col_left)), int(math.ceil(col_right))
    if row1 <= row0:
        row1 = row0 + 1
    if col1 <= col0:
        col1 = col0 + 1
    h, w = row1 - row0, col1 - col0

    minx, maxy = t.pixel_to_world(row0, col0)
    maxx, miny = t.pixel_to_world(row1, col1)
    res = scene.resolution
    window_box = BoundingBox(minx, maxx, miny, maxy, b.mint, b.maxt)

    samples = _filled((scene.bands, h, w), fill_value)
    valid = np.zeros((h, w), dtype=bool)

    in_r0, in_r1 = max(row0, 0), min(row1, scene.shape.rows)
    in_c0, in_c1 = max(col0, 0), min(col1, scene.shape.cols)
    if in_r0 < in_r1 and in_c0 < in_c1:
        bh, bw = scene.block_height, scene.block_width
        for brow in range(in_r0 // bh, (in_r1 - 1) // bh + 1):
            for bcol in range(in_c0 // bw, (in_c1 - 1) // bw + 1):
                r_lo = max(in_r0, brow * bh)
                r_hi = min(in_r1, (brow + 1) * bh)
                c_lo = max(in_c0, bcol * bw)
                c_hi = min(in_c1, (bcol + 1) * bw)
                for band in range(scene.bands):
                    block = read_block(scene, band, brow, bcol, cache)
                    chunk = block.data[r_lo - brow * bh:r_hi - brow * bh,
                                       c_lo - bcol * bw:c_hi - bcol * bw]
                    samples[band, r_lo - row0:r_hi - row0,
                            c_lo - col0:c_hi - col0] = chunk
        region = np.s_[in_r0 - row0:in_r1 - row0, in_c0 - col0:in_c1 - col0]
        if scene.nodata is not None:
            valid[region] = ~np.all(
                samples[:, region[0], region[1]] == np.float32(scene.nodata), axis=0)
            samples[:, region[0], region[1]] = np.where(
                valid[region][None], samples[:, region[0], region[1]],
                np.float32(fill_value))
        else:
            valid[region] = True

    return Patch(samples, valid, window_box, scene.crs, res,
                 sample_type=scene.sample_type, fill_value=fill_value,
                 nodata=scene.nodata)


def _grid_offsets_same_res(src: Patch, dst_bbox: BoundingBox, dst_res: Resolution):
    """Fractional (row, col) offset of the dst grid within the src grid.

    Only meaningful when the CRSs match and resolutions are equal; then the
    whole warp degenerates to constant-shift slicing because the offset is
    the same for every pixel.
    """
    if not (math.isclose(src.res.xres, dst_res.xres, rel_tol=1e-12)
            and math.isclose(src.res.yres, dst_res.yres, rel_tol=1e-12)):
        return None
    col_off = (dst_bbox.minx - src.bbox.minx) / src.res.xres
    row_off = (src.bbox.maxy - dst_bbox.maxy) / src.res.yres
    return row_off, col_off


def resample(src: Patch, dst_crs: CrsDef, dst_bbox: BoundingBox,
             dst_res: Resolution, method: str = NEAREST,
             fill_value: float = 0.0) -> Patch:
    """Warp a source patch onto the destination grid.

    Each destination pixel center is transformed into the source CRS, mapped
    to fractional source pixels, and sampled with the requested kernel.
    Out-of-domain or uncovered destination pixels come back invalid, never as
    a failure.  Nearest keeps the source value set (label-safe); bilinear
    averages the up-to-4 valid neighbors with renormalized weights and
    degrades the declared sample type to f32.
    """
    if method not in (NEAREST, BILINEAR):
        raise ValueError(f"unknown resampling method {method!r}")
    shape = grid_shape(dst_bbox, dst_res)
    h, w = shape.rows, shape.cols

    same_crs = equivalent(src.crs, dst_crs)
    if same_crs:
        offsets = _grid_offsets_same_res(src, dst_bbox, dst_res)
        if offsets is not None:
            row_off, col_off = offsets
            if method == NEAREST:
                # nearest degenerates to a constant integer shift
                return _copy_aligned(src, dst_bbox, dst_res, shape,
                                     (math.floor(0.5 + row_off),
                                      math.floor(0.5 + col_off)), fill_value)
            return _bilinear_shifted(src, dst_bbox, dst_res, shape,
                                     row_off, col_off, fill_value)

    out = _filled((src.bands, h, w), fill_value)
    out_valid = np.zeros((h, w), dtype=bool)
    src_t = src.transform
    sh, sw = src.shape.rows, src.shape.cols

    # only destination pixels whose centers can map into the source window
    # need per-pixel math; everything outside that sub-rectangle is invalid
    reach = transform_bbox_finite(src.crs, dst_crs, src.bbox)
    if reach is None:
        return Patch(out, out_valid, dst_bbox, dst_crs, dst_res,
                     sample_type=src.sample_type if method == NEAREST else "f32",
                     fill_value=fill_value, nodata=src.nodata)
    row_lo = max(0, int(math.floor((dst_bbox.maxy - reach.maxy) / dst_res.yres)) - 1)
    row_hi = min(h, int(math.ceil((dst_bbox.maxy - reach.miny) / dst_res.yres)) + 1)
    col_lo = max(0, int(math.floor((reach.minx - dst_bbox.minx) / dst_res.xres)) - 1)
    col_hi = min(w, int(math.ceil((reach.maxx - dst_bbox.minx) / dst_res.xres)) + 1)
    sub_w = col_hi - col_lo

    xs = dst_bbox.minx + (np.arange(col_lo, col_hi, dtype=np.float64) + 0.5) * dst_res.xres
    ys = dst_bbox.maxy - (np.arange(h, dtype=np.float64) + 0.5) * dst_res.yres

    rows_per_chunk = max(1, _CHUNK_PIXELS // max(sub_w, 1))
    for r0 in range(row_lo, row_hi, rows_per_chunk):
        r1 = min(row_hi, r0 + rows_per_chunk)
        if same_crs:
            gx, gy = np.meshgrid(xs, ys[r0:r1])
        else:
            gx, gy = _transform_grid(dst_crs, src.crs, xs, ys[r0:r1])
        row_f, col_f = src_t.world_to_pixel(gx, gy)
        finite = np.isfinite(row_f) & np.isfinite(col_f)
        row_f = np.where(finite, row_f, -1.0)
        col_f = np.where(finite, col_f, -1.0)

        if method == NEAREST:
            ri = np.floor(row_f).astype(np.int64)
            ci = np.floor(col_f).astype(np.int64)
            inside = finite & (ri >= 0) & (ri < sh) & (ci >= 0) & (ci < sw)
            ri_c = np.clip(ri, 0, sh - 1)
            ci_c = np.clip(ci, 0, sw - 1)
            ok = inside & src.valid[ri_c, ci_c]
            vals = src.samples[:, ri_c, ci_c]
            vals[:, ~ok] = np.float32(fill_value)
            out[:, r0:r1, col_lo:col_hi] = vals
            out_valid[r0:r1, col_lo:col_hi] = ok
        else:
            fr = row_f - 0.5
            fc = col_f - 0.5
            r_lo = np.floor(fr).astype(np.int64)
            c_lo = np.floor(fc).astype(np.int64)
            tr = fr - r_lo
            tc = fc - c_lo
            # accumulate in float64 so renormalized weights sum cleanly and a
            # constant input stays exactly constant after the f32 cast
            acc = np.zeros((src.bands,) + row_f.shape, dtype=np.float64)
            wsum = np.zeros(row_f.shape, dtype=np.float64)
            for dr, dc, wgt in ((0, 0, (1 - tr) * (1 - tc)), (0, 1, (1 - tr) * tc),
                                (1, 0, tr * (1 - tc)), (1, 1, tr * tc)):
                rr = r_lo + dr
                cc = c_lo + dc
                inside = finite & (rr >= 0) & (rr < sh) & (cc >= 0) & (cc < sw)
                rr_c = np.clip(rr, 0, sh - 1)
                cc_c = np.clip(cc, 0, sw - 1)
                usable = inside & src.valid[rr_c, cc_c]
                wv = np.where(usable, wgt, 0.0)
                acc += wv[None] * src.samples[:, rr_c, cc_c]
                wsum += wv
            ok = wsum > 0
            with np.errstate(invalid="ignore", divide="ignore"):
                vals = (acc / wsum[None]).astype(np.float32)
            out[:, r0:r1, col_lo:col_hi] = np.where(
                ok[None], vals, np.float32(fill_value))
            out_valid[r0:r1, col_lo:col_hi] = ok

    sample_type = src.sample_type if method == NEAREST else "f32"
    return Patch(out, out_valid, dst_bbox, dst_crs, dst_res,
                 sample_type=sample_type, fill_value=fill_value,
                 nodata=src.nodata)


def _copy_aligned(src: Patch, dst_bbox, dst_res, shape: GridShape, offsets,
                  fill_value: float) -> Patch:
    """Bit-exact slice copy for grid-aligned same-CRS nearest requests."""
    row_off, col_off = offsets
    h, w = shape.rows, shape.cols
    sh, sw = src.shape.rows, src.shape.cols
    out = _filled((src.bands, h, w), fill_value)
    valid = np.zeros((h, w), dtype=bool)
    r_lo, r_hi = max(0, -row_off), min(h, sh - row_off)
    c_lo, c_hi = max(0, -col_off), min(w, sw - col_off)
    if r_lo < r_hi and c_lo < c_hi:
        s = np.s_[r_lo + row_off:r_hi + row_off, c_lo + col_off:c_hi + col_off]
        out[:, r_lo:r_hi, c_lo:c_hi] = src.samples[:, s[0], s[1]]
        valid[r_lo:r_hi, c_lo:c_hi] = src.valid[s]
        out[:, r_lo:r_hi, c_lo:c_hi] = np.where(
            valid[r_lo:r_hi, c_lo:c_hi][None], out[:, r_lo:r_hi, c_lo:c_hi],
            np.float32(fill_value))
    return Patch(out, valid, dst_bbox, src.crs, dst_res,
                 sample_type=src.sample_type, fill_value=fill_value,
                 nodata=src.nodata)


def _shifted_view(arr2d, h, w, row_off, col_off, fill):
    """arr2d re-indexed by a constant integer shift, padded with fill."""
    sh, sw = arr2d.shape
    out = np.full((h, w), fill, dtype=arr2d.dtype)
    r_lo, r_hi = max(0, -row_off), min(h, sh - row_off)
    c_lo, c_hi = max(0, -col_off), min(w, sw - col_off)
    if r_lo < r_hi and c_lo < c_hi:
        out[r_lo:r_hi, c_lo:c_hi] = arr2d[r_lo + row_off:r_hi + row_off,
                                          c_lo + col_off:c_hi + col_off]
    return out


def _bilinear_shifted(src: Patch, dst_bbox, dst_res, shape: GridShape,
                      row_off: float, col_off: float, fill_value: float) -> Patch:
    """Same-CRS equal-res bilinear: four shifted slices, constant weights."""
    h, w = shape.rows, shape.cols
    r_base = math.floor(row_off)
    c_base = math.floor(col_off)
    tr = row_off - r_base
    tc = col_off - c_base
    acc = np.zeros((src.bands, h, w), dtype=np.float64)
    wsum = np.zeros((h, w), dtype=np.float64)
    for dr, dc, wgt in ((0, 0, (1 - tr) * (1 - tc)), (0, 1, (1 - tr) * tc),
                        (1, 0, tr * (1 - tc)), (1, 1, tr * tc)):
        if wgt == 0.0:
            continue
        v = _shifted_view(src.valid, h, w, r_base + dr, c_base + dc, False)
        wv = np.where(v, wgt, 0.0)
        for band in range(src.bands):
            acc[band] += wv * _shifted_view(src.samples[band], h, w,
                                            r_base + dr, c_base + dc, 0.0)
        wsum += wv
    ok = wsum > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = (acc / wsum[None]).astype(np.float32)
    out = np.where(ok[None], vals, np.float32(fill_value))
    return Patch(out, ok, dst_bbox, src.crs, dst_res, sample_type="f32",
                 fill_value=fill_value, nodata=src.nodata)


def warp_scene(scene: SceneMetadata, dst_crs: CrsDef, dst_bbox: BoundingBox,
               dst_res: Resolution, method: str = NEAREST,
               cache: BlockCache | None = None, fill_value: float = 0.0) -> Patch:
    """Read the needed source window and resample it onto the requested grid."""
    src_box = transform_bbox_finite(dst_crs, scene.crs, dst_bbox)
    if src_box is None:
        return full_invalid(scene.bands, dst_bbox, dst_crs, dst_res,
                            scene.sample_type, fill_value)
    # one extra source pixel so bilinear support never leaves the window
    res = scene.resolution
    src_box = BoundingBox(src_box.minx - res.xres, src_box.maxx + res.xres,
                          src_box.miny - res.yres, src_box.maxy + res.yres,
                          src_box.mint, src_box.maxt)
    scene_box = scene.transform.bounds(scene.shape)
    if not src_box.intersects(scene_box):
        return full_invalid(scene.bands, dst_bbox, dst_crs, dst_res,
                            scene.sample_type, fill_value)
    clipped = BoundingBox(max(src_box.minx, scene_box.minx),
                          min(src_box.maxx, scene_box.maxx),
                          max(src_box.miny, scene_box.miny),
                          min(src_box.maxy, scene_box.maxy),
                          src_box.mint, src_box.maxt)
    window = read_window(scene, clipped, cache, fill_value)
    return resample(window, dst_crs, dst_bbox, dst_res, method, fill_value)
