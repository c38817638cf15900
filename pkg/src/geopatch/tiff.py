"""GeoTIFF subset codec: classic TIFF, tiled or stripped, none/deflate.

Supported subset (frozen): classic TIFF in either byte order, chunky planar
layout, compression none or deflate, sample types u8/u16/i16/f32, north-up
georeferencing from ModelPixelScale + ModelTiepoint, CRS from the
GeographicType/ProjectedCSType geokeys.  Anything else raises
UnsupportedFormat so callers know the file needs external preprocessing.

Block reads go through the shared BlockCache; decoding is deterministic and
pure per file, so concurrent reads only synchronize inside the cache.
"""

from __future__ import annotations

import calendar
import os
import re
import struct
import zlib
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .cache import Block, BlockCache
from .errors import CorruptFile, IoError, UnsupportedFormat
from .geometry import BoundingBox, GeoTransform, GridShape
from .patch import INTEGER_SAMPLE_TYPES, SAMPLE_DTYPES, Patch
from .projection import CrsDef, crs_from_epsg, epsg_alias

TAG_IMAGE_WIDTH = 256
TAG_IMAGE_LENGTH = 257
TAG_BITS_PER_SAMPLE = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_STRIP_OFFSETS = 273
TAG_SAMPLES_PER_PIXEL = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_BYTE_COUNTS = 279
TAG_PLANAR_CONFIG = 284
TAG_TILE_WIDTH = 322
TAG_TILE_LENGTH = 323
TAG_TILE_OFFSETS = 324
TAG_TILE_BYTE_COUNTS = 325
TAG_SAMPLE_FORMAT = 339
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_MODEL_TRANSFORMATION = 34264
TAG_GEO_KEY_DIRECTORY = 34735
TAG_GDAL_NODATA = 42113

GEOKEY_MODEL_TYPE = 1024
GEOKEY_RASTER_TYPE = 1025
GEOKEY_GEOGRAPHIC_TYPE = 2048
GEOKEY_PROJECTED_CS_TYPE = 3072

COMPRESSION_NONE = 1
COMPRESSION_DEFLATE = 8
COMPRESSION_DEFLATE_OLD = 32946

# TIFF field types: id -> (struct code, byte size)
_FIELD_TYPES = {1: ("B", 1), 2: ("c", 1), 3: ("H", 2), 4: ("I", 4),
                5: ("II", 8), 11: ("f", 4), 12: ("d", 8)}

_SAMPLE_TYPE_BY_KEY = {(8, 1): "u8", (16, 1): "u16", (16, 2): "i16", (32, 3): "f32"}
_SAMPLE_KEY_BY_TYPE = {v: k for k, v in _SAMPLE_TYPE_BY_KEY.items()}

WRITE_BLOCK_SIZE = 512


@dataclass
class SceneMetadata:
    """Georeferencing and physical layout of one raster file."""

    path: str
    crs: CrsDef
    transform: GeoTransform
    shape: GridShape
    bands: int
    sample_type: str
    nodata: float | None
    block_layout: tuple  # ("tiled", w, h) | ("striped", rows_per_strip)
    time_range: tuple[float, float] | None
    byte_order: str  # "<" or ">"
    compression: int
    chunk_offsets: np.ndarray
    chunk_counts: np.ndarray

    @property
    def block_width(self) -> int:
        return self.block_layout[1] if self.block_layout[0] == "tiled" else self.shape.cols

    @property
    def block_height(self) -> int:
        return self.block_layout[2] if self.block_layout[0] == "tiled" else self.block_layout[1]

    @property
    def block_rows(self) -> int:
        return -(-self.shape.rows // self.block_height)

    @property
    def block_cols(self) -> int:
        return -(-self.shape.cols // self.block_width)

    @property
    def dtype(self) -> np.dtype:
        return SAMPLE_DTYPES[self.sample_type].newbyteorder(self.byte_order)

    def bounds(self) -> BoundingBox:
        b = self.transform.bounds(self.shape)
        if self.time_range is not None:
            return b.with_time(*self.time_range)
        return b

    @property
    def resolution(self):
        return self.transform.resolution


def parse_time_from_name(name, filename_regex: str, date_format: str):
    """Time range from a filename pattern with 'date' (and optional 'stop') groups.

    The pattern is matched against the basename only.
    """
    m = re.search(filename_regex, os.path.basename(str(name)))
    if not m or "date" not in m.groupdict() or m.group("date") is None:
        return None
    start = calendar.timegm(datetime.strptime(m.group("date"), date_format).timetuple())
    stop = start
    if "stop" in m.groupdict() and m.group("stop") is not None:
        stop = calendar.timegm(datetime.strptime(m.group("stop"), date_format).timetuple())
    return (float(start), float(stop))


def _read_ifd_value(fh, order, ftype, count, raw4):
    if ftype not in _FIELD_TYPES:
        return None
    code, size = _FIELD_TYPES[ftype]
    total = size * count
    if total <= 4:
        data = raw4[:total]
    else:
        (offset,) = struct.unpack(order + "I", raw4)
        fh.seek(offset)
        data = fh.read(total)
        if len(data) != total:
            raise CorruptFile("tag value runs past end of file")
    if ftype == 2:
        return data.rstrip(b"\x00").decode("ascii", "replace")
    if ftype == 5:
        pairs = struct.unpack(order + "II" * count, data)
        return [pairs[i] / pairs[i + 1] for i in range(0, len(pairs), 2)]
    return list(struct.unpack(order + code * count, data))


def _parse_geokeys(shorts):
    if len(shorts) < 4:
        raise UnsupportedFormat("geokey directory too short")
    nkeys = shorts[3]
    keys = {}
    for i in range(nkeys):
        base = 4 + 4 * i
        if base + 4 > len(shorts):
            raise CorruptFile("geokey directory truncated")
        key_id, location, count, value = shorts[base:base + 4]
        if location == 0:
            keys[key_id] = value
    return keys


def parse_geotiff_header(path, filename_regex: str | None = None,
                         date_format: str | None = None) -> SceneMetadata:
    """Parse the first (full-resolution) IFD of a GeoTIFF into SceneMetadata."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise CorruptFile(f"{path}: shorter than a TIFF header")
        if head[:2] == b"II":
            order = "<"
        elif head[:2] == b"MM":
            order = ">"
        else:
            raise CorruptFile(f"{path}: bad byte-order mark {head[:2]!r}")
        (version,) = struct.unpack(order + "H", head[2:4])
        if version == 43:
            raise UnsupportedFormat(f"{path}: BigTIFF is not supported")
        if version != 42:
            raise CorruptFile(f"{path}: bad TIFF magic {version}")
        (ifd_offset,) = struct.unpack(order + "I", head[4:8])

        fh.seek(ifd_offset)
        raw = fh.read(2)
        if len(raw) != 2:
            raise CorruptFile(f"{path}: truncated IFD")
        (n_entries,) = struct.unpack(order + "H", raw)
        entries = fh.read(12 * n_entries)
        if len(entries) != 12 * n_entries:
            raise CorruptFile(f"{path}: truncated IFD")

        tags = {}
        for i in range(n_entries):
            tag, ftype, count = struct.unpack(order + "HHI", entries[12 * i:12 * i + 8])
            tags[tag] = (ftype, count, entries[12 * i + 8:12 * i + 12])
        values = {}
        for tag, (ftype, count, raw4) in tags.items():
            values[tag] = _read_ifd_value(fh, order, ftype, count, raw4)

    def require(tag, name):
        if tag not in values or values[tag] is None:
            raise UnsupportedFormat(f"{path}: missing required tag {name}")
        return values[tag]

    width = require(TAG_IMAGE_WIDTH, "ImageWidth")[0]
    height = require(TAG_IMAGE_LENGTH, "ImageLength")[0]
    bands = values.get(TAG_SAMPLES_PER_PIXEL, [1])[0]
    bits = require(TAG_BITS_PER_SAMPLE, "BitsPerSample")
    fmt = values.get(TAG_SAMPLE_FORMAT, [1] * bands)
    compression = values.get(TAG_COMPRESSION, [COMPRESSION_NONE])[0]
    planar = values.get(TAG_PLANAR_CONFIG, [1])[0]

    if len(set(bits)) != 1 or len(set(fmt)) != 1:
        raise UnsupportedFormat(f"{path}: heterogeneous band sample types")
    if compression not in (COMPRESSION_NONE, COMPRESSION_DEFLATE, COMPRESSION_DEFLATE_OLD):
        raise UnsupportedFormat(f"{path}: compression {compression} not supported")
    if planar != 1:
        raise UnsupportedFormat(f"{path}: only chunky planar configuration supported")
    key = (bits[0], fmt[0])
    if key not in _SAMPLE_TYPE_BY_KEY:
        raise UnsupportedFormat(f"{path}: sample type {key} not supported")
    sample_type = _SAMPLE_TYPE_BY_KEY[key]

    if TAG_MODEL_TRANSFORMATION in values:
        raise UnsupportedFormat(f"{path}: rotated geotransforms are rejected")
    scale = require(TAG_MODEL_PIXEL_SCALE, "ModelPixelScale")
    tiepoint = require(TAG_MODEL_TIEPOINT, "ModelTiepoint")
    if len(scale) < 2 or len(tiepoint) < 6:
        raise UnsupportedFormat(f"{path}: malformed georeferencing tags")
    # tiepoint maps raster point (i, j) to world (x, y): origin is the outer
    # corner of pixel (0, 0) once the tie offset is removed
    origin_x = tiepoint[3] - tiepoint[0] * scale[0]
    origin_y = tiepoint[4] + tiepoint[1] * scale[1]
    transform = GeoTransform(origin_x, origin_y, scale[0], -scale[1])

    geokeys = _parse_geokeys(require(TAG_GEO_KEY_DIRECTORY, "GeoKeyDirectory"))
    if GEOKEY_PROJECTED_CS_TYPE in geokeys:
        crs = crs_from_epsg(geokeys[GEOKEY_PROJECTED_CS_TYPE])
    elif GEOKEY_GEOGRAPHIC_TYPE in geokeys:
        crs = crs_from_epsg(geokeys[GEOKEY_GEOGRAPHIC_TYPE])
    else:
        raise UnsupportedFormat(f"{path}: no CRS geokey present")

    if TAG_TILE_OFFSETS in values:
        tw = values[TAG_TILE_WIDTH][0]
        th = values[TAG_TILE_LENGTH][0]
        if tw % 16 or th % 16:
            raise UnsupportedFormat(f"{path}: tile size {tw}x{th} not a multiple of 16")
        layout = ("tiled", tw, th)
        offsets = values[TAG_TILE_OFFSETS]
        counts = require(TAG_TILE_BYTE_COUNTS, "TileByteCounts")
    elif TAG_STRIP_OFFSETS in values:
        rps = values.get(TAG_ROWS_PER_STRIP, [height])[0]
        layout = ("striped", min(rps, height))
        offsets = values[TAG_STRIP_OFFSETS]
        counts = require(TAG_STRIP_BYTE_COUNTS, "StripByteCounts")
    else:
        raise UnsupportedFormat(f"{path}: neither tile nor strip offsets present")

    nodata = None
    if TAG_GDAL_NODATA in values and isinstance(values[TAG_GDAL_NODATA], str):
        try:
            nodata = float(values[TAG_GDAL_NODATA].strip())
        except ValueError:
            nodata = None

    time_range = None
    if filename_regex and date_format:
        time_range = parse_time_from_name(path, filename_regex, date_format)

    meta = SceneMetadata(
        path=str(path), crs=crs, transform=transform,
        shape=GridShape(height, width), bands=bands, sample_type=sample_type,
        nodata=nodata, block_layout=layout, time_range=time_range,
        byte_order=order, compression=compression,
        chunk_offsets=np.asarray(offsets, dtype=np.int64),
        chunk_counts=np.asarray(counts, dtype=np.int64),
    )
    expected = meta.block_rows * meta.block_cols
    if len(meta.chunk_offsets) != expected or len(meta.chunk_counts) != expected:
        raise CorruptFile(f"{path}: {len(meta.chunk_offsets)} chunks, expected {expected}")
    return meta


def _decode_chunk(scene: SceneMetadata, block_row: int, block_col: int) -> np.ndarray:
    """Read, decompress, and deinterleave one chunk to (bh, bw, bands)."""
    idx = block_row * scene.block_cols + block_col
    offset = int(scene.chunk_offsets[idx])
    count = int(scene.chunk_counts[idx])
    with open(scene.path, "rb") as fh:
        fh.seek(offset)
        raw = fh.read(count)
    if len(raw) != count:
        raise CorruptFile(f"{scene.path}: chunk {idx} truncated")
    if scene.compression in (COMPRESSION_DEFLATE, COMPRESSION_DEFLATE_OLD):
        try:
            raw = zlib.decompress(raw)
        except zlib.error as exc:
            raise CorruptFile(f"{scene.path}: chunk {idx}: {exc}") from exc

    itemsize = scene.dtype.itemsize
    bw, bh = scene.block_width, scene.block_height
    if scene.block_layout[0] == "tiled":
        rows = bh
    else:
        rows = min(bh, scene.shape.rows - block_row * bh)
    expected = rows * bw * scene.bands * itemsize
    if len(raw) != expected:
        raise CorruptFile(
            f"{scene.path}: chunk {idx} is {len(raw)} bytes, expected {expected}")
    arr = np.frombuffer(raw, dtype=scene.dtype).reshape(rows, bw, scene.bands)
    return arr


def read_block(scene: SceneMetadata, band: int, block_row: int, block_col: int,
               cache: BlockCache | None = None) -> Block:
    """One band of one block, through the cache when given.

    Edge blocks are padded to full block size with the nodata value (0 when
    none is declared) so downstream windowing never branches on position.
    """
    if not (0 <= band < scene.bands):
        raise IndexError(f"band {band} out of range")
    if not (0 <= block_row < scene.block_rows and 0 <= block_col < scene.block_cols):
        raise IndexError(f"block ({block_row}, {block_col}) out of range")

    def load() -> Block:
        chunk = _decode_chunk(scene, block_row, block_col)
        bw, bh = scene.block_width, scene.block_height
        pad = scene.nodata if scene.nodata is not None else 0
        native = scene.dtype.newbyteorder("=")
        data = np.full((bh, bw), pad, dtype=native)
        valid_rows = min(bh, scene.shape.rows - block_row * bh)
        valid_cols = min(bw, scene.shape.cols - block_col * bw)
        data[:chunk.shape[0], :] = chunk[:, :, band]
        # anything past the image edge is padding regardless of file content
        data[valid_rows:, :] = pad
        data[:, valid_cols:] = pad
        return Block(band, block_row, block_col, data)

    if cache is None:
        return load()
    key = (scene.path, band, block_row, block_col)
    return cache.get_or_load(key, load)


# ---------------------------------------------------------------------------
# writer

def _sanitize_for_write(patch: Patch):
    fill = patch.nodata if patch.nodata is not None else patch.fill_value
    data = np.where(patch.valid[None, :, :], patch.samples, np.float32(fill))
    dtype = SAMPLE_DTYPES[patch.sample_type]
    if patch.sample_type in INTEGER_SAMPLE_TYPES:
        info = np.iinfo(dtype)
        data = np.clip(np.rint(data), info.min, info.max)
    return data.astype(dtype), fill


def write_geotiff(path, patch: Patch, tile_size: int = WRITE_BLOCK_SIZE) -> None:
    """Write an uncompressed tiled little-endian GeoTIFF.

    parse_geotiff_header on the result round-trips the metadata and reading
    the samples back reproduces the written values exactly.
    """
    epsg = epsg_alias(patch.crs)
    if epsg is None:
        raise UnsupportedFormat(
            "patch CRS has no EPSG alias and cannot be encoded in geokeys")
    data, fill = _sanitize_for_write(patch)
    bands, height, width = data.shape
    itemsize = data.dtype.itemsize
    bits, fmt = _SAMPLE_KEY_BY_TYPE[patch.sample_type]

    n_tile_rows = -(-height // tile_size)
    n_tile_cols = -(-width // tile_size)
    n_tiles = n_tile_rows * n_tile_cols
    tile_bytes = tile_size * tile_size * bands * itemsize

    if patch.crs.kind == "geographic":
        geokeys = [(GEOKEY_MODEL_TYPE, 2), (GEOKEY_RASTER_TYPE, 1),
                   (GEOKEY_GEOGRAPHIC_TYPE, epsg)]
    else:
        geokeys = [(GEOKEY_MODEL_TYPE, 1), (GEOKEY_RASTER_TYPE, 1),
                   (GEOKEY_PROJECTED_CS_TYPE, epsg)]
    key_dir = [1, 1, 0, len(geokeys)]
    for key_id, value in geokeys:
        key_dir += [key_id, 0, 1, value]

    write_nodata = patch.nodata is not None or not patch.valid.all()
    tags = [
        (TAG_IMAGE_WIDTH, 4, [width]),
        (TAG_IMAGE_LENGTH, 4, [height]),
        (TAG_BITS_PER_SAMPLE, 3, [bits] * bands),
        (TAG_COMPRESSION, 3, [COMPRESSION_NONE]),
        (TAG_PHOTOMETRIC, 3, [1]),
        (TAG_SAMPLES_PER_PIXEL, 3, [bands]),
        (TAG_PLANAR_CONFIG, 3, [1]),
        (TAG_TILE_WIDTH, 3, [tile_size]),
        (TAG_TILE_LENGTH, 3, [tile_size]),
        (TAG_TILE_OFFSETS, 4, None),  # filled in below
        (TAG_TILE_BYTE_COUNTS, 4, [tile_bytes] * n_tiles),
        (TAG_SAMPLE_FORMAT, 3, [fmt] * bands),
        (TAG_MODEL_PIXEL_SCALE, 12, [patch.res.xres, patch.res.yres, 0.0]),
        (TAG_MODEL_TIEPOINT, 12, [0.0, 0.0, 0.0, patch.bbox.minx, patch.bbox.maxy, 0.0]),
        (TAG_GEO_KEY_DIRECTORY, 3, key_dir),
    ]
    if write_nodata:
        nodata_ascii = f"{fill:g}".encode("ascii") + b"\x00"
        tags.append((TAG_GDAL_NODATA, 2, nodata_ascii))

    ifd_size = 2 + 12 * len(tags) + 4
    external_at = 8 + ifd_size
    external = bytearray()
    entry_values = {}
    for tag, ftype, values in tags:
        if values is None:
            values = [0] * n_tiles  # placeholder, patched after layout is known
        code, size = _FIELD_TYPES[ftype]
        count = len(values)
        if ftype in (1, 2):
            payload = bytes(values)
        else:
            payload = struct.pack("<" + code * count, *values)
        if len(payload) <= 4:
            entry_values[tag] = (ftype, count, payload.ljust(4, b"\x00"), None)
        else:
            if len(external) % 2:
                external += b"\x00"
            entry_values[tag] = (ftype, count, None, external_at + len(external))
            external += payload

    data_at = external_at + len(external)
    if data_at % 2:
        external += b"\x00"
        data_at += 1
    tile_offsets = [data_at + i * tile_bytes for i in range(n_tiles)]

    # patch the tile offset payload now that the data origin is known
    payload = struct.pack("<" + "I" * n_tiles, *tile_offsets)
    ftype, count, inline, ext_at = entry_values[TAG_TILE_OFFSETS]
    if inline is not None:
        entry_values[TAG_TILE_OFFSETS] = (ftype, count, payload.ljust(4, b"\x00"), None)
    else:
        external[ext_at - external_at:ext_at - external_at + len(payload)] = payload

    ifd = bytearray(struct.pack("<H", len(tags)))
    for tag, ftype, _ in tags:
        ftype_, count, inline, ext_at = entry_values[tag]
        raw4 = inline if inline is not None else struct.pack("<I", ext_at)
        ifd += struct.pack("<HHI", tag, ftype_, count) + raw4
    ifd += struct.pack("<I", 0)  # no further IFDs

    interleaved = np.ascontiguousarray(np.moveaxis(data, 0, -1))  # (H, W, C)
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<2sHI", b"II", 42, 8))
            fh.write(ifd)
            fh.write(external)
            tile = np.empty((tile_size, tile_size, bands), dtype=data.dtype)
            for tr in range(n_tile_rows):
                for tc in range(n_tile_cols):
                    tile[:] = np.asarray(fill, dtype=data.dtype)
                    rows = min(tile_size, height - tr * tile_size)
                    cols = min(tile_size, width - tc * tile_size)
                    tile[:rows, :cols] = interleaved[
                        tr * tile_size:tr * tile_size + rows,
                        tc * tile_size:tc * tile_size + cols]
                    fh.write(tile.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
