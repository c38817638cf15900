"""Command-line surface: inspect, synthesize, align, sample, benchmark."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .bench import BenchConfig, run_benchmark
from .cache import BlockCache
from .dataset import DEFAULT_CACHE_BYTES, load_dataset_config
from .errors import GeopatchError
from .geometry import BoundingBox, Resolution, grid_shape
from .projection import parse_crs
from .samplers import SamplerConfig, iter_boxes
from .synth import make_desk_fixture, spec_from_dict, synth_raster
from .tiff import parse_geotiff_header, write_geotiff
from .warp import warp_scene


def cmd_info(args) -> int:
    meta = parse_geotiff_header(args.file)
    b = meta.bounds()
    res = meta.resolution
    print(f"file:        {meta.path}")
    print(f"crs:         {meta.crs}")
    print(f"size:        {meta.shape.cols} x {meta.shape.rows} px, "
          f"{meta.bands} band(s), {meta.sample_type}")
    print(f"resolution:  {res.xres} x {res.yres}")
    print(f"bounds:      {b.minx} {b.miny} {b.maxx} {b.maxy}")
    print(f"blocks:      {meta.block_layout[0]} "
          f"{meta.block_width}x{meta.block_height} "
          f"({meta.block_rows} x {meta.block_cols} grid)")
    print(f"compression: {'none' if meta.compression == 1 else 'deflate'}")
    print(f"nodata:      {meta.nodata}")
    if meta.time_range:
        print(f"time:        {meta.time_range[0]} .. {meta.time_range[1]}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.preset:
        info = make_desk_fixture(out, scene_px=args.scene_px, bands=args.bands)
        print(f"wrote {info['scenes']} scenes + label + config under {out}")
        return 0
    doc = json.loads(Path(args.spec).read_text())
    rasters = doc["rasters"] if isinstance(doc, dict) and "rasters" in doc else [doc]
    for entry in rasters:
        entry = dict(entry)
        name = entry.pop("path")
        spec = spec_from_dict(entry)
        synth_raster(spec, out / name)
        print(f"wrote {out / name}")
    return 0


def cmd_warp(args) -> int:
    dst_crs = parse_crs(args.t_srs)
    xmin, ymin, xmax, ymax = args.te
    width, height = args.ts
    if width < 1 or height < 1:
        raise GeopatchError(f"-ts must be positive, got {width} {height}")
    if xmax <= xmin or ymax <= ymin:
        raise GeopatchError("-te must be xmin ymin xmax ymax with min < max")
    bbox = BoundingBox(xmin, xmax, ymin, ymax)
    res = Resolution(bbox.width / width, bbox.height / height)
    shape = grid_shape(bbox, res)
    if (shape.rows, shape.cols) != (height, width):
        raise GeopatchError(f"-te and -ts disagree: grid is {shape}")
    meta = parse_geotiff_header(args.src)
    patch = warp_scene(meta, dst_crs, bbox, res, args.r,
                       BlockCache(DEFAULT_CACHE_BYTES))
    write_geotiff(args.dst, patch)
    print(f"wrote {args.dst}: {width} x {height} px, {args.t_srs}, "
          f"bounds {xmin} {ymin} {xmax} {ymax}")
    return 0


def cmd_sample(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset_config(args.dataset)
    cfg = SamplerConfig(width=args.patch_px, height=args.patch_px, units="px",
                        stride=args.stride_px, length=args.n,
                        batch_size=args.batch_size, seed=args.seed)
    manifest = {
        "sampler": args.sampler, "seed": args.seed, "n": args.n,
        "patch_px": args.patch_px, "crs": str(dataset.crs), "patches": [],
    }
    for i, box in enumerate(iter_boxes(args.sampler, dataset, cfg)):
        if i >= args.n:
            break
        sample = dataset.query(box)
        files = {}
        hashes = {}
        for role, patch in sorted(sample.patches.items()):
            name = f"patch_{i:05d}_{role}.tif"
            write_geotiff(out / name, patch)
            files[role] = name
            digest = hashlib.sha256()
            digest.update(patch.samples.tobytes())
            digest.update(patch.valid.tobytes())
            hashes[role] = digest.hexdigest()
        manifest["patches"].append({
            "index": i,
            "bbox": [box.minx, box.miny, box.maxx, box.maxy],
            "files": files,
            "sha256": hashes,
        })
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1,
                                                  sort_keys=True))
    print(f"wrote {len(manifest['patches'])} patches + manifest.json to {out}")
    return 0


def cmd_bench(args) -> int:
    from .bench import BenchReport
    from .report import write_report
    cfg = BenchConfig.from_json(args.config)

    def progress(row):
        print(f"{row.sampler:13s} batch={row.batch_size:<4d} {row.mode:12s} "
              f"seed={row.seed:<3d} {row.patches_per_sec:9.1f} patches/s "
              f"(hits={row.cache_hits} misses={row.cache_misses})")

    report = BenchReport()
    try:
        run_benchmark(cfg, progress=progress, into=report)
    except Exception:
        if report.rows:  # flush whatever finished before the failure
            write_report(report, args.output, figures=False)
            print(f"wrote partial report ({len(report.rows)} rows) "
                  f"to {args.output}", file=sys.stderr)
        raise
    written = write_report(report, args.output, figures=not args.no_figures)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geopatch",
        description="Pixel-aligned patch sampling from geospatial layers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", help="print scene metadata")
    p.add_argument("file")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("synth", help="generate synthetic fixture scenes")
    p.add_argument("spec", nargs="?", help="synthetic raster spec (JSON)")
    p.add_argument("--preset", choices=["desk"], help="built-in fixture preset")
    p.add_argument("--scene-px", type=int, default=2048)
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("warp", help="produce an aligned raster")
    p.add_argument("-t_srs", required=True, metavar="EPSG:nnnn",
                   help="destination CRS")
    p.add_argument("-te", required=True, nargs=4, type=float,
                   metavar=("xmin", "ymin", "xmax", "ymax"),
                   help="destination bounds")
    p.add_argument("-ts", required=True, nargs=2, type=int,
                   metavar=("W", "H"), help="destination size in pixels")
    p.add_argument("-r", default="nearest", choices=["nearest", "bilinear"],
                   help="resampling method")
    p.add_argument("src")
    p.add_argument("dst")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("sample", help="write sampled patches as GeoTIFFs")
    p.add_argument("--dataset", required=True, help="dataset config (JSON)")
    p.add_argument("--sampler", default="random",
                   choices=["random", "random-batch", "grid"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patch-px", type=int, default=224)
    p.add_argument("--stride-px", type=int, default=112)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bench", help="run the data-loader benchmark")
    p.add_argument("--config", required=True, help="benchmark config (JSON)")
    p.add_argument("-o", "--output", required=True, help="report CSV path")
    p.add_argument("--no-figures", action="store_true",
                   help="skip the companion PNG figures")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and not args.preset and not args.spec:
        parser.error("synth needs a SPEC file or --preset")
    try:
        return args.func(args)
    except GeopatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
