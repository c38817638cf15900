"""Patch-sampling throughput harness.

Measures the rate at which a dataset + sampler pair can serve patches to a
pool of consumer workers, across samplers, batch sizes, cache settings, and
preprocessing modes.  The sampler runs sequentially in the parent and feeds
work in batch-size chunks to worker processes (mirroring how training data
loaders dispatch batches); each worker holds its own block cache, as
per-process raster caches do in real loaders.  Every configuration cell gets
fresh workers, a warm-up epoch (discarded), and one or more timed epochs;
per-worker counters are summed into the report row.

Modes: "warped" queries the heterogeneous-CRS layers directly (alignment on
the fly); "preprocessed" first materializes every scene on the destination
grid (untimed), then benchmarks sampling from the aligned copies.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import multiprocessing
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

from .cache import BlockCache
from .dataset import load_dataset_config
from .samplers import SamplerConfig, iter_boxes
from .synth import _snap_out
from .tiff import write_geotiff
from .warp import warp_scene

WARPED = "warped"
PREPROCESSED = "preprocessed"


@dataclass
class BenchConfig:
    """Benchmark grid; the defaults reproduce the reference protocol
    (epoch 4096, patch 224 px, stride 112 px, 6 loader workers)."""

    dataset_config: str
    samplers: tuple = ("random", "random-batch", "grid")
    batch_sizes: tuple = (16,)
    epoch_size: int = 4096
    patch_px: int = 224
    stride_px: int = 112
    workers: int = 6
    cache_bytes: int | None = None
    modes: tuple = (WARPED,)
    seeds: tuple = (0,)
    warmup_epochs: int = 1
    timed_epochs: int = 1

    @classmethod
    def from_json(cls, path) -> "BenchConfig":
        raw = json.loads(Path(path).read_text())
        raw["dataset_config"] = str((Path(path).parent / raw["dataset_config"]))
        for key in ("samplers", "batch_sizes", "modes", "seeds"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


@dataclass
class BenchRow:
    sampler: str
    batch_size: int
    mode: str
    seed: int
    epoch_size: int
    patches_per_sec: float
    min_rate: float
    max_rate: float
    cache_hits: int
    cache_misses: int
    evictions: int
    bytes_decoded: int
    wall_s: float
    sequence_hash: str = ""


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def cell(self, sampler, batch_size, mode, seed=None):
        got = [r for r in self.rows
               if r.sampler == sampler and r.batch_size == batch_size
               and r.mode == mode and (seed is None or r.seed == seed)]
        return got

    def mean_rate(self, sampler, batch_size, mode):
        rows = self.cell(sampler, batch_size, mode)
        return sum(r.patches_per_sec for r in rows) / len(rows)


def sequence_digest(boxes) -> str:
    h = hashlib.sha256()
    for b in boxes:
        h.update(struct.pack("<4d", b.minx, b.maxx, b.miny, b.maxy))
    return h.hexdigest()


_worker_state: dict = {}


def _bench_worker_init(config_path, cache_bytes):
    """Open the dataset with a private block cache in each worker process."""
    cache = BlockCache(cache_bytes) if cache_bytes is not None else None
    dataset = load_dataset_config(config_path, cache=cache)
    if cache is None:
        cache = _find_cache(dataset)
    _worker_state["dataset"] = dataset
    _worker_state["cache"] = cache


def _bench_worker_run(boxes):
    dataset = _worker_state["dataset"]
    for box in boxes:
        dataset.query(box)
    return os.getpid(), len(boxes), _worker_state["cache"].stats()


def _chunks(boxes, size):
    chunk = []
    for b in boxes:
        chunk.append(b)
        if len(chunk) == size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


def preprocess_dataset(config_path, out_dir, force: bool = False) -> str:
    """Warp every raster scene onto the destination grid ahead of time.

    Writes aligned copies plus a new dataset config; returns the config path.
    Reused as-is when it already exists (delete or pass force to rebuild).
    """
    out_dir = Path(out_dir)
    out_cfg_path = out_dir / "dataset.json"
    if out_cfg_path.exists() and not force:
        return str(out_cfg_path)
    cfg = json.loads(Path(config_path).read_text())
    dataset = load_dataset_config(config_path, cache=BlockCache(0))
    crs, res = dataset.crs, dataset.res

    out_layers = []
    for lc in cfg["layers"]:
        if lc.get("type", "raster") != "raster":
            out_layers.append(lc)
            continue
        src_root = Path(config_path).parent / lc["root"]
        dst_root = out_dir / lc["root"]
        dst_root.mkdir(parents=True, exist_ok=True)
        from .dataset import RasterLayerDataset
        layer = RasterLayerDataset(src_root, glob=lc.get("glob", "*.tif"),
                                   crs=crs, res=res,
                                   resampling=lc.get("resampling"),
                                   is_label=lc.get("is_label", False),
                                   cache=BlockCache(0))
        for scene, fp in zip(layer.scenes, layer.scene_footprints()):
            dst_box = _snap_out(fp, res.xres, 0.0)
            patch = warp_scene(scene, crs, dst_box, res, layer.resampling)
            write_geotiff(dst_root / Path(scene.path).name, patch)
        new_lc = dict(lc)
        new_lc.pop("filename_regex", None)
        new_lc.pop("date_format", None)
        out_layers.append(new_lc)

    epsg = crs.epsg if crs.epsg else None
    out_cfg = dict(cfg)
    out_cfg["layers"] = out_layers
    out_cfg["crs"] = f"EPSG:{epsg}" if epsg else cfg["crs"]
    out_cfg_path.write_text(json.dumps(out_cfg, indent=1, sort_keys=True))
    return str(out_cfg_path)


def run_benchmark(cfg: BenchConfig, progress=None,
                  into: BenchReport | None = None) -> BenchReport:
    """Execute the full benchmark grid.

    Rows are appended to `into` (when given) as cells finish, so a caller can
    flush a partial report if a later cell fails.
    """
    report = into if into is not None else BenchReport()
    config_for_mode = {WARPED: cfg.dataset_config}
    if PREPROCESSED in cfg.modes:
        out_dir = Path(cfg.dataset_config).parent / "preprocessed"
        config_for_mode[PREPROCESSED] = preprocess_dataset(
            cfg.dataset_config, out_dir)

    cells = list(itertools.product(cfg.samplers, cfg.batch_sizes,
                                   cfg.modes, cfg.seeds))
    ctx = multiprocessing.get_context("fork")
    for sampler_kind, batch_size, mode, seed in cells:
        # the parent only runs the sampler, so a zero cache is enough here
        dataset = load_dataset_config(config_for_mode[mode], cache=BlockCache(0))
        scfg = SamplerConfig(width=cfg.patch_px, height=cfg.patch_px,
                             units="px", stride=cfg.stride_px,
                             length=cfg.epoch_size, batch_size=batch_size,
                             seed=seed)

        def epoch_boxes():
            return itertools.islice(iter_boxes(sampler_kind, dataset, scfg),
                                    cfg.epoch_size)

        seq_hash = sequence_digest(epoch_boxes())

        rates = []
        walls = []
        n_total = 0
        baseline: dict = {}
        worker_stats: dict = {}
        with ctx.Pool(cfg.workers, initializer=_bench_worker_init,
                      initargs=(config_for_mode[mode], cfg.cache_bytes)) as pool:
            for _ in range(cfg.warmup_epochs):
                # warm-up epochs are untimed; per-worker counter snapshots at
                # the end of warm-up become the baseline subtracted below
                for pid, _done, stats in pool.imap_unordered(
                        _bench_worker_run, _chunks(epoch_boxes(), batch_size)):
                    baseline[pid] = stats
            for _ in range(cfg.timed_epochs):
                n = 0
                t0 = time.perf_counter()
                for pid, done, stats in pool.imap_unordered(
                        _bench_worker_run, _chunks(epoch_boxes(), batch_size)):
                    n += done
                    worker_stats[pid] = stats  # cumulative per worker
                wall = time.perf_counter() - t0
                n_total = n
                walls.append(wall)
                rates.append(n / wall if wall > 0 else float("inf"))

        totals = {k: sum(s[k] - baseline.get(pid, {}).get(k, 0)
                         for pid, s in worker_stats.items())
                  for k in ("hits", "misses", "evictions", "bytes_decoded")}
        report.rows.append(BenchRow(
            sampler=sampler_kind, batch_size=batch_size, mode=mode, seed=seed,
            epoch_size=n_total,
            patches_per_sec=sum(rates) / len(rates),
            min_rate=min(rates), max_rate=max(rates),
            cache_hits=totals["hits"], cache_misses=totals["misses"],
            evictions=totals["evictions"],
            bytes_decoded=totals["bytes_decoded"],
            wall_s=sum(walls), sequence_hash=seq_hash))
        if progress is not None:
            progress(report.rows[-1])
    return report


def _find_cache(dataset) -> BlockCache:
    d = dataset
    while not hasattr(d, "cache"):
        d = d.d1
    return d.cache
