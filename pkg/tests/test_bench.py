import json
from pathlib import Path

import numpy as np
import pytest

from conftest import constant_scene
from geopatch.bench import (
    BenchConfig,
    BenchReport,
    BenchRow,
    preprocess_dataset,
    run_benchmark,
    sequence_digest,
)
from geopatch.cache import BlockCache
from geopatch.dataset import load_dataset_config
from geopatch.geometry import BoundingBox


@pytest.fixture(scope="module")
def bench_cfg(tiny_fixture):
    return BenchConfig(
        dataset_config=tiny_fixture["config"],
        samplers=("random", "grid"),
        batch_sizes=(4,),
        epoch_size=24,
        patch_px=48,
        stride_px=24,
        workers=2,
        cache_bytes=256 << 20,
        modes=("warped",),
        seeds=(0, 1),
    )


@pytest.fixture(scope="module")
def report(bench_cfg):
    return run_benchmark(bench_cfg)


class TestRunBenchmark:
    def test_row_count_is_full_grid(self, bench_cfg, report):
        want = (len(bench_cfg.samplers) * len(bench_cfg.batch_sizes)
                * len(bench_cfg.modes) * len(bench_cfg.seeds))
        assert len(report.rows) == want

    def test_rate_is_epoch_over_wall(self, report):
        for r in report.rows:
            assert r.patches_per_sec == pytest.approx(r.epoch_size / r.wall_s,
                                                      rel=1e-6)

    def test_min_mean_max_ordering(self, report):
        for r in report.rows:
            assert r.min_rate <= r.patches_per_sec <= r.max_rate

    def test_same_seed_same_sequence_hash(self, bench_cfg, report):
        again = run_benchmark(bench_cfg)
        for a, b in zip(report.rows, again.rows):
            assert a.sequence_hash == b.sequence_hash

    def test_different_seeds_differ_for_random(self, report):
        hashes = {r.seed: r.sequence_hash for r in report.rows
                  if r.sampler == "random"}
        assert hashes[0] != hashes[1]

    def test_grid_sequence_independent_of_seed(self, report):
        hashes = {r.sequence_hash for r in report.rows if r.sampler == "grid"}
        assert len(hashes) == 1


class TestCacheAccounting:
    def test_warm_hits_equal_cold_misses(self, tiny_fixture):
        """Same sequence: all-hits warm run and all-miss cold run must agree
        on the total number of block accesses."""
        base = dict(dataset_config=tiny_fixture["config"], samplers=("grid",),
                    batch_sizes=(4,), epoch_size=16, patch_px=48, stride_px=48,
                    workers=1, modes=("warped",), seeds=(0,))
        warm = run_benchmark(BenchConfig(cache_bytes=256 << 20, **base)).rows[0]
        cold = run_benchmark(BenchConfig(cache_bytes=0, **base)).rows[0]
        assert warm.cache_misses == 0
        assert warm.cache_hits > 0
        assert cold.cache_hits == 0
        assert cold.cache_misses == warm.cache_hits

    def test_grid_second_epoch_hit_rate(self, tiny_fixture):
        # cache >= working set: after the warm-up epoch, the timed grid epoch
        # should be nearly all hits (single worker makes the trace exact)
        cfg = BenchConfig(dataset_config=tiny_fixture["config"],
                          samplers=("grid",), batch_sizes=(16,),
                          epoch_size=64, patch_px=48, stride_px=24, workers=1,
                          cache_bytes=256 << 20, modes=("warped",), seeds=(0,))
        row = run_benchmark(cfg).rows[0]
        rate = row.cache_hits / (row.cache_hits + row.cache_misses)
        assert rate > 0.9


class TestPreprocess:
    def test_preprocessed_matches_warped_on_constants(self, tmp_path):
        (tmp_path / "img").mkdir()
        box = BoundingBox(300000, 300000 + 512 * 30, 4650000, 4650000 + 512 * 30)
        constant_scene(tmp_path / "img" / "s.tif", 9, box)
        cfg = {"crs": "EPSG:32619", "res": 30,
               "layers": [{"type": "raster", "role": "image", "root": "img",
                           "glob": "*.tif", "resampling": "nearest"}]}
        cfg_path = tmp_path / "ds.json"
        cfg_path.write_text(json.dumps(cfg))
        pre_cfg = preprocess_dataset(cfg_path, tmp_path / "pre")
        d_warp = load_dataset_config(cfg_path)
        d_pre = load_dataset_config(pre_cfg)
        q = BoundingBox(box.minx + 990, box.minx + 3990,
                        box.miny + 1020, box.miny + 4020)
        a = d_warp.query(q)["image"]
        b = d_pre.query(q)["image"]
        assert np.array_equal(a.valid, b.valid)
        assert np.array_equal(a.samples[:, a.valid], b.samples[:, b.valid])

    def test_preprocess_is_reused_unless_forced(self, tmp_path):
        (tmp_path / "img").mkdir()
        box = BoundingBox(0, 3000, 0, 3000)
        constant_scene(tmp_path / "img" / "s.tif", 1, box)
        cfg_path = tmp_path / "ds.json"
        cfg_path.write_text(json.dumps(
            {"crs": "EPSG:32619", "res": 30,
             "layers": [{"type": "raster", "role": "image", "root": "img",
                         "glob": "*.tif"}]}))
        first = preprocess_dataset(cfg_path, tmp_path / "pre")
        marker = Path(first)
        stamp = marker.stat().st_mtime_ns
        second = preprocess_dataset(cfg_path, tmp_path / "pre")
        assert first == second
        assert marker.stat().st_mtime_ns == stamp  # untouched


class TestHelpers:
    def test_sequence_digest_sensitivity(self):
        a = [BoundingBox(0, 1, 0, 1), BoundingBox(1, 2, 1, 2)]
        b = [BoundingBox(0, 1, 0, 1), BoundingBox(1, 2, 1, 2.5)]
        assert sequence_digest(a) == sequence_digest(list(a))
        assert sequence_digest(a) != sequence_digest(b)

    def test_config_from_json_resolves_relative_paths(self, tmp_path, tiny_fixture):
        cfg_file = tmp_path / "bench.json"
        rel = Path(tiny_fixture["config"])
        cfg_file.write_text(json.dumps({
            "dataset_config": str(rel), "samplers": ["grid"],
            "batch_sizes": [2], "epoch_size": 4, "workers": 1}))
        cfg = BenchConfig.from_json(cfg_file)
        assert Path(cfg.dataset_config).is_absolute() or rel.exists()
        assert cfg.samplers == ("grid",)
        assert cfg.epoch_size == 4
        assert cfg.patch_px == 224  # protocol default
        assert cfg.stride_px == 112
        assert cfg.workers == 1

    def test_report_cell_lookup(self):
        rows = [BenchRow("grid", 4, "warped", 0, 8, 10.0, 9.0, 11.0,
                         1, 2, 0, 100, 0.8)]
        rep = BenchReport(rows)
        assert rep.mean_rate("grid", 4, "warped") == 10.0
        assert rep.cell("grid", 4, "warped", seed=0)[0] is rows[0]
