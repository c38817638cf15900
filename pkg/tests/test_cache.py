import threading
from collections import OrderedDict

import numpy as np
import pytest

from geopatch.cache import Block, BlockCache


def block(n=256):
    """Block of n bytes (n u8 samples)."""
    return Block(0, 0, 0, np.zeros(n, dtype=np.uint8).reshape(1, n))


class ReferenceLru:
    """Straightforward LRU model used as the eviction oracle."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.entries = OrderedDict()  # key -> nbytes
        self.evicted = []

    def access(self, key, nbytes):
        if key in self.entries:
            self.entries.move_to_end(key)
            return "hit"
        if nbytes <= self.capacity:
            while sum(self.entries.values()) + nbytes > self.capacity:
                victim, _ = self.entries.popitem(last=False)
                self.evicted.append(victim)
            self.entries[key] = nbytes
        return "miss"


class TestLruContract:
    def test_lru_eviction_order(self):
        cache = BlockCache(2 * 256)
        for key in ("a", "b", "a", "c"):
            cache.get_or_load(key, block)
        assert cache.contains("a")
        assert cache.contains("c")
        assert not cache.contains("b")  # least recently used at eviction time
        assert cache.evictions == 1

    def test_zero_capacity_retains_nothing(self):
        cache = BlockCache(0)
        for _ in range(5):
            cache.get_or_load("k", block)
        assert cache.misses == 5
        assert cache.hits == 0
        assert len(cache) == 0
        assert cache.resident_bytes == 0

    def test_counters_add_up(self):
        cache = BlockCache(1 << 16)
        keys = ["a", "b", "c", "a", "b", "d", "a"]
        for k in keys:
            cache.get_or_load(k, block)
        assert cache.hits + cache.misses == len(keys)
        assert cache.misses == 4  # distinct keys

    def test_grid_sweep_miss_count_matches_enumeration(self):
        # sweep over a block grid twice with room for everything:
        # misses == distinct blocks, hits == accesses - misses
        cache = BlockCache(1 << 20)
        grid = [(r, c) for r in range(6) for c in range(7)]
        accesses = 0
        for _ in range(2):
            for key in grid:
                cache.get_or_load(key, block)
                accesses += 1
        assert cache.misses == len(grid)
        assert cache.hits == accesses - len(grid)

    def test_bytes_decoded_counts_miss_payloads(self):
        cache = BlockCache(1 << 20)
        cache.get_or_load("a", lambda: block(100))
        cache.get_or_load("a", lambda: block(100))
        cache.get_or_load("b", lambda: block(50))
        assert cache.bytes_decoded == 150

    def test_block_bigger_than_capacity_is_returned_not_cached(self):
        cache = BlockCache(100)
        got = cache.get_or_load("big", lambda: block(1000))
        assert got.nbytes == 1000
        assert len(cache) == 0
        assert cache.resident_bytes == 0

    def test_capacity_never_exceeded_and_victims_match_oracle(self):
        rng = np.random.default_rng(13)
        capacity = 10 * 64
        cache = BlockCache(capacity)
        oracle = ReferenceLru(capacity)
        evicted_real = []

        orig_pop = cache._blocks.popitem

        def tracking_pop(last=False):
            k, v = orig_pop(last=last)
            evicted_real.append(k)
            return k, v

        cache._blocks.popitem = tracking_pop
        for step in range(10_000):
            key = int(rng.integers(0, 40))
            nbytes = 64
            oracle.access(key, nbytes)
            cache.get_or_load(key, lambda: block(64))
            assert cache.resident_bytes <= capacity
        assert evicted_real == oracle.evicted
        assert set(cache._blocks) == set(oracle.entries)

    def test_reset_counters_keeps_contents(self):
        cache = BlockCache(1 << 16)
        cache.get_or_load("a", block)
        cache.reset_counters()
        assert cache.misses == 0
        cache.get_or_load("a", block)
        assert cache.hits == 1

    def test_negative_capacity_rejected(self):
        with pytest.raises(ValueError):
            BlockCache(-1)


class TestConcurrency:
    def test_parallel_reads_have_exact_totals(self):
        cache = BlockCache(1 << 20)
        n_threads, per_thread = 8, 500

        def worker(tid):
            rng = np.random.default_rng(tid)
            for _ in range(per_thread):
                key = int(rng.integers(0, 32))
                got = cache.get_or_load(key, lambda: block(64))
                assert got.nbytes == 64

        threads = [threading.Thread(target=worker, args=(t,)) for t in range(n_threads)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert cache.hits + cache.misses == n_threads * per_thread
        assert cache.resident_bytes <= 1 << 20
