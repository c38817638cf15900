"""LRU cache of decoded raster blocks, shared by all query workers."""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np


@dataclass
class Block:
    """One decoded band of one raster block, padded to full block size."""

    band: int
    block_row: int
    block_col: int
    data: np.ndarray  # (block_h, block_w) in the file's sample dtype

    @property
    def nbytes(self) -> int:
        return self.data.nbytes


class BlockCache:
    """Byte-capped LRU map from (file id, band, block index) to Block.

    Internally locked so any number of workers may read through it
    concurrently; counters are exact after quiescence.  Eviction happens
    before insertion, so resident bytes never exceed capacity; a block larger
    than the whole capacity is returned but never retained.
    """

    def __init__(self, capacity_bytes: int):
        if capacity_bytes < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity_bytes = capacity_bytes
        self._blocks: OrderedDict = OrderedDict()
        self._lock = threading.RLock()
        self._resident = 0
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self.bytes_decoded = 0

    @property
    def resident_bytes(self) -> int:
        return self._resident

    def __len__(self):
        return len(self._blocks)

    def get_or_load(self, key, loader) -> Block:
        """Return the cached block, loading and caching it on a miss."""
        with self._lock:
            block = self._blocks.get(key)
            if block is not None:
                self._blocks.move_to_end(key)
                self.hits += 1
                return block
            self.misses += 1
            block = loader()
            self.bytes_decoded += block.nbytes
            if block.nbytes <= self.capacity_bytes:
                while self._resident + block.nbytes > self.capacity_bytes:
                    _, victim = self._blocks.popitem(last=False)
                    self._resident -= victim.nbytes
                    self.evictions += 1
                self._blocks[key] = block
                self._resident += block.nbytes
            return block

    def contains(self, key) -> bool:
        with self._lock:
            return key in self._blocks

    def reset_counters(self):
        with self._lock:
            self.hits = self.misses = self.evictions = self.bytes_decoded = 0

    def clear(self):
        with self._lock:
            self._blocks.clear()
            self._resident = 0

    def stats(self) -> dict:
        with self._lock:
            return {
                "hits": self.hits,
                "misses": self.misses,
                "evictions": self.evictions,
                "bytes_decoded": self.bytes_decoded,
                "resident_bytes": self._resident,
                "blocks": len(self._blocks),
            }
