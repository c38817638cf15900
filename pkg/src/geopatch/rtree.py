"""Bulk-loaded R-tree over spatiotemporal bounding boxes.

Built once with sort-tile-recursive packing and immutable afterwards, so
queries are safe from any number of threads.  Results use the closed-open
overlap semantics of geometry.BoundingBox and come back in insertion order,
which keeps downstream mosaicking deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import BoundingBox


@dataclass
class _Node:
    minx: float
    maxx: float
    miny: float
    maxy: float
    children: list  # _Node list, or (seq, BoundingBox, id) leaf entries
    is_leaf: bool

    def touches(self, b: BoundingBox) -> bool:
        # loose (closed) test: never prunes an entry the strict test accepts
        return (self.minx <= b.maxx and b.minx <= self.maxx
                and self.miny <= b.maxy and b.miny <= self.maxy)


def _mbr(nodes) -> tuple:
    return (min(n.minx for n in nodes), max(n.maxx for n in nodes),
            min(n.miny for n in nodes), max(n.maxy for n in nodes))


class SpatialIndex:
    """R-tree answering box-intersection queries over (box, id) entries."""

    def __init__(self, entries, node_capacity: int = 16):
        """entries: iterable of (BoundingBox, id); order defines precedence."""
        self.node_capacity = node_capacity
        self._entries = [(seq, box, obj) for seq, (box, obj) in enumerate(entries)]
        self._root = self._build()

    def __len__(self):
        return len(self._entries)

    def _build(self):
        if not self._entries:
            return None
        cap = self.node_capacity
        leaves = []
        # sort-tile-recursive packing: vertical slabs by center x, rows by center y
        n_nodes = math.ceil(len(self._entries) / cap)
        n_slabs = math.ceil(math.sqrt(n_nodes))
        per_slab = n_slabs * cap
        by_x = sorted(self._entries, key=lambda e: (e[1].minx + e[1].maxx, e[0]))
        for s in range(0, len(by_x), per_slab):
            slab = sorted(by_x[s:s + per_slab],
                          key=lambda e: (e[1].miny + e[1].maxy, e[0]))
            for i in range(0, len(slab), cap):
                group = slab[i:i + cap]
                leaves.append(_Node(
                    min(e[1].minx for e in group), max(e[1].maxx for e in group),
                    min(e[1].miny for e in group), max(e[1].maxy for e in group),
                    group, True))
        level = leaves
        while len(level) > 1:
            parents = []
            n_nodes = math.ceil(len(level) / cap)
            n_slabs = math.ceil(math.sqrt(n_nodes))
            per_slab = n_slabs * cap
            by_x = sorted(level, key=lambda n: n.minx + n.maxx)
            for s in range(0, len(by_x), per_slab):
                slab = sorted(by_x[s:s + per_slab], key=lambda n: n.miny + n.maxy)
                for i in range(0, len(slab), cap):
                    group = slab[i:i + cap]
                    parents.append(_Node(*_mbr(group), group, False))
            level = parents
        return level[0]

    def query(self, b: BoundingBox) -> list:
        """Ids of exactly the entries whose boxes intersect b, insertion-ordered."""
        if self._root is None:
            return []
        hits = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            if not node.touches(b):
                continue
            if node.is_leaf:
                for seq, box, obj in node.children:
                    if box.intersects(b):
                        hits.append((seq, obj))
            else:
                stack.extend(node.children)
        hits.sort(key=lambda t: t[0])
        return [obj for _, obj in hits]
