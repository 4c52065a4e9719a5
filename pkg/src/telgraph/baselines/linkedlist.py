"""Per-vertex singly linked adjacency lists in one node pool.

Nodes are laid out in insertion order, so when edges of many vertices arrive
interleaved, consecutive hops of one scan land far apart in memory.
"""
from __future__ import annotations

import numpy as np

from .. import kernels


class LinkedListStore:
    """Node ``i`` is ``pool[2i]`` (dst) and ``pool[2i+1]`` (next node or -1)."""

    def __init__(self, num_vertices: int, capacity: int = 1024):
        self.head = np.full(num_vertices, -1, dtype=np.int64)
        self.pool = np.empty(2 * max(capacity, 1), dtype=np.int64)
        self.size = 0
        self.hops = 0

    def _ensure(self, n: int) -> None:
        if 2 * n > self.pool.shape[0]:
            grown = np.empty(max(2 * n, 2 * self.pool.shape[0]), dtype=np.int64)
            grown[:2 * self.size] = self.pool[:2 * self.size]
            self.pool = grown

    def _ensure_vertex(self, v: int) -> None:
        if v >= self.head.shape[0]:
            grown = np.full(max(v + 1, 2 * self.head.shape[0]), -1, dtype=np.int64)
            grown[:self.head.shape[0]] = self.head
            self.head = grown

    def insert(self, src: int, dst: int) -> None:
        """Prepend ``src -> dst`` (newest first, duplicates allowed)."""
        self._ensure_vertex(src)
        self._ensure(self.size + 1)
        i = self.size
        self.pool[2 * i] = dst
        self.pool[2 * i + 1] = self.head[src]
        self.head[src] = i
        self.size += 1

    def delete(self, src: int, dst: int) -> bool:
        if src >= self.head.shape[0]:
            return False
        prev, node = -1, int(self.head[src])
        while node >= 0:
            self.hops += 1
            nxt = int(self.pool[2 * node + 1])
            if self.pool[2 * node] == dst:
                if prev < 0:
                    self.head[src] = nxt
                else:
                    self.pool[2 * prev + 1] = nxt
                return True
            prev, node = node, nxt
        return False

    def scan(self, src: int):
        node = int(self.head[src]) if src < self.head.shape[0] else -1
        while node >= 0:
            self.hops += 1
            yield int(self.pool[2 * node])
            node = int(self.pool[2 * node + 1])

    def seek(self, src: int):
        node = int(self.head[src]) if src < self.head.shape[0] else -1
        if node < 0:
            return None
        self.hops += 1
        return int(self.pool[2 * node])

    @classmethod
    def bulk_load(cls, num_vertices: int, src: np.ndarray, dst: np.ndarray) -> "LinkedListStore":
        """Same result as calling :meth:`insert` for each edge in order."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        m = len(src)
        store = cls(num_vertices, capacity=m)
        nxt = np.full(m, -1, dtype=np.int64)
        order = np.argsort(src, kind="stable")
        s_sorted = src[order]
        same = s_sorted[1:] == s_sorted[:-1]
        # within a vertex group, each node links to the edge that arrived before it
        nxt[order[1:][same]] = order[:-1][same]
        last = np.ones(m, dtype=bool)
        last[:-1] = ~same
        store.head[s_sorted[last]] = order[last]
        store.pool[0:2 * m:2] = dst
        store.pool[1:2 * m:2] = nxt
        store.size = m
        return store

    # compiled paths used by the micro-benchmark
    def seek_many(self, starts: np.ndarray) -> int:
        return int(kernels.list_seek(self.head, self.pool, starts))

    def scan_many(self, starts: np.ndarray) -> tuple[int, int]:
        acc, edges = kernels.list_scan(self.head, self.pool, starts)
        return int(acc), int(edges)

    def locate_many(self, starts: np.ndarray) -> np.ndarray:
        return self.head[starts]

    def scan_from(self, cursors) -> tuple[int, int]:
        acc, edges = kernels.list_scan_from(self.pool, cursors)
        return int(acc), int(edges)
