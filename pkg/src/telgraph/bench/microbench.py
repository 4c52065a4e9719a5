"""Seek/scan micro-benchmark over TEL, a linked list and a B+ tree.

Every store is loaded with the same deduplicated R-MAT graph, in the same
(random) arrival order. For each store we time

* seeks: locate the adjacency list of every start and read its first edge;
* edge access: from cursors already positioned at each list's first edge
  (placed by an untimed pass), read every edge; per-edge latency is this
  time over the number of edges read;
* full scans (seek plus edges), reported per start and used to cross-check
  that all stores return the same edges.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from ..baselines.bptree import BPlusTree
from ..baselines.linkedlist import LinkedListStore
from ..engine import Engine, EngineConfig
from .generate import dedupe, power_law_starts, rmat
from .loader import bulk_load

STORES = ("tel", "linkedlist", "btree")


@dataclass
class MicroResult:
    store: str
    scale_log2: int
    vertices: int
    edges: int
    scans: int
    edges_scanned: int
    seek_ns: float
    per_edge_ns: float
    scan_ns: float
    checksum: int

    def row(self) -> dict:
        return asdict(self)


class _TelRunner:
    def __init__(self, n, src, dst):
        cfg = EngineConfig(wal=False, compaction=False, group_interval=0,
                           extent=256 << 20)
        self.engine = Engine(config=cfg)
        bulk_load(self.engine, n, src, dst, unique=False)
        self.txn = self.engine.begin(read_only=True)
        self.erefs = self.engine.edges.to_numpy(n)

    def _views(self):
        s = self.engine.store
        return s.view(np.uint32), s.view()

    def seek(self, starts):
        from .. import kernels
        w, b = self._views()
        return int(kernels.tel_seek(w, b, self.erefs, starts, self.txn.tre))

    def scan(self, starts):
        from .. import kernels
        w, b = self._views()
        acc, edges = kernels.tel_scan(w, b, self.erefs, starts, self.txn.tre)
        return int(acc), int(edges)

    def locate(self, starts):
        from .. import kernels
        w, b = self._views()
        return kernels.tel_locate(w, b, self.erefs, starts)

    def scan_from(self, cursors):
        from .. import kernels
        w, _ = self._views()
        acc, edges = kernels.tel_scan_from(w, cursors[0], cursors[1], self.txn.tre)
        return int(acc), int(edges)

    def close(self):
        self.txn.commit()
        self.engine.close()


class _ListRunner:
    def __init__(self, n, src, dst):
        self.store = LinkedListStore.bulk_load(n, src, dst)

    def seek(self, starts):
        return self.store.seek_many(starts)

    def scan(self, starts):
        return self.store.scan_many(starts)

    def locate(self, starts):
        return self.store.locate_many(starts)

    def scan_from(self, cursors):
        return self.store.scan_from(cursors)

    def close(self):
        pass


class _TreeRunner:
    def __init__(self, n, src, dst):
        self.store = BPlusTree.bulk_load(src, dst)

    def seek(self, starts):
        return self.store.seek_many(starts)

    def scan(self, starts):
        return self.store.scan_many(starts)

    def locate(self, starts):
        return self.store.locate_many(starts)

    def scan_from(self, cursors):
        return self.store.scan_from(cursors)

    def close(self):
        pass


RUNNERS = {"tel": _TelRunner, "linkedlist": _ListRunner, "btree": _TreeRunner}


def _best(fn, starts, repeats):
    best, out = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(starts)
        best = min(best, time.perf_counter() - t0)
    return best, out


def run_microbench(scale_log2: int = 20, degree: int = 4, n_scans: int = 10**6,
                   seed: int = 0, stores=STORES, repeats: int = 3,
                   exponent: float = 1.0) -> list[MicroResult]:
    n = 1 << scale_log2
    src, dst = rmat(scale_log2, degree, seed)
    src, dst = dedupe(src, dst)
    degrees = np.bincount(src, minlength=n)
    starts = power_law_starts(degrees, n_scans, seed + 1, exponent)
    warm = starts[:64]
    results = []
    for name in stores:
        runner = RUNNERS[name](n, src, dst)
        try:
            runner.seek(warm)
            runner.scan(warm)
            runner.scan_from(runner.locate(warm))  # compile and fault in code paths
            t_seek, _ = _best(runner.seek, starts, repeats)
            cursors = runner.locate(starts)
            t_edges, (acc_from, edges) = _best(runner.scan_from, cursors, repeats)
            t_scan, (acc, full_edges) = _best(runner.scan, starts, repeats)
        finally:
            runner.close()
        if (acc_from, edges) != (acc, full_edges):
            raise AssertionError(f"{name}: positioned and full scans disagree")
        k = len(starts)
        results.append(MicroResult(name, scale_log2, n, len(src), k, edges,
                                   t_seek / k * 1e9, t_edges / max(edges, 1) * 1e9,
                                   t_scan / k * 1e9, acc))
    return results
