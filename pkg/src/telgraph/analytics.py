"""In-place analytics on a consistent snapshot.

:func:`snapshot_view` runs inside a read-only transaction, so the snapshot
stays pinned (no block it reads can be recycled) while the CSR arrays are
built straight from the edge logs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass
class GraphView:
    """CSR snapshot of one label at ``epoch``.

    ``indptr``/``indices`` cover every id below ``n_ids``; ``alive`` marks the
    vertices that exist at the epoch. Edges may point at ids that are not
    alive (edge targets are not required to exist).
    """
    epoch: int
    n_ids: int
    alive: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def vertices(self) -> np.ndarray:
        return np.flatnonzero(self.alive)

    @property
    def num_edges(self) -> int:
        return int(self.indices.shape[0])

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.repeat(np.arange(self.n_ids, dtype=np.int64), np.diff(self.indptr))
        return src, self.indices

    def internal_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Edges whose endpoints are both alive vertices."""
        src, dst = self.edges()
        ok = (dst >= 0) & (dst < self.n_ids)
        ok[ok] = self.alive[dst[ok]]
        ok &= self.alive[src]
        return src[ok], dst[ok]


def snapshot_view(engine, label: int = 0, txn=None) -> GraphView:
    """Build a view at the snapshot of ``txn`` (a fresh read-only one if omitted)."""
    own = txn is None
    if own:
        worker = engine._default_worker()
        if worker.txn is not None:
            worker = engine.worker()
        txn = worker.begin(read_only=True)
    try:
        n = engine.next_vertex_id
        store = engine.store
        vrefs = engine.vertices.to_numpy(n)
        erefs = engine.edges.to_numpy(n)
        w, b = store.view(np.uint32), store.view()
        alive = kernels.vertex_alive(w, b, vrefs, txn.tre)
        indptr, indices = kernels.snapshot_csr(w, b, erefs, label, txn.tre)
        return GraphView(txn.tre, n, alive, indptr, indices)
    finally:
        if own:
            txn.commit()


def snapshot_view_slow(txn, label: int = 0) -> GraphView:
    """Reference view built through the transactional read API."""
    eng = txn.engine
    n = eng.next_vertex_id
    alive = np.array([txn.vertex_exists(v) for v in range(n)], dtype=bool)
    counts, indices = [], []
    for v in range(n):
        nbrs = [d for d, _ in txn.scan_edges(v, label)]
        counts.append(len(nbrs))
        indices.extend(nbrs)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return GraphView(txn.tre, n, alive, indptr, np.asarray(indices, dtype=np.int64))


def _compact_ids(view: GraphView):
    ids = view.vertices
    remap = np.full(view.n_ids, -1, dtype=np.int64)
    remap[ids] = np.arange(len(ids))
    src, dst = view.internal_edges()
    return ids, remap[src], remap[dst]


def pagerank(view: GraphView, iterations: int = 20, damping: float = 0.85,
             history: list | None = None) -> dict[int, float]:
    """Power iteration over alive vertices with uniform teleport and dangling
    mass spread uniformly. Runs exactly ``iterations`` rounds; appends the
    rank sum after each round to ``history`` when given."""
    ids, src, dst = _compact_ids(view)
    n = len(ids)
    if n == 0:
        return {}
    outdeg = np.bincount(src, minlength=n).astype(np.float64)
    dangling = outdeg == 0
    inv = np.divide(1.0, outdeg, out=np.zeros(n), where=~dangling)
    rank = np.full(n, 1.0 / n)
    for _ in range(iterations):
        contrib = rank * inv
        pulled = np.bincount(dst, weights=contrib[src], minlength=n)
        dmass = rank[dangling].sum()
        rank = (1.0 - damping) / n + damping * (pulled + dmass / n)
        if history is not None:
            history.append(float(rank.sum()))
    return dict(zip(ids.tolist(), rank.tolist()))


def connected_components(view: GraphView) -> dict[int, int]:
    """Weakly connected components by min-label propagation to a fixpoint;
    each vertex is labelled with the smallest id in its component."""
    ids, src, dst = _compact_ids(view)
    labels = ids.copy()
    if len(ids) == 0:
        return {}
    while True:
        old = labels.copy()
        np.minimum.at(labels, dst, labels[src])
        np.minimum.at(labels, src, labels[dst])
        # pointer jumping: adopt the label of the vertex named by the label
        labels = labels[np.searchsorted(ids, labels)]
        if np.array_equal(labels, old):
            break
    return dict(zip(ids.tolist(), labels.tolist()))
