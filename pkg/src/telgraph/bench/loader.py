"""Vectorised bulk loading of an edge list into a fresh engine.

Produces byte-for-byte the same block layout the transactional path would
(headers, entries growing down from the block end, Bloom bits, label index
blocks) but writes it with numpy scatters, committed at a single epoch.
"""
from __future__ import annotations

import numpy as np

from .. import bloom, tel
from ..blockstore import MIN_BLOCK
from ..graph import CHUNK_BITS, CHUNK_SLOTS, LABEL_HEADER_SIZE
from .generate import dedupe


def _tel_orders(degree: np.ndarray) -> np.ndarray:
    need = tel.HEADER_SIZE + tel.ENTRY_SIZE * degree
    order = np.zeros(len(degree), dtype=np.int64)
    while True:
        cap = MIN_BLOCK << order
        bloom_b = np.where(cap > tel.BLOOM_MIN_CAPACITY, cap // 16, 0)
        short = need + bloom_b > cap
        if not short.any():
            return order
        order[short] += 1


def _write_index(index, values: np.ndarray) -> None:
    n = len(values)
    index.reserve(n)
    view = index.store.view()
    for c, chunk in enumerate(index.chunk_refs()):
        lo = c << CHUNK_BITS
        if lo >= n:
            break
        hi = min(n, lo + CHUNK_SLOTS)
        view[chunk:chunk + 8 * (hi - lo)].view(np.int64)[:] = values[lo:hi]


def bulk_load(engine, num_vertices: int, src, dst, label: int = 0,
              epoch: int = 1, unique: bool = True, chunk: int = 1 << 20) -> dict:
    """Load ``num_vertices`` property-less vertices and the given edges.

    The engine must be empty. Duplicate (src, dst) pairs are collapsed to
    their first occurrence when ``unique``. Returns load statistics.
    """
    if engine.next_vertex_id != 0:
        raise ValueError("bulk_load needs an empty engine")
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if unique:
        src, dst = dedupe(src, dst)
    n, m = num_vertices, len(src)
    if m and (src.min() < 0 or src.max() >= n):
        raise ValueError("edge source outside the vertex range")
    store = engine.store

    # vertex blocks: 64 bytes each, header (prev=0, cts=epoch, len=0, order=0)
    vrefs = store.carve_many(np.full(n, MIN_BLOCK, dtype=np.int64))
    w = store.view(np.uint32)
    if n:
        base = vrefs >> 2
        w[base + 2] = epoch & 0xFFFFFFFF
        w[base + 3] = epoch >> 32

    # arrival order within each source: slot 0 is the oldest edge
    order = np.argsort(src, kind="stable")
    degree = np.bincount(src, minlength=n).astype(np.int64)
    starts = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degree, out=starts[1:])
    slot = np.empty(m, dtype=np.int64)
    slot[order] = np.arange(m) - starts[src[order]]

    has = np.flatnonzero(degree)
    orders = _tel_orders(degree[has])
    caps = MIN_BLOCK << orders
    trefs = store.carve_many(caps)
    lrefs = store.carve_many(np.full(len(has), MIN_BLOCK, dtype=np.int64))
    w, b = store.view(np.uint32), store.view()

    # TEL headers: prev, CT, LS|PS, src, order|label|flags
    hb = trefs >> 2
    w[hb + 2] = epoch & 0xFFFFFFFF
    w[hb + 3] = epoch >> 32
    w[hb + 4] = degree[has].astype(np.uint32)
    w[hb + 6] = (has & 0xFFFFFFFF).astype(np.uint32)
    w[hb + 7] = (has >> 32).astype(np.uint32)
    b[trefs + 32] = orders.astype(np.uint8)
    b[trefs + 33] = label & 0xFF
    b[trefs + 34] = label >> 8

    # entries and Bloom bits, in chunks to bound temporary memory
    tel_of = np.zeros(n, dtype=np.int64)
    cap_of = np.zeros(n, dtype=np.int64)
    tel_of[has] = trefs
    cap_of[has] = caps
    cols = np.arange(7)
    for lo in range(0, m, chunk):
        s_, d_, k_ = src[lo:lo + chunk], dst[lo:lo + chunk], slot[lo:lo + chunk]
        off = tel_of[s_] + cap_of[s_] - tel.ENTRY_SIZE * (k_ + 1)
        words = np.empty((len(s_), 7), dtype=np.uint32)
        words[:, 0] = d_ & 0xFFFFFFFF
        words[:, 1] = (d_ >> 32) & 0xFFFFFFFF
        words[:, 2] = epoch & 0xFFFFFFFF
        words[:, 3] = epoch >> 32
        words[:, 4] = tel.MAX_TS & 0xFFFFFFFF
        words[:, 5] = tel.MAX_TS >> 32
        words[:, 6] = 0
        w[(off >> 2)[:, None] + cols] = words
        nbytes = np.where(cap_of[s_] > tel.BLOOM_MIN_CAPACITY, cap_of[s_] // 16, 0)
        with_bloom = np.flatnonzero(nbytes)
        if len(with_bloom):
            pos, mask = bloom.probe_positions(d_[with_bloom], nbytes[with_bloom])
            targets = (tel_of[s_[with_bloom]] + tel.HEADER_SIZE)[:, None] + pos
            np.bitwise_or.at(b, targets.ravel(), mask.ravel())

    # label index blocks: count=1, (label, TEL ref)
    b[lrefs] = 1
    b[lrefs + 1] = 0
    b[lrefs + LABEL_HEADER_SIZE] = label & 0xFF
    b[lrefs + LABEL_HEADER_SIZE + 1] = label >> 8
    ref_bytes = trefs.astype("<i8").view(np.uint8).reshape(-1, 8)
    b[(lrefs + LABEL_HEADER_SIZE + 2)[:, None] + np.arange(8)] = ref_bytes

    erefs = np.zeros(n, dtype=np.int64)
    erefs[has] = lrefs
    _write_index(engine.vertices, vrefs)
    _write_index(engine.edges, erefs)
    if n:
        engine._claim_vertex_id(n - 1)
    engine.epochs.force(epoch)
    return {"vertices": n, "edges": m, "tel_blocks": len(has),
            "bytes": int(store.tail), "max_degree": int(degree.max()) if n else 0}
