"""Background-free compaction run by workers over the vertices they dirtied.

For every vertex we drop edge versions no running or future snapshot can see
(invalidated at or before the safe epoch), rewrite each edge log into the
smallest block that holds the survivors, and cut vertex version chains after
the newest version every snapshot agrees on. Replaced blocks go to the
worker's deferred-free queue.
"""
from __future__ import annotations

from . import bloom, tel
from .blockstore import NULL
from .graph import (VERTEX_TOMBSTONE, label_count, label_order, label_pairs,
                    read_vertex_header, set_label_ref, set_vertex_prev)


def compact_worker(worker) -> dict:
    """Compact the vertices dirtied by ``worker``; busy ones are retried later."""
    eng = worker.engine
    dirty = worker.take_dirty()
    result = {"vertices": 0, "skipped": 0}
    if not dirty:
        return result
    safe = eng.epochs.safe_epoch()
    retry, pending = set(), set()
    for vid in sorted(dirty):
        if compact_vertex(eng, vid, safe, worker.local, owner=-worker.id, pending=pending):
            result["vertices"] += 1
        else:
            retry.add(vid)
    result["skipped"] = len(retry)
    eng.compaction_stats["skipped"] += len(retry)
    eng.compaction_stats["runs"] += 1
    # versions still pinned by old snapshots: revisit once the safe epoch moves
    if retry or pending:
        worker.mark_dirty(retry | pending)
    return result


def compact_all(engine) -> dict:
    """Compact every worker's dirty set from the calling thread."""
    total = {"vertices": 0, "skipped": 0}
    for w in engine.workers:
        if w.txn is not None and w.txn.state == "active" and not w.txn.read_only:
            continue
        r = compact_worker(w)
        total["vertices"] += r["vertices"]
        total["skipped"] += r["skipped"]
    return total


def _retire_tel_chain(store, buf, ref, retire, local) -> int:
    count = 0
    while ref:
        prev = tel.prev_block(buf, ref)
        store.free(ref, tel.block_order(buf, ref), retire, local)
        count += 1
        ref = prev
    return count


def _retire_vertex_chain(store, buf, ref, retire, local) -> int:
    count = 0
    while ref:
        prev, _, _, order, _ = read_vertex_header(buf, ref)
        store.free(ref, order, retire, local)
        count += 1
        ref = prev
    return count


def compact_vertex(eng, vid: int, safe: int, local=None, owner: int = -1,
                   pending: set | None = None) -> bool:
    """Compact one vertex. Returns False if it had to be skipped.

    When dead versions survive because a snapshot at or before ``safe`` may
    still read them, ``vid`` is added to ``pending``.
    """
    if not eng.locks.acquire(vid, owner):
        return False
    try:
        gre = eng.epochs.gre
        store = eng.store
        buf = store.buf
        stats = eng.compaction_stats
        head = eng.vertices.get(vid)
        if head and read_vertex_header(buf, head)[1] > gre:
            return False  # a commit is still being applied
        lref = eng.edges.get(vid)
        pairs = list(label_pairs(buf, lref)) if lref else []
        for _, ref in pairs:
            if ref and tel.commit_ts(buf, ref) > gre:
                return False

        for idx, (label, ref) in enumerate(pairs):
            if not ref:
                continue
            new = _compact_tel(store, ref, safe, local)
            if new and pending is not None and _holds_dead(store.buf, new):
                pending.add(vid)
            if new == ref:
                continue
            set_label_ref(store.buf, lref, idx, new)
            buf = store.buf
            stats["tel_blocks_retired"] += _retire_tel_chain(store, buf, ref, gre, local)
            eng.resize_copies.pop((vid, label), None)
            eng.resize_copy_bytes.pop((vid, label), None)
            if new:
                stats["tels_rewritten"] += 1
            else:
                stats["tels_dropped"] += 1
        buf = store.buf
        if lref and all(not r for _, r in label_pairs(buf, lref)):
            eng.edges.set(vid, NULL)
            store.free(lref, label_order(label_count(buf, lref)), gre, local)

        if head:
            v = head
            while v and read_vertex_header(buf, v)[1] > safe:
                v = read_vertex_header(buf, v)[0]
            if v:
                flags = read_vertex_header(buf, v)[4]
                if v == head and flags & VERTEX_TOMBSTONE:
                    eng.vertices.set(vid, NULL)
                    stats["vertices_collected"] += 1
                    stats["vertex_blocks_retired"] += _retire_vertex_chain(
                        store, buf, head, gre, local)
                else:
                    old = read_vertex_header(buf, v)[0]
                    if v != head and pending is not None:
                        pending.add(vid)
                    if old:
                        set_vertex_prev(buf, v, NULL)
                        stats["vertex_blocks_retired"] += _retire_vertex_chain(
                            store, buf, old, gre, local)
        stats["vertices"] += 1
        return True
    finally:
        eng.locks.release(vid)


def _holds_dead(buf, ref: int) -> bool:
    _, _, ls, *_ = tel.read_header(buf, ref)
    return any(its != tel.MAX_TS for _, _, _, its, _ in tel.iter_entries(buf, ref, ls))


def _compact_tel(store, ref: int, safe: int, local) -> int:
    """Rewrite one edge log; returns the new ref, NULL if empty, or ``ref``
    itself when nothing would change."""
    buf = store.buf
    prev, ct, ls, ps, src, order, label, flags = tel.read_header(buf, ref)
    ds = ref + tel.data_start(order)
    kept = []
    pcur = ds
    for slot, dst, cts, its, plen in tel.iter_entries(buf, ref, ls):
        length = plen & tel.LEN_MASK
        start = pcur
        pcur += length
        if plen & tel.TOMBSTONE or 0 <= its <= safe:
            continue
        kept.append((dst, cts, its, plen, start, length))
    if not kept:
        return NULL
    new_ps = sum(k[5] for k in kept)
    need = tel.payload_bytes(len(kept), new_ps)
    new_order = tel.order_for_payload(need)
    if len(kept) == ls and new_order == order and prev == NULL:
        return ref
    new = store.allocate(new_order, local, zero=0)
    buf = store.buf
    tel.init_block(buf, new, new_order, src, label, prev=NULL, ct=ct)
    nb = tel.bloom_bytes(new_order)
    out = new + tel.data_start(new_order)
    for slot, (dst, cts, its, plen, start, length) in enumerate(kept):
        if length:
            buf[out:out + length] = buf[start:start + length]
            out += length
        tel.ENTRY.pack_into(buf, tel.entry_offset(new, new_order, slot), dst, cts, its, plen)
        if nb:
            bloom.add(buf, new + tel.HEADER_SIZE, nb, dst)
    tel.publish_sizes(buf, new, len(kept), new_ps)
    return new
