"""Compiled read kernels over the raw block store.

Kernels take the store as a ``uint32`` array (``w``) plus a ``uint8`` array
(``b``) for the few fields that are not 4-byte aligned (label-index pairs).
They implement read-only visibility (``tid == 0``) and walk every TEL exactly
like :func:`telgraph.tel.scan`: entries from the lowest address upward
(newest first), properties with a cursor moving downward.
"""
from __future__ import annotations

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.core import cgutils
from numba.extending import intrinsic

ENTRY_WORDS = 7


@intrinsic
def prefetch(typingctx, arr, idx):
    """Hint that ``arr[idx]`` will be read soon (llvm.prefetch, read, high locality)."""
    def codegen(context, builder, signature, args):
        ary = context.make_array(signature.args[0])(context, builder, args[0])
        i8p = builder.bitcast(builder.gep(ary.data, [args[1]]), ir.IntType(8).as_pointer())
        i32 = ir.IntType(32)
        fnty = ir.FunctionType(ir.VoidType(), [i8p.type, i32, i32, i32])
        fn = cgutils.get_or_insert_function(builder.module, fnty, "llvm.prefetch.p0i8")
        builder.call(fn, [i8p, ir.Constant(i32, 0), ir.Constant(i32, 3), ir.Constant(i32, 1)])
        return context.get_dummy_value()
    return types.void(arr, idx), codegen


@njit(cache=True, inline="always")
def ld64(w, byte_off):
    i = byte_off >> 2
    return np.int64(w[i]) | (np.int64(w[i + 1]) << 32)


@njit(cache=True, inline="always")
def ld64b(b, off):
    v = np.int64(0)
    for k in range(8):
        v |= np.int64(b[off + k]) << (8 * k)
    return v


@njit(cache=True, inline="always")
def entry_visible(cts, its, plen, tre):
    if plen & 0x80000000:
        return False
    if cts < 0 or cts > tre:
        return False
    return its > tre or its < 0


@njit(cache=True, inline="always")
def entry_weight(w, i, utre):
    """1 if the entry at word ``i`` is visible to a read-only snapshot, else 0.

    Branch-free form of :func:`entry_visible`: as unsigned values,
    ``0 <= cts <= tre`` is ``cts <= tre`` and ``its > tre or its < 0`` is
    ``its > tre``.
    """
    cts = np.uint64(w[i + 2]) | (np.uint64(w[i + 3]) << np.uint64(32))
    its = np.uint64(w[i + 4]) | (np.uint64(w[i + 5]) << np.uint64(32))
    return np.int64((cts <= utre) & (its > utre) & (w[i + 6] < np.uint32(0x80000000)))


@njit(cache=True)
def tel_ref_for(b, lref, label):
    """TEL ref for ``label`` in the label block at ``lref`` (0 if absent)."""
    if lref == 0:
        return np.int64(0)
    n = np.int64(b[lref]) | (np.int64(b[lref + 1]) << 8)
    off = lref + 2
    for _ in range(n):
        lab = np.int64(b[off]) | (np.int64(b[off + 1]) << 8)
        if lab == label:
            return ld64b(b, off + 2)
        off += 10
    return np.int64(0)


@njit(cache=True)
def count_visible(w, ref, tre):
    ls = np.int64(w[(ref + 16) >> 2])
    order = np.int64(w[(ref + 32) >> 2] & 0xFF)
    off = ref + (np.int64(64) << order) - 28 * ls
    c = 0
    for _ in range(ls):
        if entry_visible(ld64(w, off + 8), ld64(w, off + 16), w[(off + 24) >> 2], tre):
            c += 1
        off += 28
    return c


@njit(cache=True)
def vertex_alive(w, b, vrefs, tre):
    """Mask of vertices whose version visible at ``tre`` is not a tombstone."""
    n = vrefs.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for v in range(n):
        ref = vrefs[v]
        while ref != 0:
            cts = ld64(w, ref + 8)
            if cts >= 0 and cts <= tre:
                out[v] = (b[ref + 21] & 1) == 0
                break
            ref = ld64(w, ref)
    return out


@njit(cache=True)
def snapshot_csr(w, b, erefs, label, tre):
    """CSR (indptr, indices) of visible edges, newest first per vertex."""
    n = erefs.shape[0]
    refs = np.zeros(n, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        r = tel_ref_for(b, erefs[v], label)
        refs[v] = r
        indptr[v + 1] = indptr[v] + (count_visible(w, r, tre) if r != 0 else 0)
    indices = np.empty(indptr[n], dtype=np.int64)
    for v in range(n):
        ref = refs[v]
        if ref == 0:
            continue
        ls = np.int64(w[(ref + 16) >> 2])
        order = np.int64(w[(ref + 32) >> 2] & 0xFF)
        off = ref + (np.int64(64) << order) - 28 * ls
        k = indptr[v]
        for _ in range(ls):
            if entry_visible(ld64(w, off + 8), ld64(w, off + 16), w[(off + 24) >> 2], tre):
                indices[k] = ld64(w, off)
                k += 1
            off += 28
    return indptr, indices


# ------------------------------------------------------------- micro-bench
@njit(cache=True)
def tel_seek(w, b, erefs, starts, tre):
    """Locate each start vertex's log and read its newest visible edge."""
    acc = np.int64(0)
    for s in starts:
        ref = tel_ref_for(b, erefs[s], 0)
        if ref == 0:
            continue
        ls = np.int64(w[(ref + 16) >> 2])
        order = np.int64(w[(ref + 32) >> 2] & 0xFF)
        off = ref + (np.int64(64) << order) - 28 * ls
        for _ in range(ls):
            if entry_visible(ld64(w, off + 8), ld64(w, off + 16), w[(off + 24) >> 2], tre):
                acc += ld64(w, off)
                break
            off += 28
    return acc


@njit(cache=True)
def tel_scan(w, b, erefs, starts, tre):
    """Full visible scans; returns (checksum, edges visited).

    The entry region of a log is one contiguous range known from its header,
    so every cache line of it is prefetched before the sweep starts.
    """
    acc = np.int64(0)
    edges = np.int64(0)
    utre = np.uint64(tre)
    for s in starts:
        ref = tel_ref_for(b, erefs[s], 0)
        if ref == 0:
            continue
        ls = np.int64(w[(ref + 16) >> 2])
        order = np.int64(w[(ref + 32) >> 2] & 0xFF)
        end = ref + (np.int64(64) << order)
        off = end - 28 * ls
        for line in range(off & ~np.int64(63), end, 64):
            prefetch(w, line >> 2)
        i = off >> 2
        for _ in range(ls):
            keep = entry_weight(w, i, utre)
            acc += (np.int64(w[i]) | (np.int64(w[i + 1]) << 32)) & -keep
            edges += keep
            i += ENTRY_WORDS
    return acc, edges


@njit(cache=True)
def list_seek(head, pool, starts):
    acc = np.int64(0)
    for s in starts:
        node = head[s]
        if node >= 0:
            acc += pool[2 * node]
    return acc


@njit(cache=True)
def list_scan(head, pool, starts):
    acc = np.int64(0)
    edges = np.int64(0)
    for s in starts:
        node = head[s]
        while node >= 0:
            acc += pool[2 * node]
            edges += 1
            node = pool[2 * node + 1]
    return acc, edges


@njit(cache=True, inline="always")
def _key_lt(s0, d0, s1, d1):
    return s0 < s1 or (s0 == s1 and d0 < d1)


@njit(cache=True)
def _btree_descend(inner_keys, inner_child, inner_count, root, height, src, dst):
    node = root
    for _ in range(height):
        cnt = inner_count[node]
        lo, hi = 0, cnt
        # first separator > key
        while lo < hi:
            mid = (lo + hi) >> 1
            if not _key_lt(src, dst, inner_keys[node, mid, 0], inner_keys[node, mid, 1]):
                lo = mid + 1
            else:
                hi = mid
        node = inner_child[node, lo]
    return node


@njit(cache=True)
def _leaf_lower_bound(leaf_keys, leaf_slots, cnt, leaf, src, dst):
    lo, hi = 0, cnt
    while lo < hi:
        mid = (lo + hi) >> 1
        p = leaf_slots[leaf, mid]
        if _key_lt(leaf_keys[leaf, p, 0], leaf_keys[leaf, p, 1], src, dst):
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def btree_seek(inner_keys, inner_child, inner_count, root, height,
               leaf_keys, leaf_slots, leaf_count, leaf_next, starts):
    acc = np.int64(0)
    lowest = np.int64(-9223372036854775808)
    for s in starts:
        leaf = _btree_descend(inner_keys, inner_child, inner_count, root, height, s, lowest)
        i = _leaf_lower_bound(leaf_keys, leaf_slots, leaf_count[leaf], leaf, s, lowest)
        while leaf >= 0 and i >= leaf_count[leaf]:
            leaf = leaf_next[leaf]
            i = 0
        if leaf >= 0:
            p = leaf_slots[leaf, i]
            if leaf_keys[leaf, p, 0] == s:
                acc += leaf_keys[leaf, p, 1]
    return acc


@njit(cache=True)
def btree_scan(inner_keys, inner_child, inner_count, root, height,
               leaf_keys, leaf_slots, leaf_count, leaf_next, starts):
    acc = np.int64(0)
    edges = np.int64(0)
    lowest = np.int64(-9223372036854775808)
    for s in starts:
        leaf = _btree_descend(inner_keys, inner_child, inner_count, root, height, s, lowest)
        i = _leaf_lower_bound(leaf_keys, leaf_slots, leaf_count[leaf], leaf, s, lowest)
        done = False
        while leaf >= 0 and not done:
            cnt = leaf_count[leaf]
            while i < cnt:
                p = leaf_slots[leaf, i]
                if leaf_keys[leaf, p, 0] != s:
                    done = True
                    break
                acc += leaf_keys[leaf, p, 1]
                edges += 1
                i += 1
            leaf = leaf_next[leaf]
            i = 0
    return acc, edges


# ------------------------------------------------------- positioned cursors
# The micro-benchmark times edge access separately from seeks: an untimed
# locate pass leaves one cursor per start, and the timed pass walks from it.

@njit(cache=True)
def tel_locate(w, b, erefs, starts):
    """Word index of the newest entry and entry count for each start."""
    pos = np.zeros(len(starts), dtype=np.int64)
    cnt = np.zeros(len(starts), dtype=np.int64)
    for k in range(len(starts)):
        ref = tel_ref_for(b, erefs[starts[k]], 0)
        if ref == 0:
            continue
        ls = np.int64(w[(ref + 16) >> 2])
        order = np.int64(w[(ref + 32) >> 2] & 0xFF)
        pos[k] = (ref + (np.int64(64) << order) - 28 * ls) >> 2
        cnt[k] = ls
    return pos, cnt


@njit(cache=True)
def tel_scan_from(w, pos, cnt, tre):
    acc = np.int64(0)
    edges = np.int64(0)
    utre = np.uint64(tre)
    for k in range(len(pos)):
        i = pos[k]
        n = cnt[k]
        end = (i + ENTRY_WORDS * n) << 2
        for line in range((i << 2) & ~np.int64(63), end, 64):
            prefetch(w, line >> 2)
        for _ in range(n):
            keep = entry_weight(w, i, utre)
            acc += (np.int64(w[i]) | (np.int64(w[i + 1]) << 32)) & -keep
            edges += keep
            i += ENTRY_WORDS
    return acc, edges


@njit(cache=True)
def list_scan_from(pool, nodes):
    acc = np.int64(0)
    edges = np.int64(0)
    for node in nodes:
        while node >= 0:
            acc += pool[2 * node]
            edges += 1
            node = pool[2 * node + 1]
    return acc, edges


@njit(cache=True)
def btree_locate(inner_keys, inner_child, inner_count, root, height,
                 leaf_keys, leaf_slots, leaf_count, leaf_next, starts):
    """(leaf, slot index) of the first key of each start (leaf -1 if none)."""
    leaves = np.full(len(starts), -1, dtype=np.int64)
    idx = np.zeros(len(starts), dtype=np.int64)
    lowest = np.int64(-9223372036854775808)
    for k in range(len(starts)):
        s = starts[k]
        leaf = _btree_descend(inner_keys, inner_child, inner_count, root, height, s, lowest)
        i = _leaf_lower_bound(leaf_keys, leaf_slots, leaf_count[leaf], leaf, s, lowest)
        while leaf >= 0 and i >= leaf_count[leaf]:
            leaf = leaf_next[leaf]
            i = 0
        if leaf >= 0 and leaf_keys[leaf, leaf_slots[leaf, i], 0] == s:
            leaves[k] = leaf
            idx[k] = i
    return leaves, idx


@njit(cache=True)
def btree_scan_from(leaf_keys, leaf_slots, leaf_count, leaf_next, leaves, idx, starts):
    acc = np.int64(0)
    edges = np.int64(0)
    for k in range(len(starts)):
        s = starts[k]
        leaf = leaves[k]
        i = idx[k]
        done = False
        while leaf >= 0 and not done:
            cnt = leaf_count[leaf]
            while i < cnt:
                p = leaf_slots[leaf, i]
                if leaf_keys[leaf, p, 0] != s:
                    done = True
                    break
                acc += leaf_keys[leaf, p, 1]
                edges += 1
                i += 1
            leaf = leaf_next[leaf]
            i = 0
    return acc, edges
