"""Transactional Edge Log blocks.

One TEL holds the adjacency list of one (vertex, label) pair::

    [ header 36B | bloom | properties ->        ...        <- entries ]

Entries are 28 bytes (dst, creation ts, invalidation ts, property length) and
are appended backwards from the end of the block, so entry ``k`` occupies
``[cap - 28(k+1), cap - 28k)``. Property bytes are appended forwards after
the bloom region in the same order, which lets a scan walk both regions with
two monotone cursors and no per-entry offset table.

Timestamps are signed: ``>= 0`` is a committed epoch, ``-tid`` marks an
uncommitted write of transaction ``tid`` and ``MAX_TS`` means "never
invalidated".

The committed entry count ``LS`` and committed property bytes ``PS`` sit next
to each other so they are read and published as one 8-byte word.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

from . import bloom
from .blockstore import MIN_BLOCK, NULL, BlockStore, LocalLists

HEADER_SIZE = 36
ENTRY_SIZE = 28
MAX_TS = (1 << 63) - 1
TOMBSTONE = 0x80000000
LEN_MASK = 0x7FFFFFFF
BLOOM_MIN_CAPACITY = 256

HEADER = struct.Struct("<qqIIqBHB")
ENTRY = struct.Struct("<qqqI")
_Q = struct.Struct("<q")
_II = struct.Struct("<II")
_PREV, _CT, _SIZES, _SRC, _ORDER, _LABEL, _FLAGS = 0, 8, 16, 24, 32, 33, 35
_CTS, _ITS = 8, 16

assert HEADER.size == HEADER_SIZE and ENTRY.size == ENTRY_SIZE


class VersionConflict(Exception):
    """An update would invalidate an entry newer than the writer's snapshot."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class NeedsResize:
    required_payload: int  # header + properties + entries, bloom excluded


def capacity(order: int) -> int:
    return MIN_BLOCK << order


def bloom_bytes(order: int) -> int:
    cap = MIN_BLOCK << order
    return 0 if cap <= BLOOM_MIN_CAPACITY else cap // 16


def data_start(order: int) -> int:
    return HEADER_SIZE + bloom_bytes(order)


def payload_bytes(n_entries: int, prop_bytes: int) -> int:
    return HEADER_SIZE + prop_bytes + ENTRY_SIZE * n_entries


def order_for_payload(payload: int, at_least: int = 0) -> int:
    order = at_least
    while payload + bloom_bytes(order) > (MIN_BLOCK << order):
        order += 1
    return order


def visible(cts: int, its: int, tre: int, tid: int) -> bool:
    """Whether an entry is part of the snapshot of ``tre`` seen by ``tid``.

    A committed entry is visible when it was created at or before the snapshot
    and not invalidated by then; an invalidation still pending from another
    transaction does not hide it, one pending from ``tid`` itself does.
    An entry written by ``tid`` is visible to ``tid`` unless ``tid`` has
    invalidated it again. ``tid == 0`` denotes a read-only transaction.
    """
    if 0 <= cts <= tre:
        return tre < its or (its < 0 and its != -tid)
    return tid > 0 and cts == -tid and its != -tid


# ------------------------------------------------------------------ headers
def init_block(buf, ref: int, order: int, src: int, label: int,
               prev: int = NULL, ct: int = 0) -> None:
    n = data_start(order)
    buf[ref:ref + n] = bytes(n)
    HEADER.pack_into(buf, ref, prev, ct, 0, 0, src, order, label, 0)


def read_header(buf, ref: int) -> tuple:
    """(prev, ct, ls, ps, src, order, label, flags)"""
    return HEADER.unpack_from(buf, ref)


def block_order(buf, ref: int) -> int:
    return buf[ref + _ORDER]


def commit_ts(buf, ref: int) -> int:
    return _Q.unpack_from(buf, ref + _CT)[0]


def set_commit_ts(buf, ref: int, ts: int) -> None:
    _Q.pack_into(buf, ref + _CT, ts)


def sizes(buf, ref: int) -> tuple[int, int]:
    """Committed (LS, PS), read as one word."""
    return _II.unpack_from(buf, ref + _SIZES)


def publish_sizes(buf, ref: int, ls: int, ps: int) -> None:
    _II.pack_into(buf, ref + _SIZES, ls, ps)


def prev_block(buf, ref: int) -> int:
    return _Q.unpack_from(buf, ref + _PREV)[0]


def set_prev(buf, ref: int, prev: int) -> None:
    _Q.pack_into(buf, ref + _PREV, prev)


def entry_offset(ref: int, order: int, slot: int) -> int:
    return ref + (MIN_BLOCK << order) - ENTRY_SIZE * (slot + 1)


def read_entry(buf, ref: int, order: int, slot: int) -> tuple[int, int, int, int]:
    return ENTRY.unpack_from(buf, entry_offset(ref, order, slot))


def set_creation(buf, ref: int, order: int, slot: int, ts: int) -> None:
    _Q.pack_into(buf, entry_offset(ref, order, slot) + _CTS, ts)


def set_invalidation(buf, ref: int, order: int, slot: int, ts: int) -> None:
    _Q.pack_into(buf, entry_offset(ref, order, slot) + _ITS, ts)


def invalidation(buf, ref: int, order: int, slot: int) -> int:
    return _Q.unpack_from(buf, entry_offset(ref, order, slot) + _ITS)[0]


def bloom_might_contain(buf, ref: int, order: int, dst: int) -> bool:
    nb = bloom_bytes(order)
    if not nb:
        return True
    return bloom.might_contain(buf, ref + HEADER_SIZE, nb, dst)


# -------------------------------------------------------------------- reads
@dataclass
class ScanStats:
    """Counters for instrumented lookups."""
    lookups: int = 0
    bloom_rejects: int = 0
    scans: int = 0
    entries_inspected: int = 0
    false_positive_scans: int = 0


def scan(buf, ref: int, tre: int, tid: int, n: int | None = None,
         ps: int | None = None, tracer=None):
    """Yield ``(dst, props)`` for every visible edge, newest first.

    ``n``/``ps`` default to the committed sizes; a writer passes its own
    totals so that it sees its pending appends.
    """
    prev, ct, ls, cps, src, order, label, flags = HEADER.unpack_from(buf, ref)
    if n is None:
        n, ps = ls, cps
    cap = MIN_BLOCK << order
    end = ref + cap
    lo = end - ENTRY_SIZE * n
    pcur = ref + HEADER_SIZE + bloom_bytes(order) + ps
    trace = None if tracer is None else tracer.begin(ref, cap, n, pcur - ps - ref, ps)
    off = lo
    for dst, cts, its, plen in ENTRY.iter_unpack(memoryview(buf)[lo:end]):
        if trace is not None:
            trace.entry(off - ref)
            off += ENTRY_SIZE
        length = plen & LEN_MASK
        pcur -= length
        if plen & TOMBSTONE:
            continue
        if 0 <= cts <= tre:
            if not (tre < its or (its < 0 and its != -tid)):
                continue
        elif not (tid > 0 and cts == -tid and its != -tid):
            continue
        if trace is not None and length:
            trace.prop(pcur - ref, length)
        yield dst, buf[pcur:pcur + length] if length else b""
    if trace is not None:
        trace.end()


def find_edge(buf, ref: int, dst: int, tre: int, tid: int, n: int | None = None,
              ps: int | None = None, stats: ScanStats | None = None):
    """Properties of the visible version of edge ``dst``, or None."""
    prev, ct, ls, cps, src, order, label, flags = HEADER.unpack_from(buf, ref)
    if n is None:
        n, ps = ls, cps
    if stats is not None:
        stats.lookups += 1
    nb = bloom_bytes(order)
    if nb and not bloom.might_contain(buf, ref + HEADER_SIZE, nb, dst):
        if stats is not None:
            stats.bloom_rejects += 1
        return None
    if stats is not None:
        stats.scans += 1
    cap = MIN_BLOCK << order
    end = ref + cap
    lo = end - ENTRY_SIZE * n
    pcur = ref + HEADER_SIZE + nb + ps
    inspected = 0
    result = None
    for d, cts, its, plen in ENTRY.iter_unpack(memoryview(buf)[lo:end]):
        inspected += 1
        length = plen & LEN_MASK
        pcur -= length
        if d != dst or not visible(cts, its, tre, tid):
            continue
        if not plen & TOMBSTONE:
            result = buf[pcur:pcur + length] if length else b""
        break
    if stats is not None:
        stats.entries_inspected += inspected
        if result is None:
            stats.false_positive_scans += 1
    return result


def iter_entries(buf, ref: int, n: int | None = None):
    """Raw ``(slot, dst, cts, its, plen)`` tuples, oldest first."""
    order = buf[ref + _ORDER]
    if n is None:
        n = sizes(buf, ref)[0]
    for slot in range(n):
        yield (slot, *read_entry(buf, ref, order, slot))


# ------------------------------------------------------------------- writes
@dataclass
class TelCursor:
    """A writer's private view of one TEL between first touch and commit."""
    vid: int
    label: int
    ref: int
    order: int
    base_n: int
    base_ps: int
    n: int
    ps: int
    orig_ref: int = NULL
    created: bool = False
    invalidated: list = field(default_factory=list)
    new_blocks: list = field(default_factory=list)
    copies: int = 0
    copied_bytes: int = 0

    @classmethod
    def open(cls, buf, vid: int, label: int, ref: int, created: bool = False):
        ls, ps = sizes(buf, ref)
        return cls(vid, label, ref, buf[ref + _ORDER], ls, ps, ls, ps,
                   orig_ref=ref, created=created)


def _append(buf, cur: TelCursor, dst: int, props: bytes, tid: int,
            tombstone: bool) -> None:
    ref, order = cur.ref, cur.order
    start = ref + HEADER_SIZE + bloom_bytes(order) + cur.ps
    if props:
        buf[start:start + len(props)] = props
    plen = len(props) | (TOMBSTONE if tombstone else 0)
    ENTRY.pack_into(buf, entry_offset(ref, order, cur.n), dst, -tid, MAX_TS, plen)
    nb = bloom_bytes(order)
    if nb:
        bloom.add(buf, ref + HEADER_SIZE, nb, dst)
    cur.n += 1
    cur.ps += len(props)


def _check_room(cur: TelCursor, extra: int) -> NeedsResize | None:
    need = payload_bytes(cur.n + 1, cur.ps + extra)
    if need + bloom_bytes(cur.order) > (MIN_BLOCK << cur.order):
        return NeedsResize(need)
    return None


def append_insert(buf, cur: TelCursor, dst: int, props: bytes, tid: int):
    """Append a fresh edge the caller knows to be absent."""
    if len(props) > LEN_MASK:
        raise ValueError("edge properties too large")
    grow = _check_room(cur, len(props))
    if grow is not None:
        return grow
    _append(buf, cur, dst, props, tid, tombstone=False)
    return None


def find_live_slot(buf, cur: TelCursor, dst: int) -> int | None:
    """Newest slot holding a not-yet-invalidated entry for ``dst``."""
    ref, order, n = cur.ref, cur.order, cur.n
    if n == 0:
        return None
    end = ref + (MIN_BLOCK << order)
    lo = end - ENTRY_SIZE * n
    slot = n
    for d, cts, its, plen in ENTRY.iter_unpack(memoryview(buf)[lo:end]):
        slot -= 1
        if d == dst and its == MAX_TS:
            return slot
    return None


def append_update_or_delete(buf, cur: TelCursor, dst: int, props: bytes,
                            tid: int, tre: int, tombstone: bool = False,
                            stats: ScanStats | None = None):
    """Append a new version of ``dst`` and invalidate the previous one.

    Returns ``NeedsResize`` without side effects when the block is full,
    otherwise the invalidated slot (or None when there was no live version).
    A delete appends an entry flagged as a tombstone.
    """
    if len(props) > LEN_MASK:
        raise ValueError("edge properties too large")
    grow = _check_room(cur, len(props))
    if grow is not None:
        return grow
    slot = None
    if bloom_might_contain(buf, cur.ref, cur.order, dst):
        if stats is not None:
            stats.scans += 1
        slot = find_live_slot(buf, cur, dst)
        if slot is not None:
            _, cts, _, _ = read_entry(buf, cur.ref, cur.order, slot)
            if cts > tre:
                raise VersionConflict(f"entry for {dst} created at {cts} > {tre}", cts)
            set_invalidation(buf, cur.ref, cur.order, slot, -tid)
            cur.invalidated.append(slot)
    elif stats is not None:
        stats.bloom_rejects += 1
    _append(buf, cur, dst, props, tid, tombstone)
    return slot


def resize(store: BlockStore, cur: TelCursor, required_payload: int,
           local: LocalLists | None = None) -> int:
    """Copy the log into a larger block and make it the cursor's target."""
    buf = store.buf
    old, old_order = cur.ref, cur.order
    order = order_for_payload(required_payload, old_order + 1)
    ref = store.allocate(order, local, zero=data_start(order))
    buf = store.buf
    prev, ct, ls, ps, src, _, label, flags = HEADER.unpack_from(buf, old)
    HEADER.pack_into(buf, ref, old, ct, ls, ps, src, order, label, flags)
    n = cur.n
    ocap, ncap = MIN_BLOCK << old_order, MIN_BLOCK << order
    span = ENTRY_SIZE * n
    buf[ref + ncap - span:ref + ncap] = buf[old + ocap - span:old + ocap]
    ods, nds = old + data_start(old_order), ref + data_start(order)
    if cur.ps:
        buf[nds:nds + cur.ps] = buf[ods:ods + cur.ps]
    nb = bloom_bytes(order)
    if nb:
        lo = ref + ncap - span
        for d, _, _, _ in ENTRY.iter_unpack(memoryview(buf)[lo:ref + ncap]):
            bloom.add(buf, ref + HEADER_SIZE, nb, d)
    cur.ref, cur.order = ref, order
    cur.copies += n
    cur.copied_bytes += span + cur.ps
    cur.new_blocks.append((ref, order))
    return ref
