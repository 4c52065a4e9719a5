"""Vertex blocks, the two vertex-id indices and per-vertex label index blocks.

Layout inside the block store::

    vertex index slot[v] -> newest VertexBlock -> prev -> ... (copy on write)
    edge index slot[v]   -> LabelIndexBlock [(label, TEL ref), ...]

Indices are chunked arrays of 8-byte block references (2**16 slots per
chunk) whose chunk list lives in a directory block, so the whole structure
can be located from two superblock fields.
"""
from __future__ import annotations

import struct
import threading

import numpy as np

from .blockstore import MIN_BLOCK, NULL, BlockStore, order_for

VERTEX_HEADER = struct.Struct("<qqIBB2x")
VERTEX_HEADER_SIZE = VERTEX_HEADER.size
VERTEX_TOMBSTONE = 0x01
_Q = struct.Struct("<q")
_H = struct.Struct("<H")
_PAIR = struct.Struct("<Hq")
PAIR_SIZE = _PAIR.size
LABEL_HEADER_SIZE = 2
MAX_LABEL = 0xFFFF

CHUNK_BITS = 16
CHUNK_SLOTS = 1 << CHUNK_BITS
CHUNK_ORDER = order_for(CHUNK_SLOTS * 8)
_DIR = struct.Struct("<QQ")  # chunk count, next vertex id


# ----------------------------------------------------------- vertex blocks
def vertex_order(props_len: int) -> int:
    return order_for(VERTEX_HEADER_SIZE + props_len)


def write_vertex(buf, ref: int, order: int, prev: int, cts: int, props: bytes,
                 tombstone: bool = False) -> None:
    VERTEX_HEADER.pack_into(buf, ref, prev, cts, len(props), order,
                            VERTEX_TOMBSTONE if tombstone else 0)
    if props:
        start = ref + VERTEX_HEADER_SIZE
        buf[start:start + len(props)] = props


def read_vertex_header(buf, ref: int) -> tuple[int, int, int, int, int]:
    """(prev, cts, dlen, order, flags)"""
    return VERTEX_HEADER.unpack_from(buf, ref)


def vertex_props(buf, ref: int) -> bytes:
    dlen = struct.unpack_from("<I", buf, ref + 16)[0]
    start = ref + VERTEX_HEADER_SIZE
    return buf[start:start + dlen]


def set_vertex_cts(buf, ref: int, cts: int) -> None:
    _Q.pack_into(buf, ref + 8, cts)


def set_vertex_prev(buf, ref: int, prev: int) -> None:
    _Q.pack_into(buf, ref, prev)


def find_vertex_version(buf, ref: int, tre: int, tid: int) -> int:
    """Walk the version chain back to the version visible at ``tre``."""
    while ref:
        prev, cts = struct.unpack_from("<qq", buf, ref)
        if 0 <= cts <= tre or (tid > 0 and cts == -tid):
            return ref
        ref = prev
    return NULL


# ---------------------------------------------------------------- indices
class IndexArray:
    """Growable array of block references stored in the block store."""

    def __init__(self, store: BlockStore):
        self.store = store
        self._lock = threading.Lock()
        self._chunks: list[int] = []
        self.root = store.allocate(0, zero=MIN_BLOCK)
        self._root_order = 0
        _DIR.pack_into(store.buf, self.root, 0, 0)

    def __len__(self):
        return len(self._chunks) * CHUNK_SLOTS

    def _slot_offset(self, i: int) -> int:
        return self._chunks[i >> CHUNK_BITS] + ((i & (CHUNK_SLOTS - 1)) << 3)

    def get(self, i: int) -> int:
        try:
            off = self._chunks[i >> CHUNK_BITS] + ((i & (CHUNK_SLOTS - 1)) << 3)
        except IndexError:
            return NULL
        return _Q.unpack_from(self.store.buf, off)[0]

    def set(self, i: int, ref: int) -> None:
        if (i >> CHUNK_BITS) >= len(self._chunks):
            self.reserve(i + 1)
        _Q.pack_into(self.store.buf, self._slot_offset(i), ref)

    def reserve(self, n: int) -> None:
        need = -(-n // CHUNK_SLOTS)
        if need <= len(self._chunks):
            return
        with self._lock:
            store = self.store
            while len(self._chunks) < need:
                chunk = store.allocate(CHUNK_ORDER, zero=CHUNK_SLOTS * 8)
                count = len(self._chunks)
                room = ((MIN_BLOCK << self._root_order) - _DIR.size) // 8
                if count >= room:
                    self._grow_directory()
                struct.pack_into("<q", store.buf, self.root + _DIR.size + 8 * count, chunk)
                self._chunks.append(chunk)
                struct.pack_into("<Q", store.buf, self.root, count + 1)

    def _grow_directory(self) -> None:
        store = self.store
        order = self._root_order + 1
        new = store.allocate(order, zero=0)
        used = _DIR.size + 8 * len(self._chunks)
        buf = store.buf
        buf[new:new + used] = buf[self.root:self.root + used]
        # directories are only read by recovery tooling; retire immediately
        store.free(self.root, self._root_order, 0)
        self.root, self._root_order = new, order

    def set_next_id(self, n: int) -> None:
        struct.pack_into("<Q", self.store.buf, self.root + 8, n)

    def chunk_refs(self) -> list[int]:
        return list(self._chunks)

    def to_numpy(self, n: int) -> np.ndarray:
        """Copy of slots ``[0, n)`` as int64."""
        out = np.zeros(n, dtype=np.int64)
        view = self.store.view()
        for c, chunk in enumerate(self._chunks):
            lo = c * CHUNK_SLOTS
            if lo >= n:
                break
            hi = min(n, lo + CHUNK_SLOTS)
            out[lo:hi] = view[chunk:chunk + 8 * (hi - lo)].view(np.int64)
        return out


# ---------------------------------------------------------- label indices
def label_capacity(order: int) -> int:
    return ((MIN_BLOCK << order) - LABEL_HEADER_SIZE) // PAIR_SIZE


def label_count(buf, ref: int) -> int:
    return _H.unpack_from(buf, ref)[0]


def label_pairs(buf, ref: int):
    """Yield (label, tel ref) pairs; a null ref marks a reclaimed TEL."""
    n = _H.unpack_from(buf, ref)[0]
    off = ref + LABEL_HEADER_SIZE
    for _ in range(n):
        yield _PAIR.unpack_from(buf, off)
        off += PAIR_SIZE


def label_lookup(buf, ref: int, label: int) -> tuple[int, int]:
    """(pair index, TEL ref) for ``label``; (-1, NULL) when absent."""
    n = _H.unpack_from(buf, ref)[0]
    off = ref + LABEL_HEADER_SIZE
    for i in range(n):
        lab, tel_ref = _PAIR.unpack_from(buf, off)
        if lab == label:
            return i, tel_ref
        off += PAIR_SIZE
    return -1, NULL


def set_label_ref(buf, ref: int, index: int, tel_ref: int) -> None:
    _Q.pack_into(buf, ref + LABEL_HEADER_SIZE + PAIR_SIZE * index + 2, tel_ref)


def label_append(buf, ref: int, label: int, tel_ref: int) -> bool:
    """Add a pair in place; False when the block is full."""
    n = _H.unpack_from(buf, ref)[0]
    if label_order(n + 1) != label_order(n):
        return False
    label_write_pair(buf, ref, n, label, tel_ref)
    return True


def label_write_pair(buf, ref: int, n: int, label: int, tel_ref: int) -> None:
    """Store pair ``n`` and publish the count ``n + 1``; the block must have room."""
    _PAIR.pack_into(buf, ref + LABEL_HEADER_SIZE + PAIR_SIZE * n, label, tel_ref)
    # the count is published after the pair so readers never see a torn pair
    _H.pack_into(buf, ref, n + 1)


def label_order(n_pairs: int) -> int:
    """Order of a label block holding ``n_pairs`` (blocks are always sized
    exactly for their count, so the order is implied by the count)."""
    return order_for(LABEL_HEADER_SIZE + PAIR_SIZE * max(n_pairs, 1))
