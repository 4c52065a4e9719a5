"""Single-file block store with power-of-two size classes.

Every block is ``2**order * 64`` bytes and is addressed by its byte offset
into one growable backing file (a ``memfd`` when no path is given). Offset 0
holds the superblock and doubles as the null reference.

Free blocks are kept per order. Orders up to ``split_order`` live in
per-worker lists (:class:`LocalLists`); larger orders share one global array
guarded by a lock. Freed blocks first wait in a deferred queue keyed by the
epoch at which they became unreachable and only reach a free list once every
reader that could still hold them has finished.
"""
from __future__ import annotations

import mmap
import os
import struct
import threading
from collections import deque

import numpy as np

MIN_BLOCK = 64
MAX_ORDER = 57
DEFAULT_SPLIT_ORDER = 14
DEFAULT_EXTENT = 64 << 20

MAGIC = b"TELSTORE"
FORMAT_VERSION = 1
# magic, version, (pad), file tail, vertex-index root, edge-index root, committed GRE
SUPERBLOCK = struct.Struct("<8sI4xQQQQ")
RESERVED_BYTES = MIN_BLOCK

NULL = 0


class CapacityError(ValueError):
    """Requested size exceeds the largest block order."""


class StorageExhausted(OSError):
    """The backing file could not be grown."""


class InvariantViolation(AssertionError):
    """Allocator bookkeeping detected misuse (e.g. a double free)."""


def order_for(payload_bytes: int) -> int:
    """Smallest order whose block holds ``payload_bytes``."""
    if payload_bytes < 1:
        raise ValueError("payload_bytes must be >= 1")
    units = -(-payload_bytes // MIN_BLOCK)
    order = (units - 1).bit_length()
    if order > MAX_ORDER:
        raise CapacityError(f"{payload_bytes} bytes exceeds the largest block")
    return order


def block_size(order: int) -> int:
    return MIN_BLOCK << order


class DeferredFreeQueue:
    """Blocks waiting for every reader that might see them to finish."""

    def __init__(self):
        self.entries: deque[tuple[int, int, int]] = deque()
        self.nbytes = 0

    def push(self, ref: int, order: int, retire_epoch: int) -> None:
        self.entries.append((ref, order, retire_epoch))
        self.nbytes += block_size(order)

    def pop_safe(self, safe_epoch: int):
        # retire epochs are nondecreasing per queue, so stop at the first young one
        entries = self.entries
        while entries and entries[0][2] < safe_epoch:
            ref, order, _ = entries.popleft()
            self.nbytes -= block_size(order)
            yield ref, order

    def __len__(self):
        return len(self.entries)


class LocalLists:
    """Free lists for small orders owned by a single worker."""

    def __init__(self, split_order: int):
        self.lists: list[list[int]] = [[] for _ in range(split_order + 1)]
        self.deferred = DeferredFreeQueue()
        self.free_bytes = 0
        self.allocated_bytes = 0
        self.released_bytes = 0


class BlockStore:
    """Growable single-file block store.

    ``path=None`` backs the store with an anonymous memory file, which keeps
    tests hermetic while exercising the same mapping code as a real file.
    """

    def __init__(self, path: str | os.PathLike | None = None, *,
                 extent: int = DEFAULT_EXTENT,
                 split_order: int = DEFAULT_SPLIT_ORDER,
                 debug: bool = False):
        if extent % mmap.PAGESIZE:
            raise ValueError("extent must be a multiple of the page size")
        if not 0 <= split_order <= MAX_ORDER:
            raise ValueError("split_order out of range")
        self.path = None if path is None else os.fspath(path)
        self.extent = extent
        self.split_order = split_order
        self.debug = debug
        if self.path is None:
            self._fd = os.memfd_create("telgraph-store")
        else:
            self._fd = os.open(self.path, os.O_RDWR | os.O_CREAT | os.O_TRUNC, 0o644)
        self._maps: list[mmap.mmap] = []
        self._views: dict[tuple, np.ndarray] = {}
        self.size = 0
        self.buf: mmap.mmap | None = None
        self._grow_lock = threading.Lock()
        self._shared_lock = threading.Lock()
        self._shared_lists: dict[int, list[int]] = {
            o: [] for o in range(split_order + 1, MAX_ORDER + 1)}
        # used when no worker context is supplied (and for orders > m)
        self.shared = LocalLists(split_order)
        self._locals: list[LocalLists] = [self.shared]
        self._listed: set[int] = set()
        self.tail = RESERVED_BYTES
        self._grow(RESERVED_BYTES)
        self.write_superblock()

    # ---------------------------------------------------------------- mapping
    def _grow(self, needed: int) -> None:
        with self._grow_lock:
            if needed <= self.size:
                return
            new_size = -(-needed // self.extent) * self.extent
            try:
                os.ftruncate(self._fd, new_size)
                mm = mmap.mmap(self._fd, new_size, mmap.MAP_SHARED,
                               mmap.PROT_READ | mmap.PROT_WRITE)
            except OSError as exc:
                raise StorageExhausted(str(exc)) from exc
            # old maps stay open: readers may still hold them, and MAP_SHARED
            # keeps every mapping coherent with the file
            self._maps.append(mm)
            self.buf = mm
            self.size = new_size

    def view(self, dtype=np.uint8) -> np.ndarray:
        """numpy view over the current mapping (for compiled kernels).

        TEL fields all sit on 4-byte boundaries, so ``np.uint32`` views work
        for scan kernels.
        """
        mm = self.buf
        key = (np.dtype(dtype).char, id(mm))
        v = self._views.get(key)
        if v is None:
            v = np.frombuffer(mm, dtype=dtype)
            self._views[key] = v
        return v

    def new_local(self) -> LocalLists:
        lists = LocalLists(self.split_order)
        with self._shared_lock:
            self._locals.append(lists)
        return lists

    # -------------------------------------------------------------- superblock
    def write_superblock(self, vertex_root: int = 0, edge_root: int = 0,
                         gre: int = 0) -> None:
        SUPERBLOCK.pack_into(self.buf, 0, MAGIC, FORMAT_VERSION, self.tail,
                             vertex_root, edge_root, gre)

    def read_superblock(self) -> dict:
        magic, version, tail, vroot, eroot, gre = SUPERBLOCK.unpack_from(self.buf, 0)
        if magic != MAGIC:
            raise ValueError("bad superblock magic")
        return {"version": version, "tail": tail, "vertex_root": vroot,
                "edge_root": eroot, "gre": gre}

    def flush(self) -> None:
        self.buf.flush()
        if self.path is not None:
            os.fsync(self._fd)

    # -------------------------------------------------------------- allocation
    def allocate(self, order: int, local: LocalLists | None = None,
                 zero: int = MIN_BLOCK) -> int:
        """Hand out a block of ``2**order * 64`` bytes.

        Recycled blocks get their first ``zero`` bytes cleared; blocks carved
        from the tail are already zero.
        """
        if not 0 <= order <= MAX_ORDER:
            raise CapacityError(f"order {order} out of range")
        size = MIN_BLOCK << order
        ref = NULL
        if order <= self.split_order:
            holder = local if local is not None else self.shared
            if holder is self.shared:
                with self._shared_lock:
                    ref = self._pop(holder.lists[order])
                    if ref:
                        holder.free_bytes -= size
            else:
                ref = self._pop(holder.lists[order])
                if ref:
                    holder.free_bytes -= size
        else:
            holder = self.shared
            with self._shared_lock:
                ref = self._pop(self._shared_lists[order])
                if ref:
                    holder.free_bytes -= size
        if ref:
            n = min(zero, size)
            if n:
                self.buf[ref:ref + n] = bytes(n)
        else:
            ref = self._carve(size)
        accounting = local if local is not None else self.shared
        if accounting is self.shared:
            with self._shared_lock:
                accounting.allocated_bytes += size
        else:
            accounting.allocated_bytes += size
        return ref

    def _pop(self, lst: list[int]) -> int:
        if not lst:
            return NULL
        ref = lst.pop()
        if self.debug:
            self._listed.discard(ref)
        return ref

    def _carve(self, size: int) -> int:
        with self._grow_lock:
            ref = self.tail
            end = ref + size
            if end > self.size:
                # _grow takes the same lock; release by growing inline
                new_size = -(-end // self.extent) * self.extent
                try:
                    os.ftruncate(self._fd, new_size)
                    mm = mmap.mmap(self._fd, new_size, mmap.MAP_SHARED,
                                   mmap.PROT_READ | mmap.PROT_WRITE)
                except OSError as exc:
                    raise StorageExhausted(str(exc)) from exc
                self._maps.append(mm)
                self.buf = mm
                self.size = new_size
            self.tail = end
            return ref

    def carve_many(self, sizes: np.ndarray) -> np.ndarray:
        """Carve consecutive blocks from the tail (bulk loading only)."""
        sizes = np.asarray(sizes, dtype=np.int64)
        offsets = np.empty(len(sizes), dtype=np.int64)
        if len(sizes) == 0:
            return offsets
        with self._grow_lock:
            start = self.tail
            np.cumsum(sizes, out=offsets)
            total = int(offsets[-1])
            offsets -= sizes
            offsets += start
            self.tail = start + total
        self._grow(self.tail)
        with self._shared_lock:
            self.shared.allocated_bytes += total
        return offsets

    def free(self, ref: int, order: int, retire_epoch: int,
             local: LocalLists | None = None) -> None:
        """Retire a block; it is recycled once ``retire_epoch`` is safe."""
        if ref == NULL or ref % MIN_BLOCK:
            raise InvariantViolation(f"bad block reference {ref}")
        if self.debug:
            with self._shared_lock:
                if ref in self._listed:
                    raise InvariantViolation(f"double free of block {ref}")
                self._listed.add(ref)
        holder = local if local is not None else self.shared
        if holder is self.shared:
            with self._shared_lock:
                holder.deferred.push(ref, order, retire_epoch)
                holder.released_bytes += MIN_BLOCK << order
        else:
            holder.deferred.push(ref, order, retire_epoch)
            holder.released_bytes += MIN_BLOCK << order

    def drain(self, safe_epoch: int, local: LocalLists | None = None) -> int:
        """Move deferred blocks retired before ``safe_epoch`` to free lists."""
        holder = local if local is not None else self.shared
        moved = 0
        if holder is self.shared:
            with self._shared_lock:
                for ref, order in list(holder.deferred.pop_safe(safe_epoch)):
                    self._list_block(holder, ref, order, locked=True)
                    moved += 1
        else:
            for ref, order in list(holder.deferred.pop_safe(safe_epoch)):
                self._list_block(holder, ref, order, locked=False)
                moved += 1
        return moved

    def _list_block(self, holder: LocalLists, ref: int, order: int, locked: bool):
        size = MIN_BLOCK << order
        if order <= self.split_order:
            holder.lists[order].append(ref)
            holder.free_bytes += size
        elif locked:
            self._shared_lists[order].append(ref)
            self.shared.free_bytes += size
        else:
            with self._shared_lock:
                self._shared_lists[order].append(ref)
                self.shared.free_bytes += size

    # ------------------------------------------------------------------ stats
    def stats(self) -> dict:
        live = free = deferred = 0
        with self._shared_lock:
            for lists in self._locals:
                live += lists.allocated_bytes - lists.released_bytes
                free += lists.free_bytes
                deferred += lists.deferred.nbytes
        return {"tail": self.tail, "live": live, "free": free,
                "deferred": deferred, "reserved": RESERVED_BYTES}

    def free_list(self, order: int, local: LocalLists | None = None) -> list[int]:
        if order <= self.split_order:
            return list((local or self.shared).lists[order])
        return list(self._shared_lists[order])

    def close(self) -> None:
        self._views = {}
        for mm in self._maps:
            try:
                mm.close()
            except BufferError:
                # a caller still holds an exported view; the mapping dies with it
                pass
        self._maps = []
        self.buf = None
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1
