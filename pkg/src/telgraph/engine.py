"""Graph engine: workers, transactions and the vertex/edge API.

Typical use::

    eng = Engine()
    with eng.begin() as tx:
        a = tx.create_vertex(b"alice")
        b = tx.create_vertex(b"bob")
        tx.add_edge(a, b, b"knows")
    with eng.begin(read_only=True) as tx:
        list(tx.scan_edges(a))          # [(b, b'knows')]

Each thread gets a default :class:`Worker`; call :meth:`Engine.worker` to
manage workers explicitly. A worker runs one transaction at a time.
"""
from __future__ import annotations

import logging
import os
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, replace

from . import durability as dur
from . import tel
from .blockstore import NULL, BlockStore, DEFAULT_EXTENT, DEFAULT_SPLIT_ORDER
from .graph import (IndexArray, VERTEX_TOMBSTONE, find_vertex_version, label_append, label_count,
                    label_lookup, label_order, label_pairs, label_write_pair, read_vertex_header,
                    set_label_ref, set_vertex_cts, vertex_order, vertex_props,
                    write_vertex, LABEL_HEADER_SIZE, PAIR_SIZE, MAX_LABEL)
from .txn import (CommitManager, Epochs, LockTable, LockTimeout, MAX_WORKERS,
                  NotFound, StaleSnapshot, TransactionAborted, UsageError, make_tid)

logger = logging.getLogger(__name__)

DATA_FILE = "graph.tel"
WAL_FILE = "wal.log"
CHECKPOINT_FILE = "checkpoint.ckpt"


@dataclass(frozen=True)
class EngineConfig:
    lock_timeout: float = 0.010
    group_size: int = 64
    group_interval: float = 100e-6
    wal: bool = True
    wal_sync: bool = True
    compaction: bool = True
    compaction_period: int = 65536
    split_order: int = DEFAULT_SPLIT_ORDER
    extent: int = DEFAULT_EXTENT
    checkpoint_threads: int = 4
    debug: bool = False

    def with_(self, **kw) -> "EngineConfig":
        return replace(self, **kw)


class Worker:
    """Per-thread execution context: allocator lists, epoch slot, dirty set."""

    def __init__(self, engine: "Engine", worker_id: int):
        self.engine = engine
        self.id = worker_id
        self.local = engine.store.new_local()
        self.count = 0
        self.txn: Transaction | None = None
        self.dirty: set[int] = set()
        self.dirty_lock = threading.Lock()
        self.generation = engine.compaction_generation

    def begin(self, read_only: bool = False) -> "Transaction":
        if self.txn is not None:
            raise UsageError("worker already has an open transaction")
        eng = self.engine
        if eng.closed:
            raise UsageError("engine is closed")
        tre = eng.epochs.register(self.id)
        if read_only:
            tid = 0
        else:
            self.count += 1
            tid = make_tid(self.id, self.count)
            if len(self.local.deferred):
                eng.store.drain(eng.epochs.safe_epoch(), self.local)
        self.txn = Transaction(self, tre, tid, read_only)
        return self.txn

    def _finished(self) -> None:
        self.txn = None
        self.engine.epochs.unregister(self.id)
        eng = self.engine
        if eng.config.compaction and eng.compaction_generation != self.generation:
            self.generation = eng.compaction_generation
            from .compaction import compact_worker
            compact_worker(self)

    def mark_dirty(self, vids) -> None:
        with self.dirty_lock:
            self.dirty.update(vids)

    def take_dirty(self) -> set[int]:
        with self.dirty_lock:
            dirty, self.dirty = self.dirty, set()
        return dirty


class Transaction:
    """Snapshot-isolated transaction; use as a context manager or call
    :meth:`commit` / :meth:`abort` explicitly."""

    def __init__(self, worker: Worker, tre: int, tid: int, read_only: bool):
        self.worker = worker
        self.engine = worker.engine
        self.tre = tre
        self.tid = tid
        self.read_only = read_only
        self.state = "active"
        self.commit_epoch: int | None = None
        self._locked: list[int] = []
        self._locked_set: set[int] = set()
        self._tels: dict[tuple[int, int], tel.TelCursor] = {}
        self._vertices: dict[int, tuple[int, int]] = {}
        self._ops: list[bytes] = []
        self._log = True

    # -------------------------------------------------------------- plumbing
    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if self.state != "active":
            return False
        if exc_type is None:
            self.commit()
        else:
            self.abort()
        return False

    def _check_active(self):
        if self.state != "active":
            raise UsageError(f"transaction is {self.state}")

    def _check_writable(self):
        self._check_active()
        if self.read_only:
            raise UsageError("read-only transaction")

    def _fail(self, exc: TransactionAborted):
        self.abort()
        raise exc

    def _guard(self, vid: int) -> None:
        """Lock ``vid`` for writing and apply the first-committer-wins check."""
        if vid in self._locked_set:
            return
        eng = self.engine
        if not eng.locks.acquire(vid, self.tid):
            self._fail(LockTimeout(f"vertex {vid} is locked"))
        self._locked.append(vid)
        self._locked_set.add(vid)
        ref = eng.vertices.get(vid)
        if ref:
            cts = read_vertex_header(eng.store.buf, ref)[1]
            if cts > self.tre:
                self._fail(StaleSnapshot(f"vertex {vid} changed at epoch {cts}", cts))

    # ----------------------------------------------------------------- reads
    def _vertex_ref(self, vid: int) -> int:
        pending = self._vertices.get(vid)
        if pending is not None:
            return pending[0]
        eng = self.engine
        return find_vertex_version(eng.store.buf, eng.vertices.get(vid), self.tre, self.tid)

    def vertex_exists(self, vid: int) -> bool:
        self._check_active()
        ref = self._vertex_ref(vid)
        return bool(ref) and not read_vertex_header(self.engine.store.buf, ref)[4] & VERTEX_TOMBSTONE

    def get_vertex(self, vid: int) -> bytes | None:
        self._check_active()
        ref = self._vertex_ref(vid)
        if not ref:
            return None
        buf = self.engine.store.buf
        if read_vertex_header(buf, ref)[4] & VERTEX_TOMBSTONE:
            return None
        return vertex_props(buf, ref)

    def _tel_view(self, vid: int, label: int):
        cur = self._tels.get((vid, label))
        if cur is not None:
            return cur.ref, cur.n, cur.ps
        eng = self.engine
        lref = eng.edges.get(vid)
        if not lref:
            return NULL, None, None
        return label_lookup(eng.store.buf, lref, label)[1], None, None

    def labels(self, vid: int) -> list[int]:
        """Labels with a (possibly empty) edge log under ``vid``."""
        self._check_active()
        eng = self.engine
        lref = eng.edges.get(vid)
        if not lref:
            return []
        out = []
        for label, ref in label_pairs(eng.store.buf, lref):
            cur = self._tels.get((vid, label))
            if ref or cur is not None:
                out.append(label)
        return sorted(out)

    def get_edge(self, src: int, dst: int, label: int = 0) -> bytes | None:
        self._check_active()
        ref, n, ps = self._tel_view(src, label)
        if not ref:
            return None
        return tel.find_edge(self.engine.store.buf, ref, dst, self.tre, self.tid,
                             n, ps, self.engine.scan_stats)

    def scan_edges(self, src: int, label: int = 0):
        """Iterate ``(dst, props)`` newest first. Do not write to this
        adjacency list while the iterator is live."""
        self._check_active()
        ref, n, ps = self._tel_view(src, label)
        if not ref:
            return iter(())
        return tel.scan(self.engine.store.buf, ref, self.tre, self.tid, n, ps,
                        self.engine.tracer)

    def degree(self, src: int, label: int = 0) -> int:
        return sum(1 for _ in self.scan_edges(src, label))

    # ---------------------------------------------------------------- writes
    def _record(self, opcode, vid, label=0, dst=0, payload=b""):
        if self._log:
            self._ops.append(dur.encode_op(opcode, vid, label, dst, payload))

    def _put_version(self, vid: int, props: bytes, tombstone: bool = False):
        eng = self.engine
        store = eng.store
        pending = self._vertices.get(vid)
        if pending is not None:
            prev = read_vertex_header(store.buf, pending[0])[0]
            store.free(pending[0], pending[1], -1, self.worker.local)
        else:
            prev = eng.vertices.get(vid)
        order = vertex_order(len(props))
        ref = store.allocate(order, self.worker.local, zero=0)
        write_vertex(store.buf, ref, order, prev, -self.tid, props, tombstone)
        self._vertices[vid] = (ref, order)

    def create_vertex(self, props: bytes = b"") -> int:
        self._check_writable()
        vid = self.engine._new_vertex_id()
        self._guard(vid)
        self._put_version(vid, bytes(props))
        self._record(dur.VPUT, vid, payload=props)
        return vid

    def _create_vertex_at(self, vid: int, props: bytes) -> None:
        self.engine._claim_vertex_id(vid)
        self._guard(vid)
        self._put_version(vid, bytes(props))

    def put_vertex(self, vid: int, props: bytes) -> None:
        self._check_writable()
        if not self.vertex_exists(vid):
            raise NotFound(f"vertex {vid}")
        self._guard(vid)
        self._put_version(vid, bytes(props))
        self._record(dur.VPUT, vid, payload=props)

    def delete_vertex(self, vid: int) -> bool:
        """Delete a vertex together with all of its outgoing edges."""
        self._check_writable()
        if not self.vertex_exists(vid):
            return False
        self._guard(vid)
        logging_on, self._log = self._log, False
        try:
            for label in self.labels(vid):
                # touch every log so a concurrent insert is caught by the CT check
                self._cursor(vid, label, create=False)
                for dst in [d for d, _ in self.scan_edges(vid, label)]:
                    self._write_edge(vid, dst, b"", label, tombstone=True)
        finally:
            self._log = logging_on
        self._put_version(vid, b"", tombstone=True)
        self._record(dur.VDEL, vid)
        return True

    def _cursor(self, vid: int, label: int, create: bool):
        key = (vid, label)
        cur = self._tels.get(key)
        if cur is not None:
            return cur
        if not 0 <= label <= MAX_LABEL:
            raise ValueError("label out of range")
        self._guard(vid)
        eng = self.engine
        store = eng.store
        buf = store.buf
        lref = eng.edges.get(vid)
        idx, ref = label_lookup(buf, lref, label) if lref else (-1, NULL)
        if ref:
            ct = tel.commit_ts(buf, ref)
            if ct > self.tre:
                self._fail(StaleSnapshot(f"edges of {vid}/{label} changed at epoch {ct}", ct))
            cur = tel.TelCursor.open(buf, vid, label, ref)
        else:
            if not create:
                return None
            ref = store.allocate(0, self.worker.local, zero=0)
            buf = store.buf
            tel.init_block(buf, ref, 0, vid, label)
            if idx >= 0:
                set_label_ref(buf, lref, idx, ref)
            else:
                self._label_insert(vid, lref, label, ref)
            cur = tel.TelCursor.open(store.buf, vid, label, ref, created=True)
        self._tels[key] = cur
        return cur

    def _label_insert(self, vid: int, lref: int, label: int, ref: int) -> None:
        eng = self.engine
        store = eng.store
        if lref and label_append(store.buf, lref, label, ref):
            return
        n = label_count(store.buf, lref) if lref else 0
        new = store.allocate(label_order(n + 1), self.worker.local, zero=0)
        buf = store.buf
        used = LABEL_HEADER_SIZE + PAIR_SIZE * n
        if lref:
            buf[new:new + used] = buf[lref:lref + used]
        label_write_pair(buf, new, n, label, ref)
        eng.edges.set(vid, new)
        if lref:
            # label blocks are unversioned; old readers may still hold this one
            store.free(lref, label_order(n), eng.epochs.gre, self.worker.local)

    def _redirect(self, cur: tel.TelCursor, ref: int) -> None:
        eng = self.engine
        buf = eng.store.buf
        lref = eng.edges.get(cur.vid)
        idx, _ = label_lookup(buf, lref, cur.label)
        set_label_ref(buf, lref, idx, ref)

    def _write_edge(self, src, dst, props, label, tombstone=False):
        cur = self._cursor(src, label, create=True)
        eng = self.engine
        store = eng.store
        while True:
            try:
                res = tel.append_update_or_delete(store.buf, cur, dst, props, self.tid,
                                                  self.tre, tombstone, eng.scan_stats)
            except tel.VersionConflict as exc:
                self._fail(StaleSnapshot(str(exc), exc.epoch))
            if isinstance(res, tel.NeedsResize):
                new = tel.resize(store, cur, res.required_payload, self.worker.local)
                self._redirect(cur, new)
                continue
            return res, cur

    def _edge_live(self, src, dst, label) -> bool:
        ref, n, ps = self._tel_view(src, label)
        if not ref:
            return False
        return tel.find_edge(self.engine.store.buf, ref, dst, self.tre, self.tid,
                             n, ps, self.engine.scan_stats) is not None

    def add_edge(self, src: int, dst: int, props: bytes = b"", label: int = 0) -> bool:
        """Insert or overwrite edge ``src -> dst``; True if it did not exist."""
        self._check_writable()
        if not self.vertex_exists(src):
            raise NotFound(f"vertex {src}")
        props = bytes(props)
        slot, cur = self._write_edge(src, dst, props, label)
        created = slot is None or bool(
            tel.read_entry(self.engine.store.buf, cur.ref, cur.order, slot)[3] & tel.TOMBSTONE)
        self._record(dur.EADD, src, label, dst, props)
        return created

    def update_edge(self, src: int, dst: int, props: bytes, label: int = 0) -> None:
        self._check_writable()
        if not self.vertex_exists(src):
            raise NotFound(f"vertex {src}")
        self._guard(src)
        if not self._edge_live(src, dst, label):
            raise NotFound(f"edge {src}->{dst}")
        props = bytes(props)
        self._write_edge(src, dst, props, label)
        self._record(dur.EUPD, src, label, dst, props)

    def delete_edge(self, src: int, dst: int, label: int = 0) -> bool:
        """Delete ``src -> dst``; True if the edge existed."""
        self._check_writable()
        if not self.vertex_exists(src):
            raise NotFound(f"vertex {src}")
        self._guard(src)
        if not self._edge_live(src, dst, label):
            return False
        self._write_edge(src, dst, b"", label, tombstone=True)
        self._record(dur.EDEL, src, label, dst)
        return True

    # -------------------------------------------------------------- finishing
    @property
    def writes(self) -> int:
        return len(self._ops)

    def commit(self) -> int:
        """Make the writes durable and visible; returns the commit epoch."""
        self._check_active()
        if self.read_only or not (self._tels or self._vertices):
            self._release_locks()
            return self._finish("committed", self.tre)
        eng = self.engine
        payload = dur.encode_txn(self.tid, self._ops)
        try:
            twe = eng.manager.submit(payload)
        except TransactionAborted:
            self.abort()
            raise
        self._apply(twe)
        eng.epochs.wait_visible(twe)
        eng._note_commit()
        return self._finish("committed", twe)

    def _commit_at(self, epoch: int) -> int:
        """Apply at a given epoch without logging (recovery replay)."""
        self._check_active()
        if self._tels or self._vertices:
            self._apply(epoch, notify=False)
        else:
            self._release_locks()
        self.engine.epochs.force(epoch)
        return self._finish("committed", epoch)

    def _apply(self, twe: int, notify: bool = True) -> None:
        eng = self.engine
        buf = eng.store.buf
        touched = []
        for cur in self._tels.values():
            if cur.n == cur.base_n and not cur.invalidated:
                continue
            touched.append(cur)
            tel.set_commit_ts(buf, cur.ref, twe)
            tel.publish_sizes(buf, cur.ref, cur.n, cur.ps)
        for vid, (ref, _) in self._vertices.items():
            set_vertex_cts(buf, ref, twe)
            eng.vertices.set(vid, ref)
        self._release_locks()
        for cur in touched:
            ref, order = cur.ref, cur.order
            for slot in cur.invalidated:
                tel.set_invalidation(buf, ref, order, slot, twe)
            for slot in range(cur.base_n, cur.n):
                tel.set_creation(buf, ref, order, slot, twe)
            if cur.copies:
                key = (cur.vid, cur.label)
                eng.resize_copies[key] += cur.copies
                eng.resize_copy_bytes[key] += cur.copied_bytes
        dirty = {cur.vid for cur in touched}
        dirty.update(self._vertices)
        self.worker.mark_dirty(dirty)
        if notify:
            eng.manager.applied(twe)

    def _release_locks(self) -> None:
        locks = self.engine.locks
        for vid in self._locked:
            locks.release(vid)
        self._locked = []
        self._locked_set = set()

    def _finish(self, state: str, epoch: int | None) -> int | None:
        self.state = state
        self.commit_epoch = epoch
        self.worker._finished()
        return epoch

    def abort(self) -> None:
        if self.state != "active":
            return
        eng = self.engine
        store = eng.store
        local = self.worker.local
        gre = eng.epochs.gre
        buf = store.buf
        for cur in self._tels.values():
            orig_order = tel.block_order(buf, cur.orig_ref)
            for slot in cur.invalidated:
                if slot < cur.base_n:
                    tel.set_invalidation(buf, cur.orig_ref, orig_order, slot, tel.MAX_TS)
            if cur.created or cur.ref != cur.orig_ref:
                self._redirect(cur, NULL if cur.created else cur.orig_ref)
                for ref, order in cur.new_blocks:
                    store.free(ref, order, gre, local)
                if cur.created:
                    store.free(cur.orig_ref, orig_order, gre, local)
        for ref, order in self._vertices.values():
            store.free(ref, order, -1, local)
        self._tels = {}
        self._vertices = {}
        self._release_locks()
        self._finish("aborted", None)


class Engine:
    """An in-memory (``directory=None``) or durable graph store.

    With a directory, the engine logs every commit group to ``wal.log`` and
    recovers from ``checkpoint.ckpt`` plus the log when files already exist.
    """

    def __init__(self, directory: str | os.PathLike | None = None,
                 config: EngineConfig | None = None):
        self.config = config or EngineConfig()
        cfg = self.config
        self.directory = None if directory is None else os.fspath(directory)
        self.closed = False
        if self.directory is not None:
            os.makedirs(self.directory, exist_ok=True)
        data_path = None if self.directory is None else os.path.join(self.directory, DATA_FILE)
        self.store = BlockStore(data_path, extent=cfg.extent,
                                split_order=cfg.split_order, debug=cfg.debug)
        self.vertices = IndexArray(self.store)
        self.edges = IndexArray(self.store)
        self.epochs = Epochs()
        self.locks = LockTable(cfg.lock_timeout)
        self.scan_stats = tel.ScanStats()
        self.tracer = None
        # entries / bytes copied by committed resizes since the last rewrite
        self.resize_copies: defaultdict[tuple[int, int], int] = defaultdict(int)
        self.resize_copy_bytes: defaultdict[tuple[int, int], int] = defaultdict(int)
        self.compaction_generation = 0
        self.compaction_stats = defaultdict(int)
        self._commits = 0
        self._next_vid = 0
        self._vid_lock = threading.Lock()
        self._workers: list[Worker] = []
        self._worker_lock = threading.Lock()
        self._tls = threading.local()
        self.wal = None
        self.recovered_groups = 0
        self.truncated_bytes = 0
        if self.directory is not None:
            self._recover()
            if cfg.wal:
                self.wal = dur.WriteAheadLog(self.wal_path, sync=cfg.wal_sync)
        self.manager = CommitManager(self.epochs, self.wal, cfg.group_size,
                                     cfg.group_interval)

    @classmethod
    def open(cls, directory, config: EngineConfig | None = None) -> "Engine":
        """Open (and recover) a durable engine."""
        return cls(directory, config)

    @property
    def wal_path(self) -> str | None:
        return None if self.directory is None else os.path.join(self.directory, WAL_FILE)

    @property
    def checkpoint_path(self) -> str | None:
        return None if self.directory is None else os.path.join(self.directory, CHECKPOINT_FILE)

    # ---------------------------------------------------------------- workers
    def worker(self) -> Worker:
        with self._worker_lock:
            wid = len(self._workers) + 1
            if wid > MAX_WORKERS:
                raise UsageError("too many workers")
            w = Worker(self, wid)
            self._workers.append(w)
        return w

    def _default_worker(self) -> Worker:
        w = getattr(self._tls, "worker", None)
        if w is None:
            w = self._tls.worker = self.worker()
        return w

    @property
    def workers(self) -> list[Worker]:
        return list(self._workers)

    def begin(self, read_only: bool = False) -> Transaction:
        return self._default_worker().begin(read_only)

    def run(self, fn, read_only: bool = False, retries: int = 100):
        """Run ``fn(txn)`` in a transaction, retrying aborted attempts."""
        for attempt in range(retries + 1):
            txn = self.begin(read_only)
            try:
                result = fn(txn)
                txn.commit()
                return result
            except TransactionAborted as exc:
                txn.abort()
                if attempt == retries:
                    raise
                self.backoff(exc, attempt)
            except BaseException:
                txn.abort()
                raise

    def backoff(self, exc: TransactionAborted, attempt: int) -> None:
        """Pause before retrying an aborted transaction: until the conflicting
        commit is visible if its epoch is known, else briefly and growing."""
        epoch = getattr(exc, "epoch", None)
        if epoch is not None and epoch > self.epochs.gre:
            self.epochs.wait_visible(epoch, timeout=0.1)
        elif attempt:
            time.sleep(min(50e-6 * (1 << min(attempt, 10)), 0.01))

    # ------------------------------------------------------------- bookkeeping
    @property
    def gre(self) -> int:
        return self.epochs.gre

    @property
    def next_vertex_id(self) -> int:
        return self._next_vid

    def _new_vertex_id(self) -> int:
        with self._vid_lock:
            vid = self._next_vid
            self._next_vid += 1
        self.vertices.reserve(vid + 1)
        self.edges.reserve(vid + 1)
        self.vertices.set_next_id(vid + 1)
        return vid

    def _claim_vertex_id(self, vid: int) -> None:
        with self._vid_lock:
            if vid >= self._next_vid:
                self._next_vid = vid + 1
        self.vertices.reserve(vid + 1)
        self.edges.reserve(vid + 1)
        self.vertices.set_next_id(self._next_vid)

    def _note_commit(self) -> None:
        with self._vid_lock:
            self._commits += 1
            if self._commits % self.config.compaction_period == 0:
                self.compaction_generation += 1

    def safe_epoch(self) -> int:
        return self.epochs.safe_epoch()

    def write_superblock(self) -> None:
        self.store.write_superblock(self.vertices.root, self.edges.root, self.epochs.gre)

    # -------------------------------------------------------------- durability
    def checkpoint(self, path=None, threads: int | None = None) -> int:
        """Write a consistent checkpoint and prune the WAL; returns its epoch."""
        path = path or self.checkpoint_path
        if path is None:
            raise UsageError("in-memory engine needs an explicit checkpoint path")
        worker = getattr(self, "_ckpt_worker", None)
        if worker is None:
            worker = self._ckpt_worker = self.worker()
        txn = worker.begin(read_only=True)
        try:
            epoch = txn.tre
            vids = [v for v in range(self._next_vid) if txn.vertex_exists(v)]

            def serialize(batch):
                return b"".join(dur.encode_vertex(snapshot_vertex(txn, v)) for v in batch)

            self.write_superblock()
            dur.write_checkpoint(path, epoch, self._next_vid, bytes(self.store.buf[:64]),
                                 vids, serialize,
                                 threads or self.config.checkpoint_threads)
        finally:
            txn.commit()
        if self.wal is not None and os.fspath(path) == self.checkpoint_path:
            self.wal.prune(epoch)
        return epoch

    def _recover(self) -> None:
        worker = self.worker()
        base = 0
        if os.path.exists(self.checkpoint_path):
            ck = dur.read_checkpoint(self.checkpoint_path)
            base = ck.epoch
            self.load_records(ck.vertices, ck.epoch, worker)
            if ck.next_vid:
                self._claim_vertex_id(ck.next_vid - 1)
        groups, valid, size = dur.read_log(self.wal_path)
        if valid < size:
            logger.warning("truncating %d torn bytes from the WAL", size - valid)
            with open(self.wal_path, "r+b") as f:
                f.truncate(valid)
                os.fsync(f.fileno())
            self.truncated_bytes = size - valid
        for group in groups:
            if group.epoch <= base:
                continue
            for _, ops in group.txns:
                txn = worker.begin()
                txn._log = False
                replay_ops(txn, ops)
                txn._commit_at(group.epoch)
            self.recovered_groups += 1
        self.epochs.force(max(base, groups[-1].epoch if groups else 0))

    def load_records(self, records, epoch: int, worker: Worker | None = None,
                     batch: int = 1024) -> None:
        """Install checkpoint records as system transactions at ``epoch``."""
        worker = worker or self.worker()
        for i in range(0, len(records), batch):
            txn = worker.begin()
            txn._log = False
            for rec in records[i:i + batch]:
                txn._create_vertex_at(rec.vid, rec.props)
                for label, edges in rec.labels:
                    for dst, props in edges:
                        txn._write_edge(rec.vid, dst, bytes(props), label)
            txn._commit_at(epoch)
        self.epochs.force(epoch)

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        self.manager.stop()
        if self.wal is not None:
            self.wal.close()
        if self.directory is not None:
            self.write_superblock()
            self.store.flush()
        self.store.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def snapshot_vertex(txn: Transaction, vid: int) -> dur.VertexRecord:
    labels = []
    for label in txn.labels(vid):
        edges = [(d, bytes(p)) for d, p in txn.scan_edges(vid, label)]
        if edges:
            edges.reverse()
            labels.append((label, edges))
    return dur.VertexRecord(vid, bytes(txn.get_vertex(vid) or b""), labels)


def replay_ops(txn: Transaction, ops) -> None:
    for op in ops:
        if op.opcode == dur.VPUT:
            if txn.vertex_exists(op.vid):
                txn.put_vertex(op.vid, op.payload)
            else:
                txn._create_vertex_at(op.vid, op.payload)
        elif op.opcode == dur.VDEL:
            txn.delete_vertex(op.vid)
        elif op.opcode in (dur.EADD, dur.EUPD):
            txn._write_edge(op.vid, op.dst, op.payload, op.label)
        elif op.opcode == dur.EDEL:
            txn.delete_edge(op.vid, op.dst, op.label)
