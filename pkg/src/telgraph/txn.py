"""Epochs, vertex locks and the group-commit manager.

Writers go through three phases. In the *work* phase they lock vertices and
write private versions stamped ``-tid``. In the *persist* phase the manager
thread collects a group of finished transactions, bumps the global write
epoch (GWE), appends the group to the WAL and hands every member its write
epoch. In the *apply* phase each member publishes sizes and commit
timestamps, releases its locks and rewrites its ``-tid`` stamps. Once the
whole group is done the global read epoch (GRE) moves forward and new
snapshots see the group's writes.
"""
from __future__ import annotations

import logging
import queue
import threading
import time

logger = logging.getLogger(__name__)

WORKER_BITS = 15
COUNT_BITS = 48
MAX_WORKERS = (1 << WORKER_BITS) - 1


class TransactionError(Exception):
    pass


class UsageError(TransactionError):
    """API misuse, e.g. two open transactions on one worker."""


class NotFound(TransactionError, KeyError):
    pass


class TransactionAborted(TransactionError):
    """The transaction was rolled back and may be retried."""


class LockTimeout(TransactionAborted):
    pass


class StaleSnapshot(TransactionAborted):
    """A newer committed write exists on an object this snapshot wants to modify.

    ``epoch`` is the conflicting commit epoch when known; retrying before the
    global read epoch reaches it is bound to fail again."""

    def __init__(self, message: str = "", epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class DurabilityError(TransactionAborted):
    pass


def make_tid(worker_id: int, count: int) -> int:
    if not 0 < worker_id <= MAX_WORKERS:
        raise ValueError("worker id out of range")
    return (worker_id << COUNT_BITS) | (count & ((1 << COUNT_BITS) - 1))


class LockTable:
    """Per-vertex blocking locks with a bounded wait."""

    def __init__(self, timeout: float = 0.010):
        self.timeout = timeout
        self._locks: dict[int, threading.Lock] = {}
        self.holders: dict[int, int] = {}
        self.acquisitions = 0
        self.timeouts = 0

    def _lock(self, vid: int) -> threading.Lock:
        lock = self._locks.get(vid)
        if lock is None:
            lock = self._locks.setdefault(vid, threading.Lock())
        return lock

    def acquire(self, vid: int, owner: int, timeout: float | None = None) -> bool:
        ok = self._lock(vid).acquire(
            timeout=self.timeout if timeout is None else timeout)
        if ok:
            self.holders[vid] = owner
            self.acquisitions += 1
        else:
            self.timeouts += 1
        return ok

    def release(self, vid: int) -> None:
        self.holders.pop(vid, None)
        self._locks[vid].release()

    def held(self) -> dict[int, int]:
        return dict(self.holders)


class Epochs:
    """GRE/GWE counters and the table of read epochs of running transactions."""

    def __init__(self):
        self.gre = 0
        self.gwe = 0
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._active: dict[int, int] = {}
        self._remaining: dict[int, int] = {}

    def register(self, worker_id: int, at: int | None = None) -> int:
        with self._lock:
            tre = self.gre if at is None else at
            if worker_id in self._active:
                raise UsageError("worker already has an open transaction")
            self._active[worker_id] = tre
            return tre

    def unregister(self, worker_id: int) -> None:
        with self._lock:
            self._active.pop(worker_id, None)

    def active(self) -> dict[int, int]:
        with self._lock:
            return dict(self._active)

    def safe_epoch(self) -> int:
        """Oldest epoch any running or future transaction may read."""
        with self._lock:
            if self._active:
                return min(min(self._active.values()), self.gre)
            return self.gre

    def open_group(self, size: int) -> int:
        with self._lock:
            self.gwe += 1
            self._remaining[self.gwe] = size
            return self.gwe

    def group_done(self, epoch: int, count: int = 1) -> None:
        with self._cond:
            self._remaining[epoch] -= count
            advanced = False
            while self._remaining.get(self.gre + 1) == 0:
                del self._remaining[self.gre + 1]
                self.gre += 1
                advanced = True
            if advanced:
                self._cond.notify_all()

    def wait_visible(self, epoch: int, timeout: float | None = None) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: self.gre >= epoch, timeout)

    def force(self, epoch: int) -> None:
        """Jump both counters (recovery replays at recorded epochs)."""
        with self._cond:
            if self._remaining:
                raise UsageError("cannot force epochs while groups are in flight")
            self.gwe = max(self.gwe, epoch)
            self.gre = max(self.gre, epoch)
            self._cond.notify_all()


class _Request:
    __slots__ = ("payload", "event", "epoch", "error")

    def __init__(self, payload: bytes):
        self.payload = payload
        self.event = threading.Event()
        self.epoch = 0
        self.error: BaseException | None = None


class CommitManager:
    """The single thread that batches commits and appends them to the WAL."""

    _STOP = object()

    def __init__(self, epochs: Epochs, wal=None, group_size: int = 64,
                 group_interval: float = 100e-6):
        self.epochs = epochs
        self.wal = wal
        self.group_size = max(1, group_size)
        self.group_interval = group_interval
        self.groups = 0
        self.committed = 0
        self._queue: queue.SimpleQueue = queue.SimpleQueue()
        self._thread = threading.Thread(target=self._run, name="telgraph-commit",
                                        daemon=True)
        self._running = True
        self._thread.start()

    def submit(self, payload: bytes) -> int:
        """Block until the transaction is durable; return its write epoch."""
        if not self._running:
            raise DurabilityError("commit manager is stopped")
        req = _Request(payload)
        self._queue.put(req)
        req.event.wait()
        if req.error is not None:
            raise DurabilityError(str(req.error)) from req.error
        return req.epoch

    def applied(self, epoch: int) -> None:
        self.epochs.group_done(epoch)

    def _collect(self, first) -> list:
        batch = [first]
        deadline = time.perf_counter() + self.group_interval
        q = self._queue
        while len(batch) < self.group_size:
            try:
                item = q.get_nowait()
            except queue.Empty:
                remaining = deadline - time.perf_counter()
                if remaining <= 0:
                    break
                try:
                    item = q.get(timeout=remaining)
                except queue.Empty:
                    break
            if item is self._STOP:
                q.put(item)
                break
            batch.append(item)
        return batch

    def _run(self) -> None:
        q = self._queue
        while True:
            first = q.get()
            if first is self._STOP:
                break
            batch = self._collect(first)
            epoch = self.epochs.open_group(len(batch))
            try:
                if self.wal is not None:
                    self.wal.append_group(epoch, [r.payload for r in batch])
            except Exception as exc:  # noqa: BLE001 - surfaced to every member
                logger.error("group commit at epoch %d failed: %s", epoch, exc)
                self.epochs.group_done(epoch, len(batch))
                for r in batch:
                    r.error = exc
                    r.event.set()
                continue
            self.groups += 1
            self.committed += len(batch)
            for r in batch:
                r.epoch = epoch
                r.event.set()

    def stop(self) -> None:
        if self._running:
            self._running = False
            self._queue.put(self._STOP)
            self._thread.join()
