"""Concurrent snapshot-isolation stress test with conflict hotspots.

Several workers run short multi-operation transactions over a small vertex
set in which a few hot vertices absorb a large share of all accesses. Every
attempt is recorded; afterwards the history is checked for isolation
anomalies, the scan tracer for out-of-interval reads and every edge log for
the amortised resize bound.
"""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from ..engine import Engine, EngineConfig
from ..graph import label_pairs
from ..tel import HEADER
from ..txn import TransactionAborted
from ..verify import HistoryReport, RecordingTxn, SequentialityTracer, check_history

PAYLOAD = struct.Struct("<QQ")
STRESS_CONFIG = EngineConfig(wal=False, group_interval=0.0, lock_timeout=0.002,
                             compaction_period=4096)

READ_WEIGHTS = {"get_vertex": 3, "get_edge": 3, "scan": 4, "degree": 1}
WRITE_WEIGHTS = {"put_vertex": 3, "add_edge": 5, "update_edge": 2, "delete_edge": 2,
                 "create_vertex": 0.3, "delete_vertex": 0.2}


@dataclass
class StressReport:
    seed: int
    attempts: int
    committed: int
    aborted: int
    voluntary_aborts: int
    history: HistoryReport
    tracer: SequentialityTracer
    copy_violations: list = field(default_factory=list)
    max_copy_ratio: float = 0.0

    @property
    def ok(self) -> bool:
        return self.history.ok and not self.tracer.violations and not self.copy_violations


def resize_bound_violations(engine, factor: float = 2.0) -> tuple[list, float]:
    """Edge logs whose resize copies exceed ``factor`` times their final entry
    count; also returns the largest observed copies/entries ratio."""
    bad, worst = [], 0.0
    buf = engine.store.buf
    for (vid, label), copies in list(engine.resize_copies.items()):
        lref = engine.edges.get(vid)
        ref = 0
        if lref:
            for lab, r in label_pairs(buf, lref):
                if lab == label:
                    ref = r
        final = HEADER.unpack_from(buf, ref)[2] if ref else 0
        if final:
            worst = max(worst, copies / final)
        if copies > factor * final:
            bad.append((vid, label, copies, final))
    return bad, worst


class _StressWorker:
    def __init__(self, engine, index, seed, txns, vertices, hot, hot_share, max_ops,
                 abort_rate, read_only_share):
        self.engine = engine
        self.worker = engine.worker()
        self.rng = np.random.default_rng([seed, index])
        self.txns = txns
        self.vertices = vertices
        self.hot = hot
        self.hot_share = hot_share
        self.max_ops = max_ops
        self.abort_rate = abort_rate
        self.read_only_share = read_only_share
        self.records = []
        self.voluntary = 0
        self.seq = 0
        self.read_ops = list(READ_WEIGHTS)
        self.read_p = _probs(READ_WEIGHTS)
        self.all_ops = self.read_ops + list(WRITE_WEIGHTS)
        self.all_p = _probs({**READ_WEIGHTS, **WRITE_WEIGHTS})

    def vid(self) -> int:
        if self.rng.random() < self.hot_share:
            return int(self.rng.integers(self.hot))
        return int(self.rng.integers(max(self.engine.next_vertex_id, 1)))

    def cold_vid(self) -> int:
        n = max(self.engine.next_vertex_id, self.hot + 1)
        return int(self.rng.integers(self.hot, n))

    def payload(self, tid) -> bytes:
        self.seq += 1
        return PAYLOAD.pack(tid, self.seq)

    def run(self):
        rng = self.rng
        for _ in range(self.txns):
            read_only = rng.random() < self.read_only_share
            txn = self.worker.begin(read_only=read_only)
            tx = RecordingTxn(txn, self.worker.id)
            self.records.append(tx.record)
            ops, p = (self.read_ops, self.read_p) if read_only else (self.all_ops, self.all_p)
            try:
                for _ in range(int(rng.integers(1, self.max_ops + 1))):
                    self.step(tx, txn.tid, ops[int(rng.choice(len(ops), p=p))])
                if not read_only and rng.random() < self.abort_rate:
                    tx.abort()
                    self.voluntary += 1
                else:
                    tx.commit()
            except TransactionAborted as exc:
                if txn.state == "active":
                    txn.abort()
                tx.mark_aborted()
                self.engine.backoff(exc, 0)

    def step(self, tx, tid, op):
        if op == "get_vertex":
            tx.get_vertex(self.vid())
        elif op == "get_edge":
            tx.get_edge(self.vid(), self.vid())
        elif op == "scan":
            tx.scan(self.vid(), 0, None if self.rng.random() < 0.8 else 3)
        elif op == "degree":
            tx.degree(self.vid())
        elif op == "put_vertex":
            tx.put_vertex(self.vid(), self.payload(tid))
        elif op == "add_edge":
            tx.add_edge(self.vid(), self.vid(), self.payload(tid))
        elif op == "update_edge":
            tx.update_edge(self.vid(), self.vid(), self.payload(tid))
        elif op == "delete_edge":
            tx.delete_edge(self.vid(), self.vid())
        elif op == "create_vertex":
            tx.create_vertex(self.payload(tid))
        elif op == "delete_vertex":
            tx.delete_vertex(self.cold_vid())


def _probs(weights: dict) -> np.ndarray:
    w = np.array(list(weights.values()), dtype=np.float64)
    return w / w.sum()


def stress_run(seed: int = 0, workers: int = 8, txns_per_worker: int = 10_000,
               vertices: int = 256, hot: int = 8, hot_share: float = 0.5,
               max_ops: int = 4, abort_rate: float = 0.05, read_only_share: float = 0.2,
               config: EngineConfig | None = None, trace: bool = True) -> StressReport:
    engine = Engine(config=config or STRESS_CONFIG)
    tracer = SequentialityTracer() if trace else None
    engine.tracer = tracer
    try:
        setup = RecordingTxn(engine.begin())
        rng = np.random.default_rng([seed, 1 << 20])
        for v in range(vertices):
            setup.create_vertex(PAYLOAD.pack(0, v))
        for k in range(2 * vertices):
            s, d = (int(x) for x in rng.integers(vertices, size=2))
            setup.add_edge(s, d, PAYLOAD.pack(1, k))
        setup.commit()
        ws = [_StressWorker(engine, i, seed, txns_per_worker, vertices, hot, hot_share,
                            max_ops, abort_rate, read_only_share) for i in range(workers)]
        errors: list[BaseException] = []

        def body(w):
            try:
                w.run()
            except BaseException as exc:
                errors.append(exc)

        threads = [threading.Thread(target=body, args=(w,)) for w in ws]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        records = [setup.record] + [r for w in ws for r in w.records]
        history = check_history(records)
        bad, worst = resize_bound_violations(engine)
        committed = sum(1 for r in records if r.committed)
        return StressReport(seed, len(records), committed, len(records) - committed,
                            sum(w.voluntary for w in ws), history,
                            tracer or SequentialityTracer(), bad, worst)
    finally:
        engine.close()

