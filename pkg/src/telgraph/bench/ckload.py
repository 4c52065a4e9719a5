"""Checkpoint taken while a write-heavy workload runs.

The workload records its full history, so the checkpoint file can be
compared with the oracle state at exactly the checkpoint's epoch.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .. import durability as dur
from ..baselines.oracle import HistoryOracle
from ..engine import Engine, EngineConfig
from ..verify import state_diff, writes_of
from .workload import run_workload, seed_graph


@dataclass
class CheckpointLoadReport:
    epoch: int
    vertices: int
    checkpoint_s: float
    ops_during: int
    throughput_before: float
    throughput_during: float
    matches: bool
    anomalies: int
    diff: list = field(default_factory=list)

    @property
    def slowdown(self) -> float:
        if self.throughput_before <= 0:
            return 0.0
        return 1.0 - self.throughput_during / self.throughput_before


def checkpoint_state(ck: dur.Checkpoint) -> dict:
    """A checkpoint's vertices in :meth:`HistoryOracle.state` form."""
    out = {}
    for rec in ck.vertices:
        adj = {label: [(d, bytes(p)) for d, p in reversed(edges)]
               for label, edges in rec.labels if edges}
        out[rec.vid] = (bytes(rec.props), adj)
    return out


def checkpoint_under_load(directory, base_vertices: int = 1 << 14, clients: int = 4,
                          mix="dflt", warmup: float = 0.5, tail: float = 0.5,
                          seed: int = 0, checkpoint_threads: int = 4) -> CheckpointLoadReport:
    engine = Engine(directory, EngineConfig(checkpoint_threads=checkpoint_threads))
    try:
        seed_graph(engine, base_vertices, seed=seed)
        box: dict = {}

        def load():
            box["report"] = run_workload(engine, mix, clients=clients, ops=None,
                                         duration=1e9, seed=seed, verify=True,
                                         stop=box["stop"])

        box["stop"] = threading.Event()
        worker = threading.Thread(target=load)
        t_start = time.perf_counter()
        worker.start()
        time.sleep(warmup)
        c0 = time.perf_counter()
        epoch = engine.checkpoint()
        c1 = time.perf_counter()
        time.sleep(tail)
        box["stop"].set()
        worker.join()
        report = box["report"]
    finally:
        engine.close()

    oracle = HistoryOracle()
    if report.initial is not None:
        oracle.apply_txn(*report.initial)
    for r in sorted((r for r in report.records if r.committed and r.twe is not None),
                    key=lambda r: r.twe):
        ops = writes_of(r)
        if ops:
            oracle.apply_txn(r.twe, ops)
    expected = oracle.state(epoch)
    got = checkpoint_state(dur.read_checkpoint(engine.checkpoint_path))
    during = report.completed_between(c0, c1)
    before = report.completed_between(t_start, c0)
    return CheckpointLoadReport(
        epoch, len(got), c1 - c0, during,
        before / max(c0 - t_start, 1e-9), during / max(c1 - c0, 1e-9),
        expected == got, len(report.history.anomalies), state_diff(expected, got))
