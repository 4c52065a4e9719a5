"""LinkBench-style closed-loop workloads.

A mix maps operation names to weights. Built-in mixes live as editable
``key = value`` files in ``mixes/``; :func:`custom_mix` rescales the DFLT
mix to a given write share. Each client thread owns a worker and issues one
transaction per operation, retrying on conflict aborts. With ``verify=True``
every attempt is recorded and the history is checked afterwards.
"""
from __future__ import annotations

import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..txn import NotFound, TransactionAborted
from ..verify import HistoryReport, RecordingTxn, check_history

MIX_DIR = Path(__file__).with_name("mixes")
OPS = ("add_node", "update_node", "delete_node", "get_node", "add_link", "delete_link",
       "update_link", "count_link", "multiget_link", "get_link_list")
READ_OPS = frozenset({"get_node", "count_link", "multiget_link", "get_link_list"})
PAYLOAD = struct.Struct("<QQ")


def parse_mix(text: str) -> dict[str, float]:
    mix = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in OPS:
            raise ValueError(f"unknown operation {key!r} in mix")
        mix[key] = float(value)
    if not mix or sum(mix.values()) <= 0:
        raise ValueError("mix has no positive weights")
    return mix


def load_mix(name_or_path: str) -> dict[str, float]:
    """A built-in mix by name (``dflt``, ``tao``) or a mix file path."""
    builtin = MIX_DIR / f"{name_or_path.lower()}.mix"
    path = builtin if builtin.exists() else Path(name_or_path)
    return parse_mix(path.read_text())


def write_share(mix: dict[str, float]) -> float:
    total = sum(mix.values())
    return sum(w for op, w in mix.items() if op not in READ_OPS) / total


def custom_mix(write_ratio: float, base: dict[str, float] | None = None) -> dict[str, float]:
    """Rescale ``base`` (DFLT by default) so writes make up ``write_ratio``,
    keeping the proportions inside the read and write groups."""
    if not 0.0 <= write_ratio <= 1.0:
        raise ValueError("write_ratio must be in [0, 1]")
    base = base or load_mix("dflt")
    reads = {k: v for k, v in base.items() if k in READ_OPS}
    writes = {k: v for k, v in base.items() if k not in READ_OPS}
    r_total, w_total = sum(reads.values()), sum(writes.values())
    out = {}
    for k, v in reads.items():
        out[k] = (1 - write_ratio) * v / r_total
    for k, v in writes.items():
        out[k] = write_ratio * v / w_total
    return {k: v for k, v in out.items() if v > 0}


@dataclass
class WorkloadReport:
    mix: dict
    clients: int
    operations: int
    elapsed: float
    aborts: int
    failed: int
    per_op: dict
    latencies_us: np.ndarray = field(repr=False)
    history: HistoryReport | None = None
    finished_at: np.ndarray = field(default=None, repr=False)   # perf_counter seconds
    records: list | None = field(default=None, repr=False)
    initial: tuple | None = field(default=None, repr=False)

    def completed_between(self, start: float, end: float) -> int:
        return int(np.count_nonzero((self.finished_at >= start) & (self.finished_at < end)))

    @property
    def throughput(self) -> float:
        return self.operations / self.elapsed if self.elapsed > 0 else 0.0

    def percentile(self, q: float) -> float:
        if len(self.latencies_us) == 0:
            return 0.0
        return float(np.percentile(self.latencies_us, q))

    def summary(self) -> dict:
        out = {"clients": self.clients, "operations": self.operations,
               "elapsed_s": round(self.elapsed, 3),
               "throughput_ops": round(self.throughput, 1),
               "p50_us": round(self.percentile(50), 1),
               "p99_us": round(self.percentile(99), 1),
               "p999_us": round(self.percentile(99.9), 1),
               "aborts": self.aborts, "failed": self.failed,
               "write_share": round(write_share(self.mix), 4)}
        if self.history is not None:
            out["anomalies"] = len(self.history.anomalies)
        return out


class _Client:
    def __init__(self, engine, index, mix, seed, verify, list_limit, think_time,
                 hot_fraction, hot_share, retries):
        self.engine = engine
        self.worker = engine.worker()
        self.rng = np.random.default_rng([seed, index])
        self.ops = list(mix)
        w = np.array([mix[k] for k in self.ops], dtype=np.float64)
        self.cdf = np.cumsum(w / w.sum())
        self.verify = verify
        self.list_limit = list_limit
        self.think_time = think_time
        self.hot_fraction = hot_fraction
        self.hot_share = hot_share
        self.retries = retries
        self.records = []
        self.latencies: list[int] = []
        self.finished: list[float] = []
        self.per_op = dict.fromkeys(self.ops, 0)
        self.aborts = 0
        self.failed = 0
        self.seq = 0

    def vertex(self) -> int:
        n = max(self.engine.next_vertex_id, 1)
        if self.hot_fraction and self.rng.random() < self.hot_share:
            n = max(1, int(n * self.hot_fraction))
        return int(self.rng.integers(n))

    def payload(self, tid: int) -> bytes:
        self.seq += 1
        return PAYLOAD.pack(tid & 0xFFFFFFFFFFFFFFFF, self.seq)

    def run(self, budget: int | None, deadline: float | None, stop: threading.Event):
        done = 0
        while not stop.is_set():
            if budget is not None and done >= budget:
                break
            if deadline is not None and time.perf_counter() >= deadline:
                break
            op = self.ops[int(np.searchsorted(self.cdf, self.rng.random(), side="right"))
                          if len(self.ops) > 1 else 0]
            args = self.arguments(op)
            t0 = time.perf_counter_ns()
            self.execute(op, args)
            t1 = time.perf_counter_ns()
            self.latencies.append(t1 - t0)
            self.finished.append(t1 / 1e9)
            self.per_op[op] += 1
            done += 1
            if self.think_time:
                time.sleep(self.think_time)

    def arguments(self, op):
        if op == "add_node":
            return ()
        if op in ("update_node", "delete_node", "get_node", "count_link", "get_link_list"):
            return (self.vertex(),)
        if op == "multiget_link":
            return (self.vertex(), [self.vertex() for _ in range(int(self.rng.integers(1, 4)))])
        return (self.vertex(), self.vertex())

    def execute(self, op, args):
        for attempt in range(self.retries + 1):
            txn = self.worker.begin(read_only=op in READ_OPS)
            tx = RecordingTxn(txn, self.worker.id) if self.verify else txn
            if self.verify:
                self.records.append(tx.record)
            try:
                _OPS[op](self, tx, txn.tid, *args)
                tx.commit()
                return
            except TransactionAborted as exc:
                self.aborts += 1
                if txn.state == "active":
                    txn.abort()
                if self.verify:
                    tx.record.status = "aborted"
                self.engine.backoff(exc, attempt)
        self.failed += 1


def _add_node(c, tx, tid):
    tx.create_vertex(c.payload(tid))


def _update_node(c, tx, tid, v):
    try:
        tx.put_vertex(v, c.payload(tid))
    except NotFound:
        pass


def _delete_node(c, tx, tid, v):
    tx.delete_vertex(v)


def _get_node(c, tx, tid, v):
    tx.get_vertex(v)


def _add_link(c, tx, tid, s, d):
    try:
        tx.add_edge(s, d, c.payload(tid))
    except NotFound:
        pass


def _update_link(c, tx, tid, s, d):
    # upsert: inserts when the edge is missing
    try:
        tx.add_edge(s, d, c.payload(tid))
    except NotFound:
        pass


def _delete_link(c, tx, tid, s, d):
    try:
        tx.delete_edge(s, d)
    except NotFound:
        pass


def _count_link(c, tx, tid, v):
    tx.degree(v)


def _multiget_link(c, tx, tid, s, dsts):
    for d in dsts:
        tx.get_edge(s, d)


def _get_link_list(c, tx, tid, v):
    if isinstance(tx, RecordingTxn):
        tx.scan(v, 0, c.list_limit)
        return
    for k, _ in enumerate(tx.scan_edges(v)):
        if k + 1 >= c.list_limit:
            break


_OPS = {"add_node": _add_node, "update_node": _update_node, "delete_node": _delete_node,
        "get_node": _get_node, "add_link": _add_link, "update_link": _update_link,
        "delete_link": _delete_link, "count_link": _count_link,
        "multiget_link": _multiget_link, "get_link_list": _get_link_list}


def run_workload(engine, mix: dict[str, float] | str = "dflt", clients: int = 4,
                 ops: int | None = 10_000, duration: float | None = None, seed: int = 0,
                 verify: bool = False, list_limit: int = 10_000, think_time: float = 0.0,
                 hot_fraction: float = 0.0, hot_share: float = 0.0,
                 retries: int = 100, stop: threading.Event | None = None) -> WorkloadReport:
    """Run closed-loop clients until ``ops`` operations in total (split evenly)
    or ``duration`` seconds have elapsed, or until ``stop`` is set.

    ``hot_fraction``/``hot_share``: with probability ``hot_share`` a vertex is
    drawn from the lowest ``hot_fraction`` of ids, creating conflict hotspots.
    """
    if isinstance(mix, str):
        mix = load_mix(mix)
    if ops is None and duration is None:
        raise ValueError("need ops or duration")
    initial = committed_state(engine) if verify else None
    cs = [_Client(engine, i, mix, seed, verify, list_limit, think_time,
                  hot_fraction, hot_share, retries) for i in range(clients)]
    budgets = [None] * clients
    if ops is not None:
        budgets = [ops // clients + (1 if i < ops % clients else 0) for i in range(clients)]
    stop = stop or threading.Event()
    t0 = time.perf_counter()
    deadline = None if duration is None else t0 + duration
    errors: list[BaseException] = []

    def body(client, budget):
        try:
            client.run(budget, deadline, stop)
        except BaseException as exc:  # surfaced after join
            errors.append(exc)
            stop.set()

    threads = [threading.Thread(target=body, args=(c, b), daemon=True)
               for c, b in zip(cs, budgets)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - t0
    if errors:
        raise errors[0]
    per_op = {k: sum(c.per_op.get(k, 0) for c in cs) for k in mix}
    lat = np.concatenate([np.asarray(c.latencies, dtype=np.float64) for c in cs]) / 1e3
    history = records = None
    if verify:
        records = [r for c in cs for r in c.records]
        history = check_history(records, initial=initial)
    return WorkloadReport(mix, clients, int(sum(per_op.values())), elapsed,
                          sum(c.aborts for c in cs), sum(c.failed for c in cs),
                          per_op, lat, history,
                          np.concatenate([np.asarray(c.finished) for c in cs]),
                          records, initial)


def committed_state(engine) -> tuple[int, list]:
    """The engine's current visible state as oracle operations at its epoch."""
    from ..baselines.oracle import EADD, VPUT
    from ..engine import snapshot_vertex
    txn = engine.worker().begin(read_only=True)
    try:
        ops = []
        for v in range(engine.next_vertex_id):
            if not txn.vertex_exists(v):
                continue
            rec = snapshot_vertex(txn, v)
            ops.append((VPUT, v, rec.props))
            for label, edges in rec.labels:
                ops.extend((EADD, v, label, d, p) for d, p in edges)
        return txn.tre, ops
    finally:
        txn.commit()


def seed_graph(engine, vertices: int, degree: int = 4, seed: int = 0) -> None:
    """Bulk load an R-MAT base graph (``vertices`` rounded up to a power of 2)
    with 16-byte edge payloads omitted."""
    from .generate import rmat
    from .loader import bulk_load
    scale = max(1, int(np.ceil(np.log2(max(vertices, 2)))))
    src, dst = rmat(scale, degree, seed)
    bulk_load(engine, 1 << scale, src, dst)
