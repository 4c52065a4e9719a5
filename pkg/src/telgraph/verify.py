"""History recording and post-hoc isolation checking.

:class:`RecordingTxn` wraps a transaction and logs every call with its
result. :func:`check_history` then rebuilds the committed state from the
recorded writes (ordered by commit epoch) and verifies that

* no two committed writers of the same variable overlap, i.e. each writer
  started after the previous writer of that variable committed
  (first-committer-wins); violations are reported as ``dirty-write``;
* every read returned exactly the state at the reader's snapshot plus its
  own earlier writes; violations are ``dirty-read`` (value from a writer that
  never committed), ``read-skew`` (value from another committed snapshot) or
  ``phantom`` (an adjacency scan with the wrong membership).

Variables are ``("v", vid)`` for vertex versions and ``("adj", vid, label)``
for adjacency lists; deleting a vertex writes its vertex variable and every
adjacency variable of that vertex.
"""
from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass, field

from .baselines.oracle import EADD, EDEL, EUPD, VDEL, VPUT, HistoryOracle
from .txn import NotFound

READS = ("get_vertex", "get_edge", "scan", "degree")


@dataclass
class TxnRecord:
    tid: int
    tre: int
    worker: int = 0
    twe: int | None = None
    status: str = "active"
    events: list = field(default_factory=list)   # (name, args, result)

    @property
    def committed(self) -> bool:
        return self.status == "committed"


class RecordingTxn:
    """Transaction proxy that appends every operation to a :class:`TxnRecord`."""

    def __init__(self, txn, worker: int = 0):
        self.txn = txn
        self.record = TxnRecord(txn.tid, txn.tre, worker)

    def _log(self, name, args, result):
        self.record.events.append((name, args, result))
        return result

    def get_vertex(self, vid):
        return self._log("get_vertex", (vid,), self.txn.get_vertex(vid))

    def get_edge(self, src, dst, label=0):
        return self._log("get_edge", (src, dst, label), self.txn.get_edge(src, dst, label))

    def scan(self, src, label=0, limit=None):
        rows = []
        for d, p in self.txn.scan_edges(src, label):
            rows.append((d, bytes(p)))
            if limit is not None and len(rows) >= limit:
                break
        return self._log("scan", (src, label, limit), rows)

    def degree(self, src, label=0):
        return self._log("degree", (src, label), self.txn.degree(src, label))

    def create_vertex(self, props=b""):
        return self._log("create_vertex", (bytes(props),), self.txn.create_vertex(props))

    def put_vertex(self, vid, props):
        try:
            self.txn.put_vertex(vid, props)
        except NotFound:
            return self._log("put_vertex", (vid, bytes(props)), False)
        return self._log("put_vertex", (vid, bytes(props)), True)

    def delete_vertex(self, vid):
        return self._log("delete_vertex", (vid,), self.txn.delete_vertex(vid))

    def add_edge(self, src, dst, props=b"", label=0):
        try:
            created = self.txn.add_edge(src, dst, props, label)
        except NotFound:
            created = None
        return self._log("add_edge", (src, dst, bytes(props), label), created)

    def update_edge(self, src, dst, props, label=0):
        try:
            self.txn.update_edge(src, dst, props, label)
        except NotFound:
            return self._log("update_edge", (src, dst, bytes(props), label), False)
        return self._log("update_edge", (src, dst, bytes(props), label), True)

    def delete_edge(self, src, dst, label=0):
        try:
            existed = self.txn.delete_edge(src, dst, label)
        except NotFound:
            existed = None
        return self._log("delete_edge", (src, dst, label), existed)

    def commit(self):
        epoch = self.txn.commit()
        self.record.twe = epoch
        self.record.status = "committed"
        return epoch

    def abort(self):
        self.txn.abort()
        self.record.status = "aborted"

    def mark_aborted(self):
        self.record.status = "aborted"


def writes_of(record: TxnRecord) -> list[tuple]:
    """The effective write operations of a transaction, in program order."""
    ops = []
    for name, args, result in record.events:
        if name == "create_vertex":
            ops.append((VPUT, result, args[0]))
        elif name == "put_vertex" and result:
            ops.append((VPUT, args[0], args[1]))
        elif name == "delete_vertex" and result:
            ops.append((VDEL, args[0]))
        elif name == "add_edge" and result is not None:
            src, dst, props, label = args
            ops.append((EADD, src, label, dst, props))
        elif name == "update_edge" and result:
            src, dst, props, label = args
            ops.append((EUPD, src, label, dst, props))
        elif name == "delete_edge" and result:
            src, dst, label = args
            ops.append((EDEL, src, label, dst))
    return ops


def _variables(ops):
    vs, wild = set(), set()
    for op in ops:
        if op[0] == VPUT:
            vs.add(("v", op[1]))
        elif op[0] == VDEL:
            vs.add(("v", op[1]))
            wild.add(op[1])
        else:
            vs.add(("adj", op[1], op[2]))
    return vs, wild


@dataclass
class Anomaly:
    kind: str
    tid: int
    detail: str

    def __str__(self):
        return f"{self.kind}: txn {self.tid:#x}: {self.detail}"


@dataclass
class HistoryReport:
    transactions: int
    committed: int
    aborted: int
    reads_checked: int
    anomalies: list

    @property
    def ok(self) -> bool:
        return not self.anomalies

    def counts(self) -> dict:
        out = defaultdict(int)
        for a in self.anomalies:
            out[a.kind] += 1
        return dict(out)


def check_history(records: list[TxnRecord], max_anomalies: int = 100,
                  initial: tuple[int, list] | None = None) -> HistoryReport:
    """``initial`` is an optional ``(epoch, ops)`` pair describing state that
    was already committed before the recorded transactions began."""
    anomalies: list[Anomaly] = []
    committed = [r for r in records if r.committed and r.twe is not None]
    committed.sort(key=lambda r: r.twe)
    ops_of = {id(r): writes_of(r) for r in committed}

    # first-committer-wins on every variable
    writers: dict = defaultdict(list)
    wild_writers: dict = defaultdict(list)
    for r in committed:
        ops = ops_of[id(r)]
        if not ops:
            continue
        vs, wild = _variables(ops)
        for v in vs:
            writers[v].append(r)
        for vid in wild:
            wild_writers[vid].append(r)
    for v, ws in writers.items():
        if v[0] == "adj":
            ws = ws + wild_writers.get(v[1], [])
        ws = sorted({id(r): r for r in ws}.values(), key=lambda r: r.twe)
        for a, b in zip(ws, ws[1:]):
            if b.tre < a.twe:
                anomalies.append(Anomaly(
                    "dirty-write", b.tid,
                    f"{v} written concurrently with txn {a.tid:#x} "
                    f"(tre={b.tre} < other commit {a.twe})"))

    # committed state, plus an index of who wrote which payload
    oracle = HistoryOracle()
    author: dict[bytes, TxnRecord] = {}
    if initial is not None and initial[1]:
        oracle.apply_txn(initial[0], initial[1])
    for r in records:
        for op in writes_of(r):
            if op[0] == VPUT:
                author.setdefault(op[2], r)
            elif op[0] in (EADD, EUPD):
                author.setdefault(op[4], r)
    for r in committed:
        oracle.apply_txn(r.twe, ops_of[id(r)])

    reads = 0
    for r in records:
        view = oracle.view(r.tre)
        for name, args, result in r.events:
            if name in READS:
                reads += 1
                expected = _read(view, name, args)
                if expected != result:
                    anomalies.append(_classify(r, name, args, expected, result, author))
            else:
                expected = _write(view, name, args, result)
                if expected is not _SKIP and expected != result:
                    anomalies.append(Anomaly(
                        "read-skew", r.tid,
                        f"{name}{args} returned {result!r}, snapshot implies {expected!r}"))
            if len(anomalies) >= max_anomalies:
                break
    aborted = sum(1 for r in records if r.status == "aborted")
    return HistoryReport(len(records), len(committed), aborted, reads, anomalies)


_SKIP = object()


def _read(view, name, args):
    if name == "get_vertex":
        return view.vertex(args[0])
    if name == "get_edge":
        src, dst, label = args
        return view.edge(src, dst, label)
    if name == "degree":
        return len(view.scan(*args))
    src, label, limit = args
    rows = view.scan(src, label)
    return rows if limit is None else rows[:limit]


def _write(view, name, args, result):
    if name == "create_vertex":
        view.put_vertex(result, args[0])
        return _SKIP
    if name == "put_vertex":
        ok = view.exists(args[0])
        if ok:
            view.put_vertex(*args)
        return ok
    if name == "delete_vertex":
        return view.delete_vertex(args[0])
    if name == "add_edge":
        src, dst, props, label = args
        if not view.exists(src):
            return None
        return view.add_edge(src, dst, props, label)
    if name == "update_edge":
        src, dst, props, label = args
        if not view.exists(src):
            return False
        return view.update_edge(src, dst, props, label)
    if name == "delete_edge":
        src, dst, label = args
        if not view.exists(src):
            return None
        return view.delete_edge(src, dst, label)
    raise ValueError(name)


def _classify(r, name, args, expected, got, author) -> Anomaly:
    detail = f"{name}{args}: expected {expected!r}, got {got!r}"
    if name == "degree":
        return Anomaly("phantom", r.tid, detail)
    if name == "scan":
        if {d for d, _ in expected} != {d for d, _ in got}:
            return Anomaly("phantom", r.tid, detail)
        payloads = [p for (_, p) in got if p not in {q for _, q in expected}]
    else:
        payloads = [got] if got is not None else []
    for p in payloads:
        w = author.get(p)
        if w is not None and not w.committed and w is not r:
            return Anomaly("dirty-read", r.tid, detail)
    return Anomaly("read-skew", r.tid, detail)


class SequentialityTracer:
    """Checks that each scan reads entries in one upward sweep and properties
    in one downward sweep, each inside its own contiguous region.

    :meth:`begin` returns a per-scan trace, so concurrent scans (and scans
    abandoned half way) never disturb each other.
    """

    def __init__(self):
        self.scans = 0
        self.entries = 0
        self.props = 0
        self.violations: list[str] = []
        self.blocks: set = set()
        self._lock = threading.Lock()

    def begin(self, ref, cap, n, data_start, ps) -> "_ScanTrace":
        with self._lock:
            self.scans += 1
            self.blocks.add((ref, n))
        return _ScanTrace(self, ref, cap, n, data_start, ps)

    def _merge(self, trace: "_ScanTrace") -> None:
        with self._lock:
            self.entries += trace.entries
            self.props += trace.props
            self.violations.extend(trace.violations)


class _ScanTrace:
    __slots__ = ("owner", "ref", "entry_lo", "entry_hi", "prop_lo", "next_entry",
                 "prop_cursor", "entries", "props", "violations", "closed")

    def __init__(self, owner, ref, cap, n, data_start, ps):
        self.owner = owner
        self.ref = ref
        self.entry_lo = self.next_entry = cap - 28 * n
        self.entry_hi = cap
        self.prop_lo = data_start
        self.prop_cursor = data_start + ps
        self.entries = self.props = 0
        self.violations: list[str] = []
        self.closed = False

    def entry(self, rel_off):
        self.entries += 1
        if rel_off != self.next_entry or not self.entry_lo <= rel_off < self.entry_hi:
            self.violations.append(f"block {self.ref}: entry read at {rel_off}, "
                                   f"expected {self.next_entry}")
        self.next_entry = rel_off + 28

    def prop(self, rel_off, length):
        self.props += 1
        if not (self.prop_lo <= rel_off and rel_off + length <= self.prop_cursor):
            self.violations.append(f"block {self.ref}: property read [{rel_off}, "
                                   f"{rel_off + length}) outside [{self.prop_lo}, "
                                   f"{self.prop_cursor})")
        self.prop_cursor = rel_off

    def end(self):
        if not self.closed:
            self.closed = True
            self.owner._merge(self)

    def __del__(self):
        # a scan abandoned before its end still reports what it read
        try:
            self.end()
        except Exception:
            pass


def engine_state(engine, txn=None) -> dict:
    """Visible graph in :meth:`HistoryOracle.state` form, from a fresh
    read-only snapshot unless ``txn`` is given."""
    own = txn is None
    if own:
        txn = engine.worker().begin(read_only=True)
    try:
        out = {}
        for vid in range(engine.next_vertex_id):
            props = txn.get_vertex(vid)
            if props is None:
                continue
            adj = {}
            for label in txn.labels(vid):
                rows = [(d, bytes(p)) for d, p in txn.scan_edges(vid, label)]
                if rows:
                    adj[label] = rows
            out[vid] = (bytes(props), adj)
        return out
    finally:
        if own:
            txn.commit()


def state_diff(expected: dict, got: dict, limit: int = 10) -> list[str]:
    """Human-readable differences between two state dicts."""
    out = []
    for vid in sorted(set(expected) | set(got)):
        a, b = expected.get(vid), got.get(vid)
        if a != b:
            out.append(f"vertex {vid}: expected {a!r}, got {b!r}")
            if len(out) >= limit:
                break
    return out
