"""The isolation checker must flag broken engines, not just bless working ones."""
from telgraph import engine as engine_mod
from telgraph import tel
from telgraph.bench.stress import stress_run
from telgraph.engine import Engine
from telgraph.txn import LockTimeout
from telgraph.verify import (RecordingTxn, SequentialityTracer, TxnRecord, check_history,
                             engine_state, state_diff)

from conftest import FAST


def _rec(tid, tre, twe, events, status="committed"):
    return TxnRecord(tid, tre, twe=twe, status=status, events=events)


SETUP = _rec(1, 0, 1, [("create_vertex", (b"a",), 0), ("add_edge", (0, 5, b"e0", 0), True)])


def test_clean_serial_history():
    t2 = _rec(2, 1, 2, [("get_vertex", (0,), b"a"), ("put_vertex", (0, b"b"), True)])
    t3 = _rec(3, 2, None, [("get_vertex", (0,), b"b"),
                           ("scan", (0, 0, None), [(5, b"e0")]), ("degree", (0, 0), 1)],
              status="aborted")
    rep = check_history([SETUP, t2, t3])
    assert rep.ok and rep.reads_checked == 4 and rep.committed == 2


def test_flags_dirty_write():
    a = _rec(2, 1, 2, [("put_vertex", (0, b"x"), True)])
    b = _rec(3, 1, 3, [("put_vertex", (0, b"y"), True)])
    assert check_history([SETUP, a, b]).counts() == {"dirty-write": 1}


def test_vertex_delete_conflicts_with_edge_writers():
    a = _rec(2, 1, 2, [("delete_vertex", (0,), True)])
    b = _rec(3, 1, 3, [("add_edge", (0, 9, b"z", 0), True)])
    counts = check_history([SETUP, a, b]).counts()
    assert counts.get("dirty-write") == 1


def test_flags_dirty_read():
    loser = _rec(2, 1, None, [("put_vertex", (0, b"uncommitted"), True)], status="aborted")
    reader = _rec(3, 1, None, [("get_vertex", (0,), b"uncommitted")], status="aborted")
    assert check_history([SETUP, loser, reader]).counts() == {"dirty-read": 1}


def test_flags_read_skew():
    writer = _rec(2, 1, 2, [("put_vertex", (0, b"later"), True)])
    reader = _rec(3, 1, None, [("get_vertex", (0,), b"later")], status="aborted")
    assert check_history([SETUP, writer, reader]).counts() == {"read-skew": 1}


def test_flags_phantom():
    writer = _rec(2, 1, 2, [("add_edge", (0, 6, b"e1", 0), True)])
    reader = _rec(3, 1, None, [("scan", (0, 0, None), [(6, b"e1"), (5, b"e0")])],
                  status="aborted")
    reader2 = _rec(4, 2, None, [("degree", (0, 0), 1)], status="aborted")
    assert check_history([SETUP, writer, reader, reader2]).counts() == {"phantom": 2}


def test_own_writes_expected_in_reads():
    t = _rec(2, 1, 2, [("add_edge", (0, 6, b"mine", 0), True),
                       ("scan", (0, 0, None), [(6, b"mine"), (5, b"e0")]),
                       ("delete_edge", (0, 5, 0), True), ("degree", (0, 0), 1)])
    assert check_history([SETUP, t]).ok


def test_recording_txn_captures_results(engine):
    r = RecordingTxn(engine.begin())
    v = r.create_vertex(b"p")
    assert r.add_edge(v, 1, b"q") is True
    assert r.add_edge(99, 1) is None           # missing vertex recorded, not raised
    assert r.update_edge(v, 2, b"r") is False
    assert r.scan(v) == [(1, b"q")]
    r.commit()
    assert r.record.committed and r.record.twe == engine.gre
    assert [e[0] for e in r.record.events] == ["create_vertex", "add_edge", "add_edge",
                                               "update_edge", "scan"]
    assert check_history([r.record]).ok


# ------------------------------------------------------------ engine mutants
def test_checker_catches_missing_first_committer_check(monkeypatch):
    def guard_without_version_check(self, vid):
        if vid in self._locked_set:
            return
        if not self.engine.locks.acquire(vid, self.tid):
            self._fail(LockTimeout(f"vertex {vid} is locked"))
        self._locked.append(vid)
        self._locked_set.add(vid)

    monkeypatch.setattr(engine_mod.Transaction, "_guard", guard_without_version_check)
    rep = stress_run(seed=1, workers=4, txns_per_worker=400)
    assert rep.history.counts().get("dirty-write", 0) > 0


def test_checker_catches_reads_at_wrong_snapshot(monkeypatch):
    real_scan = tel.scan

    def scan_latest(buf, ref, tre, tid, n=None, ps=None, tracer=None):
        return real_scan(buf, ref, 1 << 62, tid, n, ps, tracer)

    monkeypatch.setattr(engine_mod.tel, "scan", scan_latest)
    rep = stress_run(seed=2, workers=4, txns_per_worker=400, trace=False)
    counts = rep.history.counts()
    assert counts.get("phantom", 0) + counts.get("read-skew", 0) > 0


def test_unmodified_engine_passes_same_runs():
    for seed in (1, 2):
        rep = stress_run(seed=seed, workers=4, txns_per_worker=400)
        assert rep.ok, rep.history.anomalies[:3]


# ------------------------------------------------------------------ tracer
def test_tracer_accepts_engine_scans():
    with Engine(config=FAST) as eng:
        eng.tracer = SequentialityTracer()
        with eng.begin() as tx:
            a = tx.create_vertex()
            for d in range(40):
                tx.add_edge(a, d, b"x" * (d % 5))
        with eng.begin(read_only=True) as r:
            rows = list(r.scan_edges(a))
            first = next(iter(r.scan_edges(a)))      # abandoned half way
        assert len(rows) == 40 and first == rows[0]
        t = eng.tracer
        assert t.scans >= 2 and t.entries >= 41 and not t.violations


def test_tracer_flags_out_of_order_reads():
    t = SequentialityTracer()
    s = t.begin(ref=64, cap=1024, n=3, data_start=100, ps=30)
    s.entry(1024 - 84)
    s.entry(1024 - 28)            # skipped one entry
    s.prop(120, 10)
    s.prop(125, 10)               # moved back up over already-read bytes
    s.end()
    assert len(t.violations) == 2


# --------------------------------------------------------------- state dump
def test_engine_state_and_diff(engine):
    with engine.begin() as tx:
        a = tx.create_vertex(b"a")
        tx.add_edge(a, 3, b"x", label=2)
    state = engine_state(engine)
    assert state == {a: (b"a", {2: [(3, b"x")]})}
    other = {a: (b"b", {})}
    diff = state_diff(state, other)
    assert len(diff) == 1 and "vertex 0" in diff[0]
    assert state_diff(state, state) == []
