"""Random single-threaded histories against the brute-force multi-version model."""
from hypothesis import HealthCheck, given, settings, strategies as st

from telgraph.baselines.oracle import HistoryOracle
from telgraph.compaction import compact_all
from telgraph.engine import Engine
from telgraph.verify import engine_state, state_diff

from conftest import FAST

SEEDED = 6
op = st.tuples(st.sampled_from(["create", "put", "vdel", "add", "add", "add", "add", "upd",
                                "upd", "edel", "read"]),
               st.integers(0, SEEDED + 1), st.integers(0, 7), st.integers(0, 1),
               st.binary(max_size=12))
txn = st.tuples(st.lists(op, min_size=1, max_size=12),
                st.sampled_from(["commit", "commit", "commit", "abort"]),
                st.sampled_from(["none", "none", "pin", "compact", "unpin"]))


def _run_txn(tx, model, ops):
    for kind, a, b, label, props in ops:
        if kind == "create":
            vid = tx.create_vertex(props)
            model.put_vertex(vid, props)
        elif kind == "read":
            assert tx.get_vertex(a) == model.vertex(a)
            assert list(tx.scan_edges(a, label)) == model.scan(a, label)
        elif not model.exists(a):
            continue
        elif kind == "put":
            tx.put_vertex(a, props)
            model.put_vertex(a, props)
        elif kind == "vdel":
            assert tx.delete_vertex(a) == model.delete_vertex(a)
        elif kind == "add":
            assert tx.add_edge(a, b, props, label) == model.add_edge(a, b, props, label)
        elif kind == "upd":
            if model.update_edge(a, b, props, label):
                tx.update_edge(a, b, props, label)
        elif kind == "edel":
            assert tx.delete_edge(a, b, label) == model.delete_edge(a, b, label)


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(txn, min_size=1, max_size=40), st.booleans())
def test_engine_matches_model_at_every_pinned_epoch(history, small_blocks):
    cfg = FAST.with_(split_order=2 if small_blocks else 14, debug=True)
    oracle = HistoryOracle()
    pinned = []
    with Engine(config=cfg) as eng:
        w = eng.worker()
        with w.begin() as tx:
            for k in range(SEEDED):
                tx.create_vertex(b"v%d" % k)
        for k in range(SEEDED):
            oracle.apply(tx.commit_epoch, ("VPUT", k, b"v%d" % k))
        for ops, end, extra in history:
            tx = w.begin()
            model = oracle.view(tx.tre)
            _run_txn(tx, model, ops)
            if end == "commit":
                epoch = tx.commit()
                if model.ops:
                    oracle.apply_txn(epoch, model.ops)
            else:
                tx.abort()
            if extra == "pin":
                pinned.append(eng.worker().begin(read_only=True))
            elif extra == "unpin" and pinned:
                pinned.pop(0).commit()
            elif extra == "compact":
                compact_all(eng)
            for r in pinned:
                got = engine_state(eng, r)
                assert got == oracle.state(r.tre), state_diff(oracle.state(r.tre), got)
        compact_all(eng)
        for r in pinned:
            assert engine_state(eng, r) == oracle.state(r.tre)
            r.commit()
        assert engine_state(eng) == oracle.state(eng.gre)
        assert eng.locks.held() == {}
