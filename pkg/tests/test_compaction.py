from hypothesis import given, settings, strategies as st

from telgraph import tel
from telgraph.compaction import compact_all
from telgraph.engine import Engine
from telgraph.graph import label_lookup, read_vertex_header
from telgraph.verify import engine_state

from conftest import FAST


def _tel(engine, vid, label=0):
    lref = engine.edges.get(vid)
    return label_lookup(engine.store.buf, lref, label)[1] if lref else 0


def _entries(engine, vid, label=0):
    ref = _tel(engine, vid, label)
    return tel.sizes(engine.store.buf, ref)[0] if ref else 0


def _commits(engine, n):
    for _ in range(n):
        with engine.begin() as tx:
            tx.create_vertex()


def test_safe_epoch_is_gre_when_idle(engine):
    _commits(engine, 4)
    assert engine.safe_epoch() == engine.gre == 4


def test_safe_epoch_pinned_by_oldest_reader(engine):
    _commits(engine, 3)
    reader = engine.worker().begin(read_only=True)
    _commits(engine, 6)
    assert reader.tre == 3 and engine.gre == 9
    assert engine.safe_epoch() == 3
    reader.commit()
    assert engine.safe_epoch() == 9


def test_dead_entries_removed_and_block_shrinks(engine):
    with engine.begin() as tx:
        a = tx.create_vertex()
        for d in range(7):
            tx.add_edge(a, d, b"p" * 40)
    with engine.begin() as tx:
        for d in range(4):
            tx.delete_edge(a, d)
    before_ref = _tel(engine, a)
    before_order = tel.block_order(engine.store.buf, before_ref)
    assert _entries(engine, a) == 11          # 7 inserts + 4 tombstones
    result = compact_all(engine)
    assert result == {"vertices": 1, "skipped": 0}
    after = _tel(engine, a)
    assert after != before_ref
    assert _entries(engine, a) == 3
    assert tel.block_order(engine.store.buf, after) <= before_order
    assert tel.prev_block(engine.store.buf, after) == 0
    with engine.begin(read_only=True) as r:
        assert sorted(d for d, _ in r.scan_edges(a)) == [4, 5, 6]
        assert r.get_edge(a, 5) == b"p" * 40


def test_fully_dead_log_is_collected(engine):
    with engine.begin() as tx:
        a = tx.create_vertex()
        tx.add_edge(a, 1)
        tx.add_edge(a, 2, label=4)
    with engine.begin() as tx:
        tx.delete_edge(a, 1)
    compact_all(engine)
    assert _tel(engine, a, 0) == 0 and _tel(engine, a, 4) != 0
    with engine.begin() as tx:
        tx.delete_edge(a, 2, label=4)
    compact_all(engine)
    assert engine.edges.get(a) == 0
    assert engine.compaction_stats["tels_dropped"] == 2


def test_pinned_reader_keeps_versions(engine):
    with engine.begin() as tx:
        a = tx.create_vertex(b"v1")
        for d in range(5):
            tx.add_edge(a, d)
    reader = engine.worker().begin(read_only=True)
    with engine.begin() as tx:
        tx.put_vertex(a, b"v2")
        for d in range(5):
            tx.delete_edge(a, d)
    compact_all(engine)
    # tombstones carry nothing the invalidated originals do not, so only they go
    assert _entries(engine, a) == 5
    assert reader.get_vertex(a) == b"v1"
    assert sorted(d for d, _ in reader.scan_edges(a)) == list(range(5))
    reader.commit()
    with engine.begin() as tx:          # dirty the vertex again
        tx.put_vertex(a, b"v3")
    compact_all(engine)
    assert _tel(engine, a, 0) == 0
    head = engine.vertices.get(a)
    assert read_vertex_header(engine.store.buf, head)[0] == 0    # chain cut


def test_pinned_versions_reclaimed_without_new_writes(engine):
    with engine.begin() as tx:
        a = tx.create_vertex(b"v1")
        for d in range(5):
            tx.add_edge(a, d)
    reader = engine.worker().begin(read_only=True)
    with engine.begin() as tx:
        tx.put_vertex(a, b"v2")
        for d in range(3):
            tx.delete_edge(a, d)
    compact_all(engine)
    assert _entries(engine, a) == 5
    reader.commit()
    assert compact_all(engine) == {"vertices": 1, "skipped": 0}
    assert _entries(engine, a) == 2
    assert read_vertex_header(engine.store.buf, engine.vertices.get(a))[0] == 0
    assert compact_all(engine) == {"vertices": 0, "skipped": 0}


def test_empty_pass_reports_zero(engine):
    assert compact_all(engine) == {"vertices": 0, "skipped": 0}
    _commits(engine, 2)
    compact_all(engine)
    assert compact_all(engine) == {"vertices": 0, "skipped": 0}


def test_deleted_vertex_collected(engine):
    with engine.begin() as tx:
        a = tx.create_vertex(b"x")
        tx.add_edge(a, 3)
    with engine.begin() as tx:
        tx.delete_vertex(a)
    compact_all(engine)
    assert engine.vertices.get(a) == 0 and engine.edges.get(a) == 0
    assert engine.compaction_stats["vertices_collected"] == 1
    with engine.begin(read_only=True) as r:
        assert not r.vertex_exists(a)


def test_locked_vertex_is_skipped_and_retried(engine):
    with engine.begin() as tx:
        a = tx.create_vertex()
        tx.add_edge(a, 1)
    with engine.begin() as tx:
        tx.delete_edge(a, 1)
    holder = engine.worker().begin()
    holder.put_vertex(a, b"busy")
    assert compact_all(engine) == {"vertices": 0, "skipped": 1}
    holder.abort()
    assert compact_all(engine) == {"vertices": 1, "skipped": 0}
    assert _tel(engine, a) == 0


def test_replaced_blocks_are_recycled_after_readers_leave():
    with Engine(config=FAST) as eng:
        w = eng.worker()
        with w.begin() as tx:
            a = tx.create_vertex()
            for d in range(50):
                tx.add_edge(a, d)
        for d in range(50):
            with w.begin() as tx:
                tx.delete_edge(a, d)
        reader = eng.worker().begin(read_only=True)
        with w.begin() as tx:
            tx.put_vertex(a, b"touch")
        compact_all(eng)
        reader.commit()
        with w.begin() as tx:
            tx.put_vertex(a, b"again")
        compact_all(eng)
        stats = eng.store.stats()
        assert stats["deferred"] > 0
        eng.store.drain(eng.safe_epoch() + 1, w.local)
        assert eng.store.stats()["deferred"] < stats["deferred"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 9), st.booleans()),
                min_size=5, max_size=120),
       st.lists(st.integers(0, 119), max_size=4))
def test_compaction_preserves_every_live_snapshot(ops, pin_at):
    with Engine(config=FAST) as eng:
        w = eng.worker()
        with w.begin() as tx:
            for _ in range(4):
                tx.create_vertex()
        readers, expected = [], []
        for i, (src, dst, delete) in enumerate(ops):
            with w.begin() as tx:
                if delete:
                    tx.delete_edge(src, dst)
                else:
                    tx.add_edge(src, dst, b"%d" % i)
            if i in pin_at:
                r = eng.worker().begin(read_only=True)
                readers.append(r)
                expected.append(engine_state(eng, r))
            if i % 17 == 0:
                compact_all(eng)
        latest = engine_state(eng)
        compact_all(eng)
        for r, state in zip(readers, expected):
            assert engine_state(eng, r) == state
        assert engine_state(eng) == latest
        for r in readers:
            r.commit()
        compact_all(eng)
        assert engine_state(eng) == latest
