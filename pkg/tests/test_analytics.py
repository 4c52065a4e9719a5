import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from telgraph.analytics import connected_components, pagerank, snapshot_view, snapshot_view_slow
from telgraph.engine import Engine

from conftest import FAST
from oracles import UnionFind, dense_pagerank


def _graph(edges, n=None, engine=None):
    eng = engine or Engine(config=FAST)
    n = n if n is not None else 1 + max([max(e) for e in edges], default=-1)
    with eng.begin() as tx:
        for _ in range(n):
            tx.create_vertex()
        for s, d in edges:
            tx.add_edge(s, d)
    return eng


def _same_view(a, b):
    assert a.epoch == b.epoch and a.n_ids == b.n_ids
    assert np.array_equal(a.alive, b.alive)
    assert np.array_equal(a.indptr, b.indptr)
    for v in range(a.n_ids):
        assert sorted(a.neighbors(v).tolist()) == sorted(b.neighbors(v).tolist())


def test_three_cycle_is_uniform():
    with _graph([(0, 1), (1, 2), (2, 0)]) as eng:
        pr = pagerank(snapshot_view(eng))
    assert pr == pytest.approx({0: 1 / 3, 1: 1 / 3, 2: 1 / 3}, abs=1e-12)


def test_two_cycle_is_half():
    with _graph([(0, 1), (1, 0)]) as eng:
        pr = pagerank(snapshot_view(eng))
    assert pr == pytest.approx({0: 0.5, 1: 0.5}, abs=1e-12)


def test_star_center_dominates():
    with _graph([(k, 0) for k in range(1, 6)]) as eng:
        pr = pagerank(snapshot_view(eng))
    assert max(pr, key=pr.get) == 0
    assert pr[1] == pytest.approx(pr[5])


def test_pagerank_matches_dense_oracle():
    rng = np.random.default_rng(11)
    n = 100
    pairs = {(int(s), int(d)) for s, d in rng.integers(0, n, size=(400, 2))}
    with _graph(sorted(pairs), n) as eng:
        pr = pagerank(snapshot_view(eng), iterations=20)
    src, dst = zip(*sorted(pairs))
    want = dense_pagerank(n, src, dst, iterations=20, damping=0.85)
    assert max(abs(pr[v] - want[v]) for v in range(n)) < 1e-9


def test_rank_mass_is_conserved_each_iteration():
    rng = np.random.default_rng(5)
    pairs = {(int(s), int(d)) for s, d in rng.integers(0, 60, size=(150, 2))}
    with _graph(sorted(pairs), 80) as eng:        # ids 60..79 are dangling
        history = []
        pagerank(snapshot_view(eng), iterations=20, history=history)
    assert len(history) == 20
    assert all(abs(m - 1.0) <= 1e-12 for m in history)


def test_pagerank_ignores_missing_targets_and_deleted_vertices():
    with _graph([(0, 1), (1, 0), (1, 2), (0, 99)], 3) as eng:
        with eng.begin() as tx:
            tx.delete_vertex(2)
        view = snapshot_view(eng)
        pr = pagerank(view)
    assert set(pr) == {0, 1}
    assert pr == pytest.approx({0: 0.5, 1: 0.5})


def test_isolated_vertices_are_singletons():
    with _graph([], 7) as eng:
        cc = connected_components(snapshot_view(eng))
    assert cc == {v: v for v in range(7)}


def test_two_disjoint_edges():
    with _graph([(3, 2), (0, 1)]) as eng:
        cc = connected_components(snapshot_view(eng))
    assert cc == {0: 0, 1: 0, 2: 2, 3: 2}
    assert len(set(cc.values())) == 2


def test_components_follow_edges_in_either_direction():
    # the path only connects if edges are treated as undirected
    with _graph([(5, 4), (3, 4), (3, 2), (1, 2), (1, 0)]) as eng:
        cc = connected_components(snapshot_view(eng))
    assert set(cc.values()) == {0}


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32))
def test_components_match_union_find(seed):
    rng = np.random.default_rng(seed)
    n, p = 1000, 1.2 / 1000
    mask = rng.random((n, n)) < p
    src, dst = np.nonzero(mask)
    with _graph(list(zip(src.tolist(), dst.tolist())), n) as eng:
        cc = connected_components(snapshot_view(eng))
    uf = UnionFind(range(n))
    for s, d in zip(src.tolist(), dst.tolist()):
        uf.union(s, d)
    assert cc == uf.labels()


def test_empty_engine_view():
    with Engine(config=FAST) as eng:
        view = snapshot_view(eng)
        assert view.n_ids == 0 and view.num_edges == 0
        assert pagerank(view) == {} and connected_components(view) == {}


def test_views_at_same_epoch_are_identical():
    rng = np.random.default_rng(2)
    pairs = {(int(s), int(d)) for s, d in rng.integers(0, 50, size=(300, 2))}
    with _graph(sorted(pairs), 50) as eng:
        _same_view(snapshot_view(eng), snapshot_view(eng))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 9), st.sampled_from("ad")),
                max_size=80))
def test_fast_view_equals_reference_view(ops):
    with Engine(config=FAST) as eng:
        with eng.begin() as tx:
            for _ in range(8):
                tx.create_vertex()
        for s, d, kind in ops:
            with eng.begin() as tx:
                if kind == "a":
                    tx.add_edge(s, d)
                else:
                    tx.delete_edge(s, d)
        with eng.begin() as tx:
            tx.delete_vertex(7)
        reader = eng.worker().begin(read_only=True)
        _same_view(snapshot_view(eng, txn=reader), snapshot_view_slow(reader))
        reader.commit()


def test_view_is_consistent_under_concurrent_writes():
    with Engine(config=FAST) as eng:
        with eng.begin() as tx:
            vids = [tx.create_vertex() for _ in range(64)]
            for v in vids:
                tx.add_edge(v, (v + 1) % 64)
        stop = threading.Event()

        def writer():
            rng = np.random.default_rng(0)
            w = eng.worker()
            while not stop.is_set():
                s, d = (int(x) for x in rng.integers(0, 64, 2))
                with w.begin() as tx:
                    # every transaction moves one edge, so the edge count stays 64
                    old = [n for n, _ in tx.scan_edges(s)]
                    if old and d not in old:
                        tx.delete_edge(s, old[0])
                        tx.add_edge(s, d)

        t = threading.Thread(target=writer)
        t.start()
        try:
            for _ in range(40):
                reader = eng.worker().begin(read_only=True)
                view = snapshot_view(eng, txn=reader)
                assert view.num_edges == 64
                _same_view(view, snapshot_view_slow(reader))
                reader.commit()
        finally:
            stop.set()
            t.join()
