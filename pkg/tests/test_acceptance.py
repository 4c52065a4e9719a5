"""End-to-end acceptance criteria at full size and tolerance.

Each test is one criterion; ``conftest`` prints a one-line PASS/FAIL summary
per criterion at the end of the session. The whole module takes roughly
15-20 minutes on one core.
"""
import random
import time

import numpy as np
import pytest

from telgraph import bloom, tel
from telgraph.analytics import connected_components, pagerank, snapshot_view
from telgraph.baselines.oracle import HistoryOracle
from telgraph.bench.ckload import checkpoint_under_load
from telgraph.bench.crashtest import crash_sweep, torn_tail_trials
from telgraph.bench.microbench import run_microbench
from telgraph.bench.stress import resize_bound_violations, stress_run
from telgraph.bench.workload import run_workload, seed_graph
from telgraph.compaction import compact_all
from telgraph.engine import Engine, EngineConfig
from telgraph.graph import label_lookup
from telgraph.verify import engine_state, state_diff

from conftest import FAST
from oracles import UnionFind, dense_pagerank, tel_entry_capacity

pytestmark = pytest.mark.acceptance

STRESS_SEEDS = range(20)


@pytest.fixture(scope="module")
def stress_reports():
    return [stress_run(seed=s, workers=8, txns_per_worker=10_000) for s in STRESS_SEEDS]


@pytest.fixture(scope="module")
def dflt_footprints():
    """One 10^6-operation DFLT run with compaction on and one with it off."""
    out = {}
    for compaction in (True, False):
        cfg = EngineConfig(wal=False, group_interval=0.0, compaction=compaction,
                           compaction_period=4096)
        with Engine(config=cfg) as eng:
            seed_graph(eng, 1 << 14, seed=7)
            rep = run_workload(eng, "dflt", clients=4, ops=10**6, seed=7)
            bad, worst = resize_bound_violations(eng)
            out[compaction] = {"tail": eng.store.tail, "ops": rep.operations,
                               "failed": rep.failed, "copy_violations": bad,
                               "copy_ratio": worst}
    return out


# ----------------------------------------------------------------------- 1
def _random_history(seed: int, total_ops: int, record_property):
    rng = random.Random(seed)
    oracle = HistoryOracle()
    eng = Engine(config=FAST.with_(compaction_period=512))
    w = eng.worker()
    pinned: list = []
    vids: list[int] = []
    done = reads = mismatches = 0
    t0 = time.perf_counter()

    def check(got, want, what):
        nonlocal reads, mismatches
        reads += 1
        if got != want:
            mismatches += 1
            if mismatches <= 5:
                print(f"mismatch {what}: engine {got!r} oracle {want!r}")

    try:
        while done < total_ops:
            tx = w.begin()
            model = oracle.view(tx.tre)
            for _ in range(rng.randint(1, 8)):
                done += 1
                r = rng.random()
                props = rng.randbytes(rng.randint(0, 20))
                label = rng.randrange(3)
                v = rng.choice(vids) if vids else 0
                dst = rng.randrange(len(vids) + 10)
                if r < 0.08 or not vids:
                    nv = tx.create_vertex(props)
                    model.put_vertex(nv, props)
                    vids.append(nv)
                elif r < 0.38:
                    if r < 0.14:
                        check(tx.get_vertex(v), model.vertex(v), ("vertex", v))
                    elif r < 0.22:
                        check(tx.get_edge(v, dst, label), model.edge(v, dst, label),
                              ("edge", v, dst, label))
                    elif r < 0.34:
                        check([(d, bytes(p)) for d, p in tx.scan_edges(v, label)],
                              model.scan(v, label), ("scan", v, label))
                    else:
                        check(tx.degree(v, label), len(model.scan(v, label)), ("degree", v))
                elif not model.exists(v):
                    check(tx.vertex_exists(v), False, ("exists", v))
                elif r < 0.46:
                    tx.put_vertex(v, props)
                    model.put_vertex(v, props)
                elif r < 0.47:
                    check(tx.delete_vertex(v), model.delete_vertex(v), ("vdel", v))
                elif r < 0.75:
                    check(tx.add_edge(v, dst, props, label),
                          model.add_edge(v, dst, props, label), ("add", v, dst))
                elif r < 0.87:
                    if model.update_edge(v, dst, props, label):
                        tx.update_edge(v, dst, props, label)
                    else:
                        check(tx.get_edge(v, dst, label), None, ("upd-missing", v, dst))
                else:
                    check(tx.delete_edge(v, dst, label), model.delete_edge(v, dst, label),
                          ("edel", v, dst))
            if rng.random() < 0.85:
                epoch = tx.commit()
                if model.ops:
                    oracle.apply_txn(epoch, model.ops)
            else:
                tx.abort()
                # ids handed out by an aborted transaction stay unused
                vids = [x for x in vids if x < eng.next_vertex_id and eng.vertices.get(x)]
            # readers pinned at older epochs
            if rng.random() < 0.02 and len(pinned) < 6:
                pinned.append(eng.worker().begin(read_only=True))
            if pinned and rng.random() < 0.01:
                pinned.pop(rng.randrange(len(pinned))).commit()
            for reader in pinned:
                if vids and rng.random() < 0.3:
                    u = rng.choice(vids)
                    lab = rng.randrange(3)
                    done += 2
                    check(reader.get_vertex(u), oracle.vertex(u, reader.tre), ("old-v", u))
                    check([(d, bytes(p)) for d, p in reader.scan_edges(u, lab)],
                          oracle.scan(u, reader.tre, lab), ("old-scan", u, lab))
            if rng.random() < 0.005:
                compact_all(eng)
        for reader in pinned + [None]:
            epoch = reader.tre if reader is not None else eng.gre
            got = engine_state(eng, reader)
            want = oracle.state(epoch)
            check(got, want, ("state", epoch, state_diff(want, got, 3)))
        for reader in pinned:
            reader.commit()
    finally:
        eng.close()
    elapsed = time.perf_counter() - t0
    record_property("ops", done)
    record_property("reads_checked", reads)
    record_property("mismatches", mismatches)
    record_property("seconds", round(elapsed, 1))
    return done, reads, mismatches, elapsed


def test_criterion_01_oracle_equivalence(record_property):
    done, reads, mismatches, elapsed = _random_history(2024, 10**5, record_property)
    print(f"criterion 1: {done} ops, {reads} reads checked, {mismatches} mismatches, "
          f"{elapsed:.1f}s")
    assert done >= 10**5
    assert mismatches == 0
    assert elapsed < 60


# ----------------------------------------------------------------------- 2
def test_criterion_02_snapshot_isolation_stress(stress_reports, record_property):
    counts = {}
    for rep in stress_reports:
        for kind, n in rep.history.counts().items():
            counts[kind] = counts.get(kind, 0) + n
    committed = sum(r.committed for r in stress_reports)
    aborted = sum(r.aborted for r in stress_reports)
    record_property("runs", len(stress_reports))
    record_property("committed", committed)
    record_property("aborted", aborted)
    record_property("anomalies", sum(counts.values()))
    print(f"criterion 2: {len(stress_reports)} runs, {committed} committed, "
          f"{aborted} aborted, anomalies {counts or 0}")
    assert len(stress_reports) == 20
    assert all(r.attempts >= 8 * 10_000 for r in stress_reports)
    assert aborted > 0                      # the hotspots really conflict
    assert counts == {}


# ----------------------------------------------------------------------- 3
def test_criterion_03_scan_sequentiality(stress_reports, record_property):
    scans = sum(r.tracer.scans for r in stress_reports)
    entries = sum(r.tracer.entries for r in stress_reports)
    violations = [v for r in stress_reports for v in r.tracer.violations]
    record_property("scans", scans)
    record_property("entries", entries)
    record_property("violations", len(violations))
    print(f"criterion 3: {scans} traced scans, {entries} entries, "
          f"{len(violations)} out-of-interval accesses")
    assert scans > 0 and entries > 0
    assert violations == []


# ----------------------------------------------------------------------- 4
def test_criterion_04_amortized_insert_bound(stress_reports, dflt_footprints, record_property):
    bad = [v for r in stress_reports for v in r.copy_violations]
    bad += dflt_footprints[False]["copy_violations"]
    worst = max([r.max_copy_ratio for r in stress_reports]
                + [dflt_footprints[False]["copy_ratio"]])
    record_property("violations", len(bad))
    record_property("max_copies_per_entry", round(worst, 3))
    print(f"criterion 4: worst copies/final entries = {worst:.3f}, {len(bad)} violations")
    assert bad == []
    assert worst <= 2.0


# ----------------------------------------------------------------------- 5
def test_criterion_05_microbenchmark_trend(record_property):
    rows = {r.store: r for r in run_microbench(scale_log2=20, degree=4, n_scans=10**6,
                                               seed=0, repeats=3)}
    t, ll, bt = rows["tel"], rows["linkedlist"], rows["btree"]
    seeks = {}
    for scale in range(18, 23):
        (r,) = run_microbench(scale_log2=scale, degree=4, n_scans=10**6, seed=0,
                              stores=("tel",), repeats=3)
        seeks[scale] = r.seek_ns
    spread = max(seeks.values()) / min(seeks.values())
    record_property("tel_ns_per_edge", round(t.per_edge_ns, 2))
    record_property("list_ns_per_edge", round(ll.per_edge_ns, 2))
    record_property("btree_ns_per_edge", round(bt.per_edge_ns, 2))
    record_property("seek_spread", round(spread, 3))
    print(f"criterion 5: per-edge ns tel {t.per_edge_ns:.2f} list {ll.per_edge_ns:.2f} "
          f"btree {bt.per_edge_ns:.2f}; tel seek ns by scale "
          + ", ".join(f"2^{s}: {v:.1f}" for s, v in seeks.items())
          + f" (max/min {spread:.2f})")
    assert t.per_edge_ns <= ll.per_edge_ns / 5
    assert t.per_edge_ns <= bt.per_edge_ns
    assert spread <= 2.0


# ----------------------------------------------------------------------- 6
def test_criterion_06_bloom_behavior(record_property):
    rng = np.random.default_rng(6)
    with Engine(config=FAST) as eng:
        degrees = rng.integers(8, 400, size=300)
        with eng.begin() as tx:
            vids = [tx.create_vertex() for _ in degrees]
        members = {}
        for v, deg in zip(vids, degrees):
            keys = rng.choice(1 << 40, size=int(deg), replace=False)
            members[v] = set(keys.tolist())
            # edge properties at least as large as an entry cap each block at
            # half of its property-free entry capacity
            with eng.begin() as tx:
                for k in keys.tolist():
                    tx.add_edge(v, k, b"p" * int(rng.integers(28, 41)))
        buf = eng.store.buf
        false_negatives = 0
        stats = eng.scan_stats
        absent = fp = blocks = 0
        with eng.begin(read_only=True) as r:
            for v in vids:
                ref = label_lookup(buf, eng.edges.get(v), 0)[1]
                order = tel.block_order(buf, ref)
                n = tel.sizes(buf, ref)[0]
                nb = tel.bloom_bytes(order)
                for k in members[v]:
                    if nb and not bloom.might_contain(buf, ref + tel.HEADER_SIZE, nb, k):
                        false_negatives += 1
                    if r.get_edge(v, k) is None:
                        false_negatives += 1
                if not nb or n > tel_entry_capacity(order) / 2:
                    continue
                blocks += 1
                before = stats.false_positive_scans
                probes = rng.integers(1 << 41, 1 << 42, size=2000).tolist()
                for k in probes:
                    assert r.get_edge(v, k) is None
                absent += len(probes)
                fp += stats.false_positive_scans - before
    rate = fp / max(absent, 1)
    record_property("false_negatives", false_negatives)
    record_property("blocks_at_half_load", blocks)
    record_property("fp_rate", round(rate, 4))
    print(f"criterion 6: {false_negatives} false negatives; {blocks} blocks at <=50% load, "
          f"{fp}/{absent} absent lookups scanned ({rate:.2%})")
    assert false_negatives == 0
    assert blocks >= 20
    assert rate < 0.05


# ----------------------------------------------------------------------- 7
def test_criterion_07_compaction(dflt_footprints, record_property):
    # correctness: every pass leaves every live snapshot unchanged
    cfg = FAST.with_(compaction_period=256)
    passes = checked = 0
    with Engine(config=cfg) as eng:
        seed_graph(eng, 1 << 10, seed=3)
        readers = []
        for round_ in range(30):
            rep = run_workload(eng, "dflt", clients=4, ops=2000, seed=round_, verify=True)
            assert rep.history.ok, rep.history.anomalies[:3]
            if len(readers) < 4:
                readers.append(eng.worker().begin(read_only=True))
            elif round_ % 3 == 0:
                readers.pop(0).commit()
            before = [engine_state(eng, r) for r in readers] + [engine_state(eng)]
            compact_all(eng)
            passes += 1
            after = [engine_state(eng, r) for r in readers] + [engine_state(eng)]
            for b, a in zip(before, after):
                assert a == b, state_diff(b, a)
                checked += 1
        for r in readers:
            r.commit()
        auto = eng.compaction_stats["runs"]
    on, off = dflt_footprints[True], dflt_footprints[False]
    reduction = 1 - on["tail"] / off["tail"]
    record_property("passes_checked", passes)
    record_property("background_runs", auto)
    record_property("footprint_on_mb", round(on["tail"] / 2**20, 1))
    record_property("footprint_off_mb", round(off["tail"] / 2**20, 1))
    print(f"criterion 7: {passes} explicit passes ({checked} snapshots compared), "
          f"{auto} worker passes; 10^6-op DFLT footprint on {on['tail'] / 2**20:.1f} MiB "
          f"vs off {off['tail'] / 2**20:.1f} MiB ({reduction:.1%} smaller)")
    assert on["ops"] == off["ops"] == 10**6
    assert on["tail"] < off["tail"]


# ----------------------------------------------------------------------- 8
def test_criterion_08_crash_recovery(record_property):
    results = crash_sweep(points=50, seed=8, count=400)
    torn = torn_tail_trials(seed=8, count=200, trials=50)
    ok = sum(r.ok for r in results)
    detected = sum(t.detected for t in torn)
    record_property("recoveries_ok", f"{ok}/{len(results)}")
    record_property("torn_detected", f"{detected}/{len(torn)}")
    print(f"criterion 8: {ok}/{len(results)} prefix-correct recoveries, torn tails "
          f"detected {detected}/{len(torn)}, state correct {sum(t.ok for t in torn)}")
    for r in results:
        assert r.ok, (r.kill_at, r.acked, r.diff)
    assert len(results) == 50
    assert all(t.detected and t.ok for t in torn)


# ----------------------------------------------------------------------- 9
def test_criterion_09_analytics(record_property):
    rng = np.random.default_rng(9)
    n = 1000
    src = rng.integers(0, n, 5000)
    dst = rng.integers(0, n, 5000)
    pairs = sorted(set(zip(src.tolist(), dst.tolist())))
    with Engine(config=FAST) as eng:
        with eng.begin() as tx:
            for _ in range(n):
                tx.create_vertex()
            for s, d in pairs:
                tx.add_edge(s, d)
        view = snapshot_view(eng)
        history = []
        pr = pagerank(view, iterations=20, history=history)
        cc = connected_components(view)
    s_arr, d_arr = zip(*pairs)
    want = dense_pagerank(n, s_arr, d_arr, iterations=20, damping=0.85)
    linf = max(abs(pr[v] - want[v]) for v in range(n))
    uf = UnionFind(range(n))
    for s, d in pairs:
        uf.union(s, d)
    mass_err = max(abs(m - 1.0) for m in history)
    # a sparse graph too, so components are non-trivial
    sparse = [(s, d) for s, d in pairs[:400]]
    with Engine(config=FAST) as eng:
        with eng.begin() as tx:
            for _ in range(n):
                tx.create_vertex()
            for s, d in sparse:
                tx.add_edge(s, d)
        cc_sparse = connected_components(snapshot_view(eng))
    uf2 = UnionFind(range(n))
    for s, d in sparse:
        uf2.union(s, d)
    record_property("pagerank_linf", f"{linf:.2e}")
    record_property("mass_error", f"{mass_err:.2e}")
    record_property("components_sparse", len(set(cc_sparse.values())))
    print(f"criterion 9: PageRank L-inf {linf:.2e}, max mass error {mass_err:.2e}, "
          f"components {len(set(cc.values()))} dense / {len(set(cc_sparse.values()))} sparse")
    assert linf <= 1e-9
    assert len(history) == 20 and mass_err <= 1e-12
    assert cc == uf.labels()
    assert cc_sparse == uf2.labels()


# ---------------------------------------------------------------------- 10
def test_criterion_10_checkpoint_under_load(tmp_path, record_property):
    rep = checkpoint_under_load(tmp_path, base_vertices=1 << 14, clients=4, mix="dflt",
                                warmup=1.0, tail=1.0, seed=10)
    record_property("epoch", rep.epoch)
    record_property("ops_during", rep.ops_during)
    record_property("slowdown", f"{rep.slowdown:.1%}")
    print(f"criterion 10: checkpoint at epoch {rep.epoch} with {rep.vertices} vertices in "
          f"{rep.checkpoint_s:.2f}s, {rep.ops_during} ops completed meanwhile, throughput "
          f"{rep.throughput_before:.0f} -> {rep.throughput_during:.0f} ops/s "
          f"(slowdown {rep.slowdown:.1%}), matches oracle: {rep.matches}")
    assert rep.matches, rep.diff
    assert rep.anomalies == 0
    assert rep.ops_during > 0
