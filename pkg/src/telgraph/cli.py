"""``telgraph`` command line.

Every flag can also come from a ``key = value`` config file (``--config``);
command-line flags win. ``TELGRAPH_DATA`` supplies the default data
directory. Reports print as an aligned table, or as CSV with ``--format csv``.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time

DATA_ENV = "TELGRAPH_DATA"


# ------------------------------------------------------------------ output
def emit(rows: list[dict], fmt: str = "table", out=None) -> None:
    out = out or sys.stdout
    if not rows:
        return
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    if fmt == "csv":
        w = csv.DictWriter(out, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return
    cells = [[_fmt(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    out.write("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for row in cells:
        out.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}" if abs(v) < 1e4 else f"{v:.0f}"
    return str(v)


# ------------------------------------------------------------------ config
def read_config(path) -> dict[str, str]:
    out = {}
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"{path}:{n}: expected key = value")
            key, value = (x.strip() for x in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    known = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None:
            continue  # keys for other subcommands
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            defaults[key] = action.type(raw)
        else:
            defaults[key] = raw
    parser.set_defaults(**defaults)


def _data_dir(args, required: bool = True):
    d = args.data or os.environ.get(DATA_ENV)
    if required and not d:
        raise SystemExit(f"a data directory is required (--data or ${DATA_ENV})")
    return d


# ---------------------------------------------------------------- commands
def cmd_generate(args) -> list[dict]:
    from .bench.generate import dedupe, rmat, save_edges
    src, dst = rmat(args.scale, args.degree, args.seed)
    if args.dedupe:
        src, dst = dedupe(src, dst)
    save_edges(args.out, src, dst, 1 << args.scale)
    return [{"file": args.out, "vertices": 1 << args.scale, "edges": len(src)}]


def cmd_load(args) -> list[dict]:
    from .bench.generate import load_edges
    from .bench.loader import bulk_load
    from .engine import Engine
    directory = _data_dir(args)
    src, dst, n = load_edges(args.edges)
    t0 = time.perf_counter()
    with Engine(directory) as eng:
        if eng.next_vertex_id:
            raise SystemExit(f"{directory} already holds a graph")
        stats = bulk_load(eng, n, src, dst, label=args.label)
        epoch = eng.checkpoint()
    stats.update(seconds=round(time.perf_counter() - t0, 3), epoch=epoch, data=directory)
    return [stats]


def cmd_microbench(args) -> list[dict]:
    from .bench.microbench import run_microbench
    rows = []
    for scale in args.scales or [args.scale]:
        for r in run_microbench(scale, args.degree, args.scans, args.seed,
                                tuple(args.stores.split(",")), args.repeats, args.exponent):
            rows.append({"store": r.store, "scale": scale, "edges": r.edges,
                         "seek_ns": r.seek_ns, "per_edge_ns": r.per_edge_ns,
                         "scan_ns": r.scan_ns, "edges_scanned": r.edges_scanned})
    return rows


def _open_or_memory(args):
    from .bench.workload import seed_graph
    from .engine import Engine, EngineConfig
    directory = _data_dir(args, required=False)
    cfg = EngineConfig(wal=not args.no_wal, compaction=not args.no_compaction)
    eng = Engine(directory, cfg)
    if eng.next_vertex_id == 0:
        seed_graph(eng, args.base_vertices, seed=args.seed)
    return eng


def cmd_workload(args) -> list[dict]:
    from .bench.workload import custom_mix, load_mix, run_workload
    eng = _open_or_memory(args)
    rows = []
    try:
        ratios = args.write_ratio or [None]
        for ratio in ratios:
            mix = load_mix(args.mix) if ratio is None else custom_mix(ratio)
            rep = run_workload(eng, mix, clients=args.clients,
                               ops=None if args.duration else args.ops,
                               duration=args.duration, seed=args.seed, verify=args.verify,
                               think_time=args.think_time)
            row = {"mix": args.mix if ratio is None else f"write={ratio:g}"}
            row.update(rep.summary())
            row["footprint_mb"] = round(eng.store.tail / 2**20, 2)
            rows.append(row)
            if rep.history is not None and not rep.history.ok:
                for a in rep.history.anomalies[:20]:
                    print(a, file=sys.stderr)
                emit(rows, args.format)
                raise SystemExit(1)
    finally:
        eng.close()
    return rows


def cmd_analytics(args) -> list[dict]:
    from .analytics import connected_components, pagerank, snapshot_view
    from .engine import Engine
    directory = _data_dir(args)
    with Engine(directory) as eng:
        t0 = time.perf_counter()
        view = snapshot_view(eng, args.label)
        t1 = time.perf_counter()
        if args.algo == "pagerank":
            result = pagerank(view, args.iterations, args.damping)
        else:
            result = connected_components(view)
        t2 = time.perf_counter()
    if args.out:
        with open(args.out, "w") as f:
            for v, x in sorted(result.items()):
                f.write(f"{v}\t{x!r}\n")
    summary = {"algo": args.algo, "epoch": view.epoch, "vertices": len(result),
               "edges": view.num_edges, "snapshot_s": round(t1 - t0, 4),
               "compute_s": round(t2 - t1, 4)}
    if args.algo == "cc":
        summary["components"] = len(set(result.values()))
    rows = [summary]
    if args.top:
        order = sorted(result.items(), key=lambda kv: -kv[1])[:args.top]
        rows += [{"algo": args.algo, "vertex": v, "value": x} for v, x in order]
    return rows


def cmd_checkpoint(args) -> list[dict]:
    from .engine import Engine
    if args.under_load:
        from .bench.ckload import checkpoint_under_load
        directory = _data_dir(args)
        r = checkpoint_under_load(directory, args.base_vertices, args.clients, args.mix,
                                  seed=args.seed)
        return [{"epoch": r.epoch, "vertices": r.vertices, "checkpoint_s": r.checkpoint_s,
                 "ops_during": r.ops_during, "tput_before": r.throughput_before,
                 "tput_during": r.throughput_during, "slowdown": r.slowdown,
                 "matches_oracle": r.matches}]
    directory = _data_dir(args)
    with Engine(directory) as eng:
        t0 = time.perf_counter()
        epoch = eng.checkpoint(threads=args.threads)
        dt = time.perf_counter() - t0
    size = os.path.getsize(os.path.join(directory, "checkpoint.ckpt"))
    return [{"epoch": epoch, "seconds": round(dt, 4), "bytes": size}]


def cmd_crashtest(args) -> list[dict]:
    from .bench.crashtest import crash_sweep, torn_tail_trials
    rows = []
    results = crash_sweep(args.points, args.seed, args.count)
    for i, r in enumerate(results):
        rows.append({"run": i, "kill_at": r.kill_at, "acked": r.acked, "recovered": r.matched,
                     "groups_replayed": r.recovered_groups, "ok": r.ok})
    torn = torn_tail_trials(args.seed, trials=args.torn) if args.torn else []
    ok = all(r.ok for r in results) and all(t.ok for t in torn)
    rows.append({"run": "total", "ok": ok,
                 "acked": sum(r.ok for r in results), "recovered": f"{len(results)} runs",
                 "groups_replayed": f"torn {sum(t.ok for t in torn)}/{len(torn)}"})
    if not ok:
        emit(rows, args.format)
        raise SystemExit(1)
    return rows


def cmd_recover(args) -> list[dict]:
    from .engine import Engine
    directory = _data_dir(args)
    t0 = time.perf_counter()
    with Engine(directory) as eng:
        dt = time.perf_counter() - t0
        txn = eng.begin(read_only=True)
        alive = sum(1 for v in range(eng.next_vertex_id) if txn.vertex_exists(v))
        txn.commit()
        row = {"epoch": eng.gre, "vertices": alive, "next_vertex_id": eng.next_vertex_id,
               "groups_replayed": eng.recovered_groups,
               "torn_bytes_dropped": eng.truncated_bytes, "seconds": round(dt, 4)}
        if args.checkpoint:
            row["checkpoint_epoch"] = eng.checkpoint()
    return [row]


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="telgraph", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value file with defaults for any flag")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data(sp):
        sp.add_argument("--data", help=f"data directory (default ${DATA_ENV})")

    g = sub.add_parser("generate", help="write an R-MAT edge list")
    g.add_argument("--model", choices=("rmat",), default="rmat")
    g.add_argument("--scale", type=int, default=16, help="log2 of the vertex count")
    g.add_argument("--degree", type=int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dedupe", action="store_true")
    g.add_argument("--out", default="edges.npy")
    g.set_defaults(fn=cmd_generate)

    ld = sub.add_parser("load", help="bulk load an edge list into a data directory")
    data(ld)
    ld.add_argument("--edges", required=True)
    ld.add_argument("--label", type=int, default=0)
    ld.set_defaults(fn=cmd_load)

    m = sub.add_parser("microbench", help="seek/scan micro-benchmark")
    m.add_argument("--scale", type=int, default=20)
    m.add_argument("--scales", type=int, nargs="*")
    m.add_argument("--degree", type=int, default=4)
    m.add_argument("--scans", type=int, default=10**6)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--stores", default="tel,linkedlist,btree")
    m.add_argument("--repeats", type=int, default=3)
    m.add_argument("--exponent", type=float, default=1.0,
                   help="power-law exponent of the start-vertex ranks")
    m.set_defaults(fn=cmd_microbench)

    def workload_flags(sp):
        sp.add_argument("--mix", default="dflt", help="dflt, tao or a mix file")
        sp.add_argument("--clients", type=int, default=4)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--base-vertices", type=int, default=1 << 14)

    w = sub.add_parser("workload", help="LinkBench-style mixed workload")
    data(w)
    workload_flags(w)
    w.add_argument("--write-ratio", type=float, nargs="*",
                   help="custom mixes: DFLT rescaled to these write shares")
    w.add_argument("--ops", type=int, default=100_000)
    w.add_argument("--duration", type=float)
    w.add_argument("--verify", action="store_true")
    w.add_argument("--think-time", type=float, default=0.0)
    w.add_argument("--no-wal", action="store_true")
    w.add_argument("--no-compaction", action="store_true")
    w.set_defaults(fn=cmd_workload)

    a = sub.add_parser("analytics", help="PageRank or connected components on a snapshot")
    data(a)
    a.add_argument("--algo", choices=("pagerank", "cc"), default="pagerank")
    a.add_argument("--label", type=int, default=0)
    a.add_argument("--iterations", type=int, default=20)
    a.add_argument("--damping", type=float, default=0.85)
    a.add_argument("--out", help="write vertex<TAB>value lines")
    a.add_argument("--top", type=int, default=0)
    a.set_defaults(fn=cmd_analytics)

    c = sub.add_parser("checkpoint", help="write a checkpoint (optionally under load)")
    data(c)
    c.add_argument("--threads", type=int)
    c.add_argument("--under-load", action="store_true")
    workload_flags(c)
    c.set_defaults(fn=cmd_checkpoint)

    k = sub.add_parser("crashtest", help="kill/recover sweep against the oracle")
    k.add_argument("--points", type=int, default=50)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--count", type=int, default=400)
    k.add_argument("--torn", type=int, default=50, help="torn-tail trials (0 to skip)")
    k.set_defaults(fn=cmd_crashtest)

    r = sub.add_parser("recover", help="open a data directory and report recovery")
    data(r)
    r.add_argument("--checkpoint", action="store_true", help="checkpoint after recovering")
    r.set_defaults(fn=cmd_recover)
    for sp in sub.choices.values():
        sp.add_argument("--format", choices=("table", "csv"), default=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    config_path = None
    if "--config" in argv:
        config_path = argv[argv.index("--config") + 1]
    if config_path:
        values = read_config(config_path)
        _apply_config(parser, values)
        for sp in parser._subparsers._group_actions[0].choices.values():
            _apply_config(sp, values)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    rows = args.fn(args)
    buf = io.StringIO()
    emit(rows, args.format, buf)
    sys.stdout.write(buf.getvalue())
    return 0


if __name__ == "__main__":
    sys.exit(main())
