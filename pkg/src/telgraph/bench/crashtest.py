"""Kill-and-recover harness.

A child process opens a durable engine and commits a deterministic stream
of transactions, printing one JSON line before each commit (``intent``) and
one after it returns (``ack``). The parent kills the child with SIGKILL at a
random moment, reopens the directory and checks that the recovered graph is
exactly the state after the first ``acked`` transactions, or after
``acked + 1`` when the last commit reached the log but was not acknowledged.
"""
from __future__ import annotations

import json
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from ..baselines.oracle import EADD, EDEL, VDEL, VPUT, HistoryOracle
from ..engine import Engine, EngineConfig
from ..verify import engine_state, state_diff

LABELS = 3


def txn_stream(seed: int, count: int, max_ops: int = 6, id_space: int = 400):
    """Deterministic transactions as oracle op lists, valid by construction:
    writes only touch vertices that exist at that point of the stream."""
    rng = np.random.default_rng(seed)
    alive: list[int] = []
    alive_set: set[int] = set()
    next_vid = 0
    for k in range(count):
        ops = []
        for j in range(int(rng.integers(1, max_ops + 1))):
            payload = f"{k}:{j}".encode() * int(rng.integers(1, 4))
            r = rng.random()
            if r < 0.15 or len(alive) < 4:
                if next_vid < id_space:
                    ops.append((VPUT, next_vid, payload))
                    alive.append(next_vid)
                    alive_set.add(next_vid)
                    next_vid += 1
                    continue
            v = alive[int(rng.integers(len(alive)))]
            if r < 0.30:
                ops.append((VPUT, v, payload))
            elif r < 0.33 and len(alive) > 8:
                ops.append((VDEL, v))
                alive.remove(v)
                alive_set.discard(v)
            elif r < 0.80:
                d = int(rng.integers(max(next_vid, 1)))
                ops.append((EADD, v, int(rng.integers(LABELS)), d, payload))
            else:
                d = int(rng.integers(max(next_vid, 1)))
                ops.append((EDEL, v, int(rng.integers(LABELS)), d))
        yield ops


def apply_to_engine(txn, ops) -> None:
    for op in ops:
        kind = op[0]
        if kind == VPUT:
            if txn.vertex_exists(op[1]):
                txn.put_vertex(op[1], op[2])
            else:
                vid = txn.create_vertex(op[2])
                if vid != op[1]:
                    raise AssertionError(f"vertex id {vid}, stream expected {op[1]}")
        elif kind == VDEL:
            txn.delete_vertex(op[1])
        elif kind == EADD:
            _, src, label, dst, props = op
            txn.add_edge(src, dst, props, label)
        elif kind == EDEL:
            _, src, label, dst = op
            txn.delete_edge(src, dst, label)


def oracle_states(seed: int, count: int) -> list[dict]:
    """Expected visible state after each prefix of the stream (index = prefix length)."""
    oracle = HistoryOracle()
    states = [oracle.state(0)]
    for k, ops in enumerate(txn_stream(seed, count), start=1):
        oracle.apply_txn(k, ops)
        states.append(oracle.state(k))
    return states


def child_main(directory: str, seed: int, count: int, checkpoint_every: int = 0,
               group_size: int = 64) -> None:
    cfg = EngineConfig(group_size=group_size, compaction_period=512)
    engine = Engine(directory, cfg)
    print(json.dumps({"ready": engine.gre}), flush=True)
    for k, ops in enumerate(txn_stream(seed, count), start=1):
        print(json.dumps({"intent": k}), flush=True)
        txn = engine.begin()
        apply_to_engine(txn, ops)
        epoch = txn.commit()
        print(json.dumps({"ack": k, "epoch": epoch}), flush=True)
        if checkpoint_every and k % checkpoint_every == 0:
            engine.checkpoint()
            print(json.dumps({"checkpoint": k}), flush=True)
    engine.close()
    print(json.dumps({"done": count}), flush=True)


@dataclass
class CrashResult:
    seed: int
    kill_at: int
    acked: int
    intents: int
    matched: int | None
    recovered_groups: int
    truncated_bytes: int
    diff: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.matched is not None


def _spawn(directory, seed, count, checkpoint_every):
    cmd = [sys.executable, "-m", "telgraph.bench.crashtest", "child", directory,
           str(seed), str(count), str(checkpoint_every)]
    return subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)


def crash_once(seed: int, count: int = 400, kill_at: int | None = None,
               checkpoint_every: int = 0, directory: str | None = None,
               states: list | None = None, rng=None, jitter: float = 1e-3) -> CrashResult:
    """Run one child and kill it once it has acknowledged ``kill_at``
    transactions (random when None) plus a random delay of up to ``jitter``
    seconds; then recover and compare."""
    rng = rng or np.random.default_rng(seed)
    own_dir = directory is None
    directory = directory or tempfile.mkdtemp(prefix="telgraph-crash-")
    try:
        proc = _spawn(directory, seed, count, checkpoint_every)
        first = proc.stdout.readline()
        if not first.startswith('{"ready"'):
            proc.kill()
            raise RuntimeError(f"child failed to start: {first!r} {proc.stderr.read()}")
        if kill_at is None:
            kill_at = int(rng.integers(1, count + 1))
        acked = intents = 0

        def note(line):
            nonlocal acked, intents
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                return  # torn line at the kill point
            acked = max(acked, msg.get("ack", 0))
            intents = max(intents, msg.get("intent", 0))

        while acked < kill_at:
            line = proc.stdout.readline()
            if not line:
                break
            note(line)
        time.sleep(float(rng.uniform(0.0, jitter)))
        proc.send_signal(signal.SIGKILL)
        out, _ = proc.communicate()
        for line in out.splitlines():
            note(line)
        states = states or oracle_states(seed, count)
        engine = Engine(directory, EngineConfig(compaction=False))
        try:
            got = engine_state(engine)
            groups, truncated = engine.recovered_groups, engine.truncated_bytes
        finally:
            engine.close()
        matched = None
        for k in (acked, acked + 1):
            if k <= min(intents, count) or k == acked:
                if states[k] == got:
                    matched = k
                    break
        diff = [] if matched is not None else state_diff(states[acked], got)
        return CrashResult(seed, kill_at, acked, intents, matched, groups, truncated, diff)
    finally:
        if own_dir:
            shutil.rmtree(directory, ignore_errors=True)


def crash_sweep(points: int = 50, seed: int = 0, count: int = 400,
                checkpoint_every: int = 97) -> list[CrashResult]:
    """``points`` kills at random moments; every other run also checkpoints."""
    rng = np.random.default_rng(seed)
    cache: dict[int, list] = {}
    results = []
    for i in range(points):
        s = int(rng.integers(1 << 30))
        s_mod = s % 5  # a few distinct streams keep oracle replays cheap
        if s_mod not in cache:
            cache[s_mod] = oracle_states(s_mod, count)
        results.append(crash_once(s_mod, count, int(rng.integers(1, count + 1)),
                                  checkpoint_every if i % 2 else 0,
                                  states=cache[s_mod], rng=rng))
    return results


@dataclass
class TornResult:
    cut: int
    corrupted: bool
    expected_txns: int
    detected: bool
    ok: bool


def torn_tail_trials(seed: int = 0, count: int = 200, trials: int = 50,
                     group_size: int = 8) -> list[TornResult]:
    """Write a WAL, then repeatedly cut it at a random byte (and sometimes
    flip a byte before the cut) and check that recovery keeps exactly the
    transactions of the intact leading groups and reports the dropped tail."""
    from .. import durability as dur
    rng = np.random.default_rng(seed)
    base = tempfile.mkdtemp(prefix="telgraph-torn-")
    try:
        src_dir = os.path.join(base, "src")
        proc = _spawn(src_dir, seed, count, 0)
        stdout, _ = proc.communicate()
        # commit epoch of every stream transaction; ones without effective
        # writes produce no log group and share their predecessor's state
        epoch_of = np.zeros(count + 1, dtype=np.int64)
        for line in stdout.splitlines():
            msg = json.loads(line)
            if "ack" in msg:
                epoch_of[msg["ack"]] = msg["epoch"]
        wal = os.path.join(src_dir, "wal.log")
        groups, valid, size = dur.read_log(wal)
        if valid != size:
            raise RuntimeError("clean WAL did not parse completely")
        ends, pos = [], 0
        data = open(wal, "rb").read()
        for _ in groups:
            _, pos = dur.decode_group(data, pos)
            ends.append(pos)
        group_epochs = [g.epoch for g in groups]
        states = oracle_states(seed, count)
        out = []
        for _ in range(trials):
            cut = int(rng.integers(1, size))
            corrupt = bool(rng.random() < 0.3)
            blob = bytearray(data[:cut])
            flip = None
            if corrupt:
                flip = int(rng.integers(0, cut))
                blob[flip] ^= 0xFF
            # intact groups: those ending at or before the cut and the flip
            limit = cut if flip is None else flip
            whole = int(np.searchsorted(ends, limit, side="right"))
            last_epoch = group_epochs[whole - 1] if whole else 0
            expected = int(np.flatnonzero(epoch_of <= last_epoch).max())
            trial = os.path.join(base, "trial")
            shutil.rmtree(trial, ignore_errors=True)
            os.makedirs(trial)
            with open(os.path.join(trial, "wal.log"), "wb") as f:
                f.write(blob)
            engine = Engine(trial, EngineConfig(compaction=False))
            try:
                got = engine_state(engine)
                detected = engine.truncated_bytes == cut - (ends[whole - 1] if whole else 0)
            finally:
                engine.close()
            out.append(TornResult(cut, corrupt, expected, detected,
                                  detected and got == states[expected]))
        return out
    finally:
        shutil.rmtree(base, ignore_errors=True)


if __name__ == "__main__":
    if len(sys.argv) >= 5 and sys.argv[1] == "child":
        child_main(sys.argv[2], int(sys.argv[3]), int(sys.argv[4]),
                   int(sys.argv[5]) if len(sys.argv) > 5 else 0)
    else:
        print("usage: python -m telgraph.bench.crashtest child DIR SEED COUNT [CKPT_EVERY]",
              file=sys.stderr)
        sys.exit(2)
