"""Brute-force multi-version model of the graph, used as a test oracle.

State is a list of versions per key; a query at epoch ``e`` picks the newest
version with epoch <= e. Nothing here shares code with the engine.
"""
from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass, field

VPUT, VDEL, EADD, EUPD, EDEL = "VPUT", "VDEL", "EADD", "EUPD", "EDEL"


@dataclass
class _Versions:
    epochs: list = field(default_factory=list)
    values: list = field(default_factory=list)   # (seq, payload | None)

    def add(self, epoch, value):
        if self.epochs and epoch < self.epochs[-1]:
            raise ValueError("versions must be added in epoch order")
        self.epochs.append(epoch)
        self.values.append(value)

    def at(self, epoch):
        i = bisect.bisect_right(self.epochs, epoch)
        return self.values[i - 1] if i else None


class HistoryOracle:
    """Committed history as per-key version lists.

    Operations are tuples: ``(VPUT, vid, props)``, ``(VDEL, vid)``,
    ``(EADD|EUPD, src, label, dst, props)``, ``(EDEL, src, label, dst)``.
    Deleting a vertex deletes its outgoing edges.
    """

    def __init__(self):
        self.vertices: dict[int, _Versions] = {}
        self.edges: dict[tuple[int, int], dict[int, _Versions]] = {}
        self._labels_of: dict[int, set[int]] = {}
        self.history: list[tuple[int, tuple]] = []
        self._seq = itertools.count(1)
        self.last_epoch = 0

    # ---------------------------------------------------------------- writes
    def apply(self, epoch: int, op: tuple) -> None:
        self.history.append((epoch, op))
        self.last_epoch = max(self.last_epoch, epoch)
        kind = op[0]
        if kind == VPUT:
            self.vertices.setdefault(op[1], _Versions()).add(epoch, (next(self._seq), bytes(op[2])))
        elif kind == VDEL:
            vid = op[1]
            for label in self._labels_of.get(vid, ()):
                for dst, vers in self.edges[(vid, label)].items():
                    if vers.values and vers.values[-1][1] is not None:
                        vers.add(epoch, (next(self._seq), None))
            self.vertices.setdefault(vid, _Versions()).add(epoch, (next(self._seq), None))
        elif kind in (EADD, EUPD):
            _, src, label, dst, props = op
            self._labels_of.setdefault(src, set()).add(label)
            self.edges.setdefault((src, label), {}).setdefault(dst, _Versions()).add(
                epoch, (next(self._seq), bytes(props)))
        elif kind == EDEL:
            _, src, label, dst = op
            self._labels_of.setdefault(src, set()).add(label)
            self.edges.setdefault((src, label), {}).setdefault(dst, _Versions()).add(
                epoch, (next(self._seq), None))
        else:
            raise ValueError(f"unknown op {kind}")

    def apply_txn(self, epoch: int, ops) -> None:
        for op in ops:
            self.apply(epoch, op)

    # --------------------------------------------------------------- queries
    def vertex(self, vid: int, epoch: int):
        vers = self.vertices.get(vid)
        got = vers.at(epoch) if vers else None
        return None if got is None else got[1]

    def edge(self, src: int, dst: int, epoch: int, label: int = 0):
        vers = self.edges.get((src, label), {}).get(dst)
        got = vers.at(epoch) if vers else None
        return None if got is None else got[1]

    def _scan_seq(self, src, label, epoch):
        out = []
        for dst, vers in self.edges.get((src, label), {}).items():
            got = vers.at(epoch)
            if got is not None and got[1] is not None:
                out.append((got[0], dst, got[1]))
        return out

    def scan(self, src: int, epoch: int, label: int = 0) -> list[tuple[int, bytes]]:
        """Visible edges, newest write first."""
        return [(d, p) for _, d, p in sorted(self._scan_seq(src, label, epoch), reverse=True)]

    def labels(self, src: int, epoch: int) -> list[int]:
        return sorted(lab for lab in self._labels_of.get(src, ())
                      if self._scan_seq(src, lab, epoch))

    def vertex_ids(self, epoch: int) -> list[int]:
        return sorted(v for v in self.vertices if self.vertex(v, epoch) is not None)

    def state(self, epoch: int) -> dict:
        """Whole visible graph: {vid: (props, {label: [(dst, props) newest first]})}."""
        out = {}
        for vid in self.vertex_ids(epoch):
            adj = {lab: self.scan(vid, epoch, lab) for lab in self.labels(vid, epoch)}
            out[vid] = (self.vertex(vid, epoch), adj)
        return out

    def view(self, epoch: int) -> "OracleTxn":
        return OracleTxn(self, epoch)


class OracleTxn:
    """A snapshot at ``epoch`` plus the private writes of one transaction."""

    def __init__(self, oracle: HistoryOracle, epoch: int):
        self.oracle = oracle
        self.epoch = epoch
        self._vertices: dict[int, bytes | None] = {}
        self._edges: dict[tuple[int, int], dict[int, tuple[int, bytes | None]]] = {}
        self._seq = itertools.count(1 << 60)
        self.ops: list[tuple] = []

    def vertex(self, vid):
        if vid in self._vertices:
            return self._vertices[vid]
        return self.oracle.vertex(vid, self.epoch)

    def exists(self, vid) -> bool:
        return self.vertex(vid) is not None

    def edge(self, src, dst, label=0):
        mine = self._edges.get((src, label), {})
        if dst in mine:
            return mine[dst][1]
        return self.oracle.edge(src, dst, self.epoch, label)

    def scan(self, src, label=0):
        base = {d: (s, p) for s, d, p in self.oracle._scan_seq(src, label, self.epoch)}
        for d, (s, p) in self._edges.get((src, label), {}).items():
            if p is None:
                base.pop(d, None)
            else:
                base[d] = (s, p)
        rows = sorted(((s, d, p) for d, (s, p) in base.items()), reverse=True)
        return [(d, p) for _, d, p in rows]

    def labels(self, src):
        labs = set(self.oracle.labels(src, self.epoch))
        labs.update(lab for (s, lab) in self._edges if s == src)
        return sorted(lab for lab in labs if self.scan(src, lab))

    def put_vertex(self, vid, props):
        self._vertices[vid] = bytes(props)
        self.ops.append((VPUT, vid, bytes(props)))

    def delete_vertex(self, vid) -> bool:
        if not self.exists(vid):
            return False
        for lab in self.labels(vid):
            for d, _ in self.scan(vid, lab):
                self._edges.setdefault((vid, lab), {})[d] = (next(self._seq), None)
        self._vertices[vid] = None
        self.ops.append((VDEL, vid))
        return True

    def add_edge(self, src, dst, props, label=0) -> bool:
        created = self.edge(src, dst, label) is None
        self._edges.setdefault((src, label), {})[dst] = (next(self._seq), bytes(props))
        self.ops.append((EADD, src, label, dst, bytes(props)))
        return created

    def update_edge(self, src, dst, props, label=0) -> bool:
        if self.edge(src, dst, label) is None:
            return False
        self._edges.setdefault((src, label), {})[dst] = (next(self._seq), bytes(props))
        self.ops.append((EUPD, src, label, dst, bytes(props)))
        return True

    def delete_edge(self, src, dst, label=0) -> bool:
        if self.edge(src, dst, label) is None:
            return False
        self._edges.setdefault((src, label), {})[dst] = (next(self._seq), None)
        self.ops.append((EDEL, src, label, dst))
        return True
