"""Write-ahead log and checkpoint files.

WAL record (one per commit group)::

    epoch u64 | txn count u32 | txn* | crc32 u32
    txn = tid u64 | op count u32 | op*
    op  = opcode u8 | vid u64 | label u16 | dst u64 | plen u32 | payload

The CRC covers the whole record, so a record cut short by a crash (a torn
tail) fails the check and everything from it onwards is dropped.

Checkpoint file::

    b"TELCKPT" version u8 | epoch u64 | next vid u64 | superblock 64B |
    vertex count u64 | vertex* | crc32 u32
    vertex = vid u64 | plen u32 | props | label count u16 | label*
    label  = label u16 | edge count u32 | (dst u64 | plen u32 | props)*

Vertices appear in ascending id order, labels ascending, edges oldest first.
"""
from __future__ import annotations

import os
import struct
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

VPUT, VDEL, EADD, EUPD, EDEL = 1, 2, 3, 4, 5
OP_NAMES = {VPUT: "VPUT", VDEL: "VDEL", EADD: "EADD", EUPD: "EUPD", EDEL: "EDEL"}

_GROUP = struct.Struct("<QI")
_TXN = struct.Struct("<QI")
_OP = struct.Struct("<BQHQI")
_CRC = struct.Struct("<I")

CKPT_MAGIC = b"TELCKPT"
CKPT_VERSION = 1
_CKPT_HEAD = struct.Struct("<7sBQQ64sQ")
_VREC = struct.Struct("<QI")
_LREC = struct.Struct("<HI")
_EREC = struct.Struct("<QI")
_H = struct.Struct("<H")


class CorruptFile(ValueError):
    pass


# ------------------------------------------------------------------ encoding
def encode_op(opcode: int, vid: int, label: int = 0, dst: int = 0,
              payload: bytes = b"") -> bytes:
    return _OP.pack(opcode, vid, label, dst, len(payload)) + payload


def encode_txn(tid: int, ops: list[bytes]) -> bytes:
    return _TXN.pack(tid, len(ops)) + b"".join(ops)


def encode_group(epoch: int, txns: list[bytes]) -> bytes:
    body = _GROUP.pack(epoch, len(txns)) + b"".join(txns)
    return body + _CRC.pack(zlib.crc32(body))


@dataclass
class Op:
    opcode: int
    vid: int
    label: int
    dst: int
    payload: bytes


@dataclass
class Group:
    epoch: int
    txns: list[tuple[int, list[Op]]] = field(default_factory=list)


def decode_group(data, offset: int) -> tuple[Group, int]:
    """Parse one record at ``offset``; raises CorruptFile when torn."""
    try:
        epoch, count = _GROUP.unpack_from(data, offset)
        pos = offset + _GROUP.size
        group = Group(epoch)
        for _ in range(count):
            tid, nops = _TXN.unpack_from(data, pos)
            pos += _TXN.size
            ops = []
            for _ in range(nops):
                opcode, vid, label, dst, plen = _OP.unpack_from(data, pos)
                pos += _OP.size
                if opcode not in OP_NAMES or pos + plen > len(data):
                    raise CorruptFile("bad op")
                ops.append(Op(opcode, vid, label, dst, bytes(data[pos:pos + plen])))
                pos += plen
            group.txns.append((tid, ops))
        (crc,) = _CRC.unpack_from(data, pos)
    except struct.error as exc:
        raise CorruptFile("truncated record") from exc
    if zlib.crc32(data[offset:pos]) != crc:
        raise CorruptFile("checksum mismatch")
    return group, pos + _CRC.size


def read_log(path) -> tuple[list[Group], int, int]:
    """All intact groups, the byte length they span and the file length."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        return [], 0, 0
    groups, pos = [], 0
    while pos < len(data):
        try:
            group, nxt = decode_group(data, pos)
        except CorruptFile:
            break
        groups.append(group)
        pos = nxt
    return groups, pos, len(data)


class WriteAheadLog:
    """Append-only redo log written by the commit manager."""

    def __init__(self, path, sync: bool = True):
        self.path = os.fspath(path)
        self.sync = sync
        self._lock = threading.Lock()
        self._fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        self.size = os.fstat(self._fd).st_size
        self.appends = 0

    def append_group(self, epoch: int, txns: list[bytes]) -> None:
        record = encode_group(epoch, txns)
        with self._lock:
            before = self.size
            try:
                os.write(self._fd, record)
                if self.sync:
                    os.fdatasync(self._fd)
            except OSError:
                # leave no partial record behind for later appends to follow
                try:
                    os.ftruncate(self._fd, before)
                except OSError:
                    pass
                raise
            self.size = before + len(record)
            self.appends += 1

    def truncate(self, length: int) -> None:
        with self._lock:
            os.ftruncate(self._fd, length)
            os.fsync(self._fd)
            self.size = length

    def prune(self, through_epoch: int) -> int:
        """Drop groups with epoch <= ``through_epoch``; returns groups kept."""
        with self._lock:
            groups, valid, _ = read_log(self.path)
            kept = [g for g in groups if g.epoch > through_epoch]
            tmp = self.path + ".tmp"
            with open(tmp, "wb") as f:
                for g in kept:
                    f.write(encode_group(g.epoch, [
                        encode_txn(tid, [encode_op(o.opcode, o.vid, o.label, o.dst,
                                                   o.payload) for o in ops])
                        for tid, ops in g.txns]))
                f.flush()
                os.fsync(f.fileno())
            os.close(self._fd)
            os.replace(tmp, self.path)
            _fsync_dir(self.path)
            self._fd = os.open(self.path, os.O_WRONLY | os.O_APPEND)
            self.size = os.fstat(self._fd).st_size
            return len(kept)

    def close(self) -> None:
        with self._lock:
            if self._fd >= 0:
                os.close(self._fd)
                self._fd = -1


def _fsync_dir(path: str) -> None:
    fd = os.open(os.path.dirname(os.path.abspath(path)) or ".", os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


# --------------------------------------------------------------- checkpoints
@dataclass
class VertexRecord:
    vid: int
    props: bytes
    labels: list[tuple[int, list[tuple[int, bytes]]]]


def encode_vertex(rec: VertexRecord) -> bytes:
    parts = [_VREC.pack(rec.vid, len(rec.props)), rec.props, _H.pack(len(rec.labels))]
    for label, edges in rec.labels:
        parts.append(_LREC.pack(label, len(edges)))
        for dst, props in edges:
            parts.append(_EREC.pack(dst, len(props)))
            parts.append(props)
    return b"".join(parts)


def write_checkpoint(path, epoch: int, next_vid: int, superblock: bytes,
                     vertex_ids: list[int], serialize, threads: int = 4,
                     chunk: int = 4096) -> int:
    """Write a checkpoint atomically (temp file then rename).

    ``serialize(vids)`` returns the encoded records of a batch; batches run
    on a thread pool and are joined in id order.
    """
    path = os.fspath(path)
    tmp = path + ".tmp"
    batches = [vertex_ids[i:i + chunk] for i in range(0, len(vertex_ids), chunk)]
    crc = 0
    total = 0
    with open(tmp, "wb") as f:
        head = _CKPT_HEAD.pack(CKPT_MAGIC, CKPT_VERSION, epoch, next_vid,
                               superblock.ljust(64, b"\0")[:64], len(vertex_ids))
        f.write(head)
        crc = zlib.crc32(head, crc)
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            for blob in pool.map(serialize, batches):
                f.write(blob)
                crc = zlib.crc32(blob, crc)
                total += len(blob)
        f.write(_CRC.pack(crc))
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    _fsync_dir(path)
    return total


@dataclass
class Checkpoint:
    epoch: int
    next_vid: int
    superblock: bytes
    vertices: list[VertexRecord]


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _CKPT_HEAD.size + _CRC.size:
        raise CorruptFile("checkpoint too short")
    (crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(memoryview(data)[:-_CRC.size]) != crc:
        raise CorruptFile("checkpoint checksum mismatch")
    magic, version, epoch, next_vid, sb, count = _CKPT_HEAD.unpack_from(data, 0)
    if magic != CKPT_MAGIC or version != CKPT_VERSION:
        raise CorruptFile("not a checkpoint")
    pos = _CKPT_HEAD.size
    vertices = []
    for _ in range(count):
        vid, plen = _VREC.unpack_from(data, pos)
        pos += _VREC.size
        props = data[pos:pos + plen]
        pos += plen
        (nlabels,) = _H.unpack_from(data, pos)
        pos += 2
        labels = []
        for _ in range(nlabels):
            label, nedges = _LREC.unpack_from(data, pos)
            pos += _LREC.size
            edges = []
            for _ in range(nedges):
                dst, elen = _EREC.unpack_from(data, pos)
                pos += _EREC.size
                edges.append((dst, data[pos:pos + elen]))
                pos += elen
            labels.append((label, edges))
        vertices.append(VertexRecord(vid, props, labels))
    return Checkpoint(epoch, next_vid, sb, vertices)
