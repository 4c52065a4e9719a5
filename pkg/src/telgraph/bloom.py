"""Blocked Bloom filter embedded in TEL blocks.

The filter is split into 64-byte sub-blocks (one cache line). A key picks one
sub-block with a third hash and sets four bits inside it using double hashing,
so a membership test touches a single line.

The scalar functions operate on any writable buffer; :func:`probe_positions`
is the vectorised twin used by the bulk loader and must agree bit for bit.
"""
from __future__ import annotations

import numpy as np

K_PROBES = 4
SUB_BLOCK = 64
_M64 = (1 << 64) - 1
_SALT_SUB = 0x9E3779B97F4A7C15
_SALT_H1 = 0xD1B54A32D192ED03
_SALT_H2 = 0x8CB92BA72F3D8DD7


def _mix(x: int, salt: int) -> int:
    z = (x + salt) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _positions(key: int, nbytes: int):
    sb = SUB_BLOCK if nbytes >= SUB_BLOCK else nbytes
    nsub = nbytes // sb
    key &= _M64
    base = (_mix(key, _SALT_SUB) % nsub) * sb
    nbits = sb * 8
    h1 = _mix(key, _SALT_H1)
    h2 = _mix(key, _SALT_H2) | 1
    for i in range(K_PROBES):
        bit = (h1 + i * h2) % nbits
        yield base + (bit >> 3), 1 << (bit & 7)


def add(buf, offset: int, nbytes: int, key: int) -> None:
    for pos, mask in _positions(key, nbytes):
        buf[offset + pos] |= mask


def might_contain(buf, offset: int, nbytes: int, key: int) -> bool:
    for pos, mask in _positions(key, nbytes):
        if not buf[offset + pos] & mask:
            return False
    return True


def _mix_np(x: np.ndarray, salt: int) -> np.ndarray:
    z = x + np.uint64(salt)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def probe_positions(keys: np.ndarray, nbytes: np.ndarray):
    """Byte offsets (relative to the filter start) and masks for every probe.

    Returns two arrays of shape ``(len(keys), K_PROBES)``.
    """
    keys = np.asarray(keys).astype(np.uint64)
    nbytes = np.asarray(nbytes, dtype=np.uint64)
    with np.errstate(over="ignore"):
        sb = np.minimum(nbytes, np.uint64(SUB_BLOCK))
        nsub = nbytes // sb
        base = (_mix_np(keys, _SALT_SUB) % nsub) * sb
        nbits = sb * np.uint64(8)
        h1 = _mix_np(keys, _SALT_H1)
        h2 = _mix_np(keys, _SALT_H2) | np.uint64(1)
        i = np.arange(K_PROBES, dtype=np.uint64)
        bits = (h1[:, None] + i[None, :] * h2[:, None]) % nbits[:, None]
    pos = (base[:, None] + (bits >> np.uint64(3))).astype(np.int64)
    mask = (np.uint64(1) << (bits & np.uint64(7))).astype(np.uint8)
    return pos, mask
