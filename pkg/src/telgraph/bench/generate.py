"""R-MAT (Kronecker-style) edge generator and edge-list files."""
from __future__ import annotations

import os

import numpy as np

RMAT_DEFAULT = (0.57, 0.19, 0.19, 0.05)


def rmat(scale_log2: int, degree: int = 4, seed: int = 0,
         probs: tuple[float, float, float, float] = RMAT_DEFAULT,
         permute: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Exactly ``2**scale_log2 * degree`` directed edges (duplicates and self
    loops included). Vertex ids are randomly relabelled when ``permute`` so
    that hubs are not clustered at small ids."""
    a, b, c, d = probs
    if abs(a + b + c + d - 1.0) > 1e-9:
        raise ValueError("R-MAT probabilities must sum to 1")
    n = 1 << scale_log2
    m = n * degree
    rng = np.random.default_rng(seed)
    src = np.zeros(m, dtype=np.int64)
    dst = np.zeros(m, dtype=np.int64)
    ab, abc = a + b, a + b + c
    for bit in range(scale_log2):
        r = rng.random(m)
        # quadrants: a=(0,0) b=(0,1) c=(1,0) d=(1,1)
        src_bit = r >= ab
        dst_bit = ((r >= a) & (r < ab)) | (r >= abc)
        src |= src_bit.astype(np.int64) << bit
        dst |= dst_bit.astype(np.int64) << bit
    if permute:
        perm = rng.permutation(n)
        src, dst = perm[src], perm[dst]
    return src, dst


def dedupe(src: np.ndarray, dst: np.ndarray, drop_self_loops: bool = False):
    """Keep the first occurrence of each (src, dst), preserving arrival order."""
    key = (np.asarray(src, dtype=np.int64) << 32) | np.asarray(dst, dtype=np.int64)
    _, first = np.unique(key, return_index=True)
    first.sort()
    s, t = src[first], dst[first]
    if drop_self_loops:
        keep = s != t
        s, t = s[keep], t[keep]
    return s, t


def save_edges(path, src: np.ndarray, dst: np.ndarray, num_vertices: int | None = None) -> None:
    """``.npy`` paths store an (m, 2) int64 array; anything else is text."""
    path = os.fspath(path)
    arr = np.stack([src, dst], axis=1).astype(np.int64)
    if path.endswith(".npy"):
        np.save(path, arr)
        return
    with open(path, "w") as f:
        n = num_vertices if num_vertices is not None else (int(arr.max()) + 1 if len(arr) else 0)
        f.write(f"# vertices {n} edges {len(arr)}\n")
        np.savetxt(f, arr, fmt="%d", delimiter="\t")


def load_edges(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Returns (src, dst, num_vertices)."""
    path = os.fspath(path)
    if path.endswith(".npy"):
        arr = np.load(path)
        n = int(arr.max()) + 1 if len(arr) else 0
    else:
        n = None
        with open(path) as f:
            first = f.readline()
        if first.startswith("# vertices"):
            n = int(first.split()[2])
        arr = np.loadtxt(path, dtype=np.int64, comments="#", ndmin=2)
        if arr.size == 0:
            arr = np.zeros((0, 2), dtype=np.int64)
        if n is None:
            n = int(arr.max()) + 1 if len(arr) else 0
    return arr[:, 0].copy(), arr[:, 1].copy(), n


def power_law_starts(degrees: np.ndarray, count: int, seed: int = 0,
                     exponent: float = 1.0) -> np.ndarray:
    """Start vertices for scans: vertices with at least one edge, ranked in a
    random order, drawn with probability proportional to ``rank**-exponent``."""
    rng = np.random.default_rng(seed)
    candidates = np.flatnonzero(np.asarray(degrees) > 0)
    if len(candidates) == 0:
        return np.zeros(0, dtype=np.int64)
    rng.shuffle(candidates)
    ranks = np.arange(1, len(candidates) + 1, dtype=np.float64)
    weights = ranks ** -exponent
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    picks = np.searchsorted(cdf, rng.random(count), side="right")
    return candidates[np.minimum(picks, len(candidates) - 1)].astype(np.int64)
