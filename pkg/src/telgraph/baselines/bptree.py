"""In-memory B+ tree keyed by the pair ``(src, dst)``.

Keys are two int64 words stored side by side, so ids have the same width as
engine vertex ids. Leaves are slotted pages: keys sit in a leaf in arrival
order and a small slot array lists them in key order, the usual layout of
disk-oriented trees. A scan therefore follows the slot array and reads keys
out of physical order. Inner nodes hold sorted separators; ``child[i]``
covers keys below ``keys[i]`` and ``child[count]`` the rest.
"""
from __future__ import annotations

import numpy as np

from .. import kernels


def _key_order(pairs: np.ndarray) -> np.ndarray:
    """Stable argsort of an (n, 2) key array in (src, dst) order."""
    return np.lexsort((pairs[:, 1], pairs[:, 0]))


def _search(pairs: np.ndarray, key: tuple, side: str = "left") -> int:
    lo, hi = 0, len(pairs)
    while lo < hi:
        mid = (lo + hi) >> 1
        k = (int(pairs[mid, 0]), int(pairs[mid, 1]))
        if k < key or (side == "right" and k == key):
            lo = mid + 1
        else:
            hi = mid
    return lo


class BPlusTree:
    def __init__(self, fanout: int = 128):
        if fanout < 4:
            raise ValueError("fanout must be >= 4")
        self.fanout = fanout
        self.leaf_keys = np.zeros((1, fanout, 2), dtype=np.int64)
        self.leaf_slots = np.zeros((1, fanout), dtype=np.int32)
        self.leaf_count = np.zeros(1, dtype=np.int64)
        self.leaf_next = np.full(1, -1, dtype=np.int64)
        self.n_leaves = 1
        self.inner_keys = np.zeros((0, fanout, 2), dtype=np.int64)
        self.inner_child = np.zeros((0, fanout + 1), dtype=np.int64)
        self.inner_count = np.zeros(0, dtype=np.int64)
        self.n_inner = 0
        self.root = 0
        self.height = 0          # inner levels above the leaves
        self.size = 0
        self.node_visits = 0

    # ----------------------------------------------------------- allocation
    def _new_leaf(self) -> int:
        if self.n_leaves == self.leaf_keys.shape[0]:
            cap = 2 * self.n_leaves
            self.leaf_keys = _grow(self.leaf_keys, cap)
            self.leaf_slots = _grow(self.leaf_slots, cap)
            self.leaf_count = _grow(self.leaf_count, cap)
            self.leaf_next = _grow(self.leaf_next, cap, fill=-1)
        i = self.n_leaves
        self.n_leaves += 1
        self.leaf_count[i] = 0
        self.leaf_next[i] = -1
        return i

    def _new_inner(self) -> int:
        if self.n_inner == self.inner_keys.shape[0]:
            cap = max(4, 2 * self.n_inner)
            self.inner_keys = _grow(self.inner_keys, cap)
            self.inner_child = _grow(self.inner_child, cap)
            self.inner_count = _grow(self.inner_count, cap)
        i = self.n_inner
        self.n_inner += 1
        self.inner_count[i] = 0
        return i

    # --------------------------------------------------------------- search
    def _descend(self, key: tuple, path: list | None = None) -> int:
        node = self.root
        for _ in range(self.height):
            self.node_visits += 1
            cnt = int(self.inner_count[node])
            pos = _search(self.inner_keys[node, :cnt], key, side="right")
            if path is not None:
                path.append((node, pos))
            node = int(self.inner_child[node, pos])
        self.node_visits += 1
        return node

    def _leaf_sorted(self, leaf: int) -> np.ndarray:
        cnt = int(self.leaf_count[leaf])
        return self.leaf_keys[leaf, self.leaf_slots[leaf, :cnt]]

    def contains(self, src: int, dst: int) -> bool:
        key = (int(src), int(dst))
        keys = self._leaf_sorted(self._descend(key))
        i = _search(keys, key)
        return i < len(keys) and tuple(int(x) for x in keys[i]) == key

    def scan(self, src: int):
        """Destinations of ``src`` in ascending order."""
        key = (int(src), -(1 << 63))
        leaf = self._descend(key)
        keys = self._leaf_sorted(leaf)
        i = _search(keys, key)
        while leaf >= 0:
            for s, d in keys[i:]:
                if int(s) != src:
                    return
                yield int(d)
            leaf = int(self.leaf_next[leaf])
            if leaf >= 0:
                self.node_visits += 1
                keys = self._leaf_sorted(leaf)
                i = 0

    def seek(self, src: int):
        for d in self.scan(src):
            return d
        return None

    # --------------------------------------------------------------- update
    def insert(self, src: int, dst: int) -> bool:
        """Insert the key; False if already present."""
        key = (int(src), int(dst))
        path: list = []
        leaf = self._descend(key, path)
        cnt = int(self.leaf_count[leaf])
        sorted_keys = self._leaf_sorted(leaf)
        pos = _search(sorted_keys, key)
        if pos < cnt and tuple(int(x) for x in sorted_keys[pos]) == key:
            return False
        self.size += 1
        if cnt < self.fanout:
            self._leaf_put(leaf, cnt, pos, key)
            return True
        # split: left keeps the lower half, both halves keep arrival order
        phys = [tuple(int(x) for x in k) for k in self.leaf_keys[leaf, :cnt]] + [key]
        order = sorted(range(cnt + 1), key=lambda j: phys[j])
        half = (cnt + 1) // 2
        low = set(order[:half])
        left = [phys[j] for j in range(cnt + 1) if j in low]
        right = [phys[j] for j in range(cnt + 1) if j not in low]
        new = self._new_leaf()
        self._fill_leaf(leaf, left)
        self._fill_leaf(new, right)
        self.leaf_next[new] = self.leaf_next[leaf]
        self.leaf_next[leaf] = new
        self._insert_parent(path, phys[order[half]], new)
        return True

    def _leaf_put(self, leaf, cnt, pos, key):
        self.leaf_keys[leaf, cnt] = key
        slots = self.leaf_slots[leaf]
        slots[pos + 1:cnt + 1] = slots[pos:cnt].copy()
        slots[pos] = cnt
        self.leaf_count[leaf] = cnt + 1

    def _fill_leaf(self, leaf, keys):
        n = len(keys)
        arr = np.asarray(keys, dtype=np.int64).reshape(n, 2)
        self.leaf_keys[leaf, :n] = arr
        self.leaf_slots[leaf, :n] = _key_order(arr)
        self.leaf_count[leaf] = n

    def _insert_parent(self, path, sep, right_child):
        while path:
            node, pos = path.pop()
            cnt = int(self.inner_count[node])
            keys = [tuple(int(x) for x in k) for k in self.inner_keys[node, :cnt]]
            kids = list(self.inner_child[node, :cnt + 1])
            keys.insert(pos, sep)
            kids.insert(pos + 1, right_child)
            if len(keys) <= self.fanout:
                self._fill_inner(node, keys, kids)
                return
            mid = len(keys) // 2
            new = self._new_inner()
            self._fill_inner(node, keys[:mid], kids[:mid + 1])
            self._fill_inner(new, keys[mid + 1:], kids[mid + 1:])
            sep, right_child = keys[mid], new
        root = self._new_inner()
        self._fill_inner(root, [sep], [self.root, right_child])
        self.root = root
        self.height += 1

    def _fill_inner(self, node, keys, kids):
        self.inner_keys[node, :len(keys)] = np.asarray(keys, dtype=np.int64).reshape(-1, 2)
        self.inner_child[node, :len(kids)] = kids
        self.inner_count[node] = len(keys)

    def delete(self, src: int, dst: int) -> bool:
        """Remove the key (leaves may underflow; no rebalancing)."""
        key = (int(src), int(dst))
        leaf = self._descend(key)
        cnt = int(self.leaf_count[leaf])
        slots = self.leaf_slots[leaf]
        keys = self.leaf_keys[leaf]
        sorted_keys = keys[slots[:cnt]]
        pos = _search(sorted_keys, key)
        if pos >= cnt or tuple(int(x) for x in sorted_keys[pos]) != key:
            return False
        phys = int(slots[pos])
        last = cnt - 1
        slots[pos:last] = slots[pos + 1:cnt].copy()
        if phys != last:
            keys[phys] = keys[last]
            slots[:last][slots[:last] == last] = phys
        self.leaf_count[leaf] = last
        self.size -= 1
        return True

    # ------------------------------------------------------------- bulk load
    @classmethod
    def bulk_load(cls, src: np.ndarray, dst: np.ndarray, fanout: int = 128,
                  fill: float = 0.7) -> "BPlusTree":
        """Build from edges given in arrival order (duplicates dropped)."""
        tree = cls(fanout)
        pairs = np.stack([np.asarray(src, dtype=np.int64),
                          np.asarray(dst, dtype=np.int64)], axis=1)
        keys, first = np.unique(pairs, axis=0, return_index=True)
        n = len(keys)
        per = max(2, int(fanout * fill))
        n_leaves = max(1, -(-n // per))
        tree.leaf_keys = np.zeros((n_leaves, fanout, 2), dtype=np.int64)
        tree.leaf_slots = np.zeros((n_leaves, fanout), dtype=np.int32)
        tree.leaf_count = np.zeros(n_leaves, dtype=np.int64)
        tree.leaf_next = np.arange(1, n_leaves + 1, dtype=np.int64)
        tree.leaf_next[-1] = -1
        tree.n_leaves = n_leaves
        for i in range(n_leaves):
            lo, hi = i * per, min(n, (i + 1) * per)
            chunk, arrival = keys[lo:hi], first[lo:hi]
            phys = np.argsort(arrival, kind="stable")
            tree.leaf_keys[i, :hi - lo] = chunk[phys]
            # slot j names the physical position of the j-th smallest key
            tree.leaf_slots[i, :hi - lo] = np.argsort(phys, kind="stable")
            tree.leaf_count[i] = hi - lo
        tree.size = n
        # inner levels, bottom up
        level = np.arange(n_leaves, dtype=np.int64)
        if n:
            low_keys = keys[np.minimum(np.arange(n_leaves) * per, n - 1)]
        else:
            low_keys = np.zeros((1, 2), dtype=np.int64)
        height = 0
        inner_keys, inner_child, inner_count = [], [], []
        while len(level) > 1:
            groups = -(-len(level) // per)
            next_level, next_low = [], []
            for g in range(groups):
                kids = level[g * per:(g + 1) * per]
                lows = low_keys[g * per:(g + 1) * per]
                row_k = np.zeros((fanout, 2), dtype=np.int64)
                row_c = np.zeros(fanout + 1, dtype=np.int64)
                row_k[:len(kids) - 1] = lows[1:]
                row_c[:len(kids)] = kids
                inner_keys.append(row_k)
                inner_child.append(row_c)
                inner_count.append(len(kids) - 1)
                next_level.append(len(inner_keys) - 1)
                next_low.append(lows[0])
            level = np.asarray(next_level, dtype=np.int64)
            low_keys = np.asarray(next_low, dtype=np.int64).reshape(-1, 2)
            height += 1
        if inner_keys:
            tree.inner_keys = np.stack(inner_keys)
            tree.inner_child = np.vstack(inner_child)
            tree.inner_count = np.asarray(inner_count, dtype=np.int64)
            tree.n_inner = len(inner_keys)
            tree.root = int(level[0])
        tree.height = height
        return tree

    # ---------------------------------------------------- compiled access paths
    def _arrays(self):
        return (self.inner_keys, self.inner_child, self.inner_count, self.root,
                self.height, self.leaf_keys, self.leaf_slots, self.leaf_count,
                self.leaf_next)

    def seek_many(self, starts: np.ndarray) -> int:
        return int(kernels.btree_seek(*self._arrays(), starts))

    def scan_many(self, starts: np.ndarray) -> tuple[int, int]:
        acc, edges = kernels.btree_scan(*self._arrays(), starts)
        return int(acc), int(edges)

    def locate_many(self, starts: np.ndarray):
        return kernels.btree_locate(*self._arrays(), starts) + (starts,)

    def scan_from(self, cursors) -> tuple[int, int]:
        acc, edges = kernels.btree_scan_from(self.leaf_keys, self.leaf_slots, self.leaf_count,
                                             self.leaf_next, *cursors)
        return int(acc), int(edges)


def _grow(arr: np.ndarray, cap: int, fill=0) -> np.ndarray:
    shape = (cap,) + arr.shape[1:]
    out = np.full(shape, fill, dtype=arr.dtype)
    out[:arr.shape[0]] = arr
    return out
