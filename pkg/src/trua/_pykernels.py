"""Pure-Python hot kernels.

This module mirrors ``_kernels.pyx`` operation for operation so that both
backends produce bit-identical results for the same seed.  It is used when the
compiled extension is not available.
"""

from __future__ import annotations

import math
from bisect import bisect_left

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / 9007199254740992.0


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def failure_trials(starts, ends, sample_times, lo, hi, lease, rs, seeds, reps):
    """Monte-Carlo replica trials for one age interval ``(lo, hi]``.

    For every sample time ``t`` the candidates are pilots alive at ``t``
    (``end > t``) whose age ``t - start`` lies in ``(lo, hi]``.  For each
    redundancy ``rs[j]`` and each repetition, ``rs[j]`` distinct candidates
    are drawn; the trial fails when all of them end before ``t + lease``.

    ``starts`` must be sorted ascending with ``ends`` aligned to it.  Returns
    ``(failed, trials)`` as int64 arrays aligned with ``rs``.
    """
    starts_l = [int(s) for s in starts]
    ends_l = [int(e) for e in ends]
    rs_l = [int(r) for r in rs]
    states = [int(s) & _MASK for s in seeds]
    failed = [0] * len(rs_l)
    trials = [0] * len(rs_l)
    lo = int(lo)
    hi = int(hi)
    lease = int(lease)
    reps = int(reps)
    for t in sample_times:
        t = int(t)
        a = bisect_left(starts_l, t - hi)
        b = bisect_left(starts_l, t - lo)
        cand = [e for e in ends_l[a:b] if e > t]
        n = len(cand)
        deadline = t + lease
        for j, r in enumerate(rs_l):
            if n < r:
                continue
            buf = list(cand)
            state = states[j]
            for _ in range(reps):
                all_fail = True
                for k in range(r):
                    state, z = splitmix64(state)
                    pick = k + int((z >> 11) * _INV_2_53 * (n - k))
                    buf[k], buf[pick] = buf[pick], buf[k]
                    if buf[k] >= deadline:
                        all_fail = False
                        break
                trials[j] += 1
                if all_fail:
                    failed[j] += 1
            states[j] = state
    return np.asarray(failed, dtype=np.int64), np.asarray(trials, dtype=np.int64)


class RCTree:
    """Array-backed robust random cut tree over a sliding window of points.

    Nodes live in flat arrays; a node is a leaf when ``left[node] == -1``.
    Leaves store duplicates as a multiplicity in ``count``.
    """

    def __init__(self, ndim: int, capacity: int, seed: int):
        if ndim < 1 or capacity < 1:
            raise ValueError("ndim and capacity must be positive")
        self.ndim = ndim
        self.capacity = capacity
        size = 2 * capacity
        self._parent = [-1] * size
        self._left = [-1] * size
        self._right = [-1] * size
        self._cut_dim = [0] * size
        self._cut_val = [0.0] * size
        self._count = [0] * size
        self._lo = [0.0] * (size * ndim)
        self._hi = [0.0] * (size * ndim)
        self._free = list(range(size - 1, -1, -1))
        self._leaf_of: dict[int, int] = {}
        self._state = int(seed) & _MASK
        self.root = -1
        self.size = 0

    # -- helpers -------------------------------------------------------------

    def _alloc(self) -> int:
        if not self._free:
            raise RuntimeError("tree node pool exhausted")
        node = self._free.pop()
        self._parent[node] = -1
        self._left[node] = -1
        self._right[node] = -1
        return node

    def _uniform(self) -> float:
        self._state, z = splitmix64(self._state)
        return (z >> 11) * _INV_2_53

    def _new_leaf(self, point) -> int:
        node = self._alloc()
        d = self.ndim
        base = node * d
        for k in range(d):
            self._lo[base + k] = point[k]
            self._hi[base + k] = point[k]
        self._count[node] = 1
        return node

    def _refit(self, node: int) -> None:
        d = self.ndim
        lo, hi = self._lo, self._hi
        base = node * d
        lb = self._left[node] * d
        rb = self._right[node] * d
        for k in range(d):
            lo[base + k] = min(lo[lb + k], lo[rb + k])
            hi[base + k] = max(hi[lb + k], hi[rb + k])

    # -- public API ----------------------------------------------------------

    def __len__(self) -> int:
        return self.size

    def __contains__(self, index: int) -> bool:
        return index in self._leaf_of

    def insert(self, index: int, point) -> int:
        """Insert ``point`` under key ``index``; return its leaf node id."""
        if index in self._leaf_of:
            raise KeyError(f"index {index} already in tree")
        point = [float(x) for x in point]
        if len(point) != self.ndim:
            raise ValueError(f"expected {self.ndim} dimensions, got {len(point)}")
        for x in point:
            if not math.isfinite(x):
                raise ValueError("point has non-finite coordinates")
        if self.size >= self.capacity:
            raise RuntimeError("tree is full; forget a point first")
        d = self.ndim
        lo, hi = self._lo, self._hi
        if self.root == -1:
            leaf = self._new_leaf(point)
            self.root = leaf
            self._leaf_of[index] = leaf
            self.size += 1
            return leaf

        # duplicate: route by existing cuts down to the only possible match
        node = self.root
        while self._left[node] != -1:
            if point[self._cut_dim[node]] <= self._cut_val[node]:
                node = self._left[node]
            else:
                node = self._right[node]
        base = node * d
        if all(lo[base + k] == point[k] for k in range(d)):
            up = node
            while up != -1:
                self._count[up] += 1
                up = self._parent[up]
            self._leaf_of[index] = node
            self.size += 1
            return node

        node = self.root
        parent = -1
        while True:
            base = node * d
            total = 0.0
            for k in range(d):
                total += max(hi[base + k], point[k]) - min(lo[base + k], point[k])
            r = (1.0 - self._uniform()) * total
            cum = 0.0
            dim = d - 1
            for k in range(d):
                cum += max(hi[base + k], point[k]) - min(lo[base + k], point[k])
                if cum >= r:
                    dim = k
                    break
            lo_hat = min(lo[base + dim], point[dim])
            hi_hat = max(hi[base + dim], point[dim])
            cut = lo_hat + cum - r
            if cut >= hi_hat:
                cut = math.nextafter(hi_hat, -math.inf)
            if cut < lo_hat:
                cut = lo_hat
            if cut < lo[base + dim]:
                leaf = self._new_leaf(point)
                left, right = leaf, node
                break
            if cut >= hi[base + dim]:
                leaf = self._new_leaf(point)
                left, right = node, leaf
                break
            parent = node
            if point[self._cut_dim[node]] <= self._cut_val[node]:
                node = self._left[node]
            else:
                node = self._right[node]

        branch = self._alloc()
        self._cut_dim[branch] = dim
        self._cut_val[branch] = cut
        self._left[branch] = left
        self._right[branch] = right
        self._parent[left] = branch
        self._parent[right] = branch
        self._count[branch] = self._count[node] + 1
        self._parent[branch] = parent
        self._refit(branch)
        if parent == -1:
            self.root = branch
        elif self._left[parent] == node:
            self._left[parent] = branch
        else:
            self._right[parent] = branch
        up = parent
        while up != -1:
            self._count[up] += 1
            ub = up * d
            for k in range(d):
                if point[k] < lo[ub + k]:
                    lo[ub + k] = point[k]
                if point[k] > hi[ub + k]:
                    hi[ub + k] = point[k]
            up = self._parent[up]
        self._leaf_of[index] = leaf
        self.size += 1
        return leaf

    def forget(self, index: int) -> None:
        leaf = self._leaf_of.pop(index)
        self.size -= 1
        if self._count[leaf] > 1:
            up = leaf
            while up != -1:
                self._count[up] -= 1
                up = self._parent[up]
            return
        if leaf == self.root:
            self.root = -1
            self._free.append(leaf)
            return
        parent = self._parent[leaf]
        sibling = self._right[parent] if self._left[parent] == leaf else self._left[parent]
        grand = self._parent[parent]
        self._parent[sibling] = grand
        if grand == -1:
            self.root = sibling
        elif self._left[grand] == parent:
            self._left[grand] = sibling
        else:
            self._right[grand] = sibling
        self._free.append(leaf)
        self._free.append(parent)
        up = grand
        while up != -1:
            self._count[up] -= 1
            self._refit(up)
            up = self._parent[up]

    def codisp(self, index: int) -> float:
        """Collusive displacement of the leaf holding ``index``."""
        node = self._leaf_of[index]
        best = 0.0
        while self._parent[node] != -1:
            parent = self._parent[node]
            sibling = self._right[parent] if self._left[parent] == node else self._left[parent]
            disp = self._count[sibling] / self._count[node]
            if disp > best:
                best = disp
            node = parent
        return best

    def export(self) -> dict:
        """Snapshot of the live node arrays, for invariant checks."""
        size = 2 * self.capacity
        d = self.ndim
        return {
            "root": self.root,
            "parent": np.asarray(self._parent, dtype=np.int64),
            "left": np.asarray(self._left, dtype=np.int64),
            "right": np.asarray(self._right, dtype=np.int64),
            "cut_dim": np.asarray(self._cut_dim, dtype=np.int64),
            "cut_val": np.asarray(self._cut_val, dtype=np.float64),
            "count": np.asarray(self._count, dtype=np.int64),
            "lo": np.asarray(self._lo, dtype=np.float64).reshape(size, d),
            "hi": np.asarray(self._hi, dtype=np.float64).reshape(size, d),
            "leaf_of": dict(self._leaf_of),
        }
