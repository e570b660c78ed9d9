# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; keep in lockstep with ``_pykernels.py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite, nextafter, INFINITY
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()

cdef double _INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _splitmix_next(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline Py_ssize_t _bisect_left(const int64_t[:] a, int64_t x) noexcept nogil:
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = a.shape[0]
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def splitmix64(state):
    cdef uint64_t s = <uint64_t>(int(state) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t z = _splitmix_next(&s)
    return int(s), int(z)


def failure_trials(starts, ends, sample_times, lo, hi, lease, rs, seeds, reps):
    cdef const int64_t[:] st = np.ascontiguousarray(starts, dtype=np.int64)
    cdef const int64_t[:] en = np.ascontiguousarray(ends, dtype=np.int64)
    cdef const int64_t[:] ts = np.ascontiguousarray(sample_times, dtype=np.int64)
    cdef const int64_t[:] rr = np.ascontiguousarray(rs, dtype=np.int64)
    cdef Py_ssize_t nr = rr.shape[0]
    cdef uint64_t[:] states = np.array([int(s) & 0xFFFFFFFFFFFFFFFF for s in seeds],
                                       dtype=np.uint64).reshape(-1)
    failed_arr = np.zeros(nr, dtype=np.int64)
    trials_arr = np.zeros(nr, dtype=np.int64)
    cdef int64_t[:] failed = failed_arr
    cdef int64_t[:] trials = trials_arr
    cdef int64_t[:] cand = np.empty(max(st.shape[0], 1), dtype=np.int64)
    cdef int64_t[:] buf = np.empty(max(st.shape[0], 1), dtype=np.int64)
    cdef int64_t c_lo = lo, c_hi = hi, c_lease = lease
    cdef Py_ssize_t c_reps = reps
    cdef Py_ssize_t ti, i, a, b, n, j, k, rep, pick, r
    cdef int64_t t, deadline, tmp
    cdef uint64_t z
    cdef bint all_fail
    with nogil:
        for ti in range(ts.shape[0]):
            t = ts[ti]
            a = _bisect_left(st, t - c_hi)
            b = _bisect_left(st, t - c_lo)
            n = 0
            for i in range(a, b):
                if en[i] > t:
                    cand[n] = en[i]
                    n += 1
            deadline = t + c_lease
            for j in range(nr):
                r = rr[j]
                if n < r:
                    continue
                # each redundancy shuffles its own copy so its draws do not
                # depend on which other redundancies were requested
                for i in range(n):
                    buf[i] = cand[i]
                for rep in range(c_reps):
                    all_fail = True
                    for k in range(r):
                        z = _splitmix_next(&states[j])
                        pick = k + <Py_ssize_t>((z >> 11) * _INV_2_53 * (n - k))
                        tmp = buf[k]
                        buf[k] = buf[pick]
                        buf[pick] = tmp
                        if buf[k] >= deadline:
                            all_fail = False
                            break
                    trials[j] += 1
                    if all_fail:
                        failed[j] += 1
    return failed_arr, trials_arr


cdef class RCTree:
    """Array-backed robust random cut tree (compiled twin of the Python class)."""

    cdef public int ndim
    cdef public int capacity
    cdef public Py_ssize_t root
    cdef public Py_ssize_t size
    cdef Py_ssize_t[:] _parent
    cdef Py_ssize_t[:] _left
    cdef Py_ssize_t[:] _right
    cdef Py_ssize_t[:] _cut_dim
    cdef double[:] _cut_val
    cdef int64_t[:] _count
    cdef double[:, :] _lo
    cdef double[:, :] _hi
    cdef Py_ssize_t[:] _free
    cdef Py_ssize_t _nfree
    cdef dict _leaf_of
    cdef uint64_t _state
    cdef double[:] _point

    def __init__(self, int ndim, int capacity, seed):
        if ndim < 1 or capacity < 1:
            raise ValueError("ndim and capacity must be positive")
        self.ndim = ndim
        self.capacity = capacity
        size = 2 * capacity
        self._parent = np.full(size, -1, dtype=np.intp)
        self._left = np.full(size, -1, dtype=np.intp)
        self._right = np.full(size, -1, dtype=np.intp)
        self._cut_dim = np.zeros(size, dtype=np.intp)
        self._cut_val = np.zeros(size, dtype=np.float64)
        self._count = np.zeros(size, dtype=np.int64)
        self._lo = np.zeros((size, ndim), dtype=np.float64)
        self._hi = np.zeros((size, ndim), dtype=np.float64)
        # same pop order as the Python free list: node 0 first
        self._free = np.arange(size - 1, -1, -1, dtype=np.intp)
        self._nfree = size
        self._leaf_of = {}
        self._state = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._point = np.zeros(ndim, dtype=np.float64)
        self.root = -1
        self.size = 0

    cdef Py_ssize_t _alloc(self) except -1:
        cdef Py_ssize_t node
        if self._nfree == 0:
            raise RuntimeError("tree node pool exhausted")
        self._nfree -= 1
        node = self._free[self._nfree]
        self._parent[node] = -1
        self._left[node] = -1
        self._right[node] = -1
        return node

    cdef inline void _release(self, Py_ssize_t node) noexcept:
        self._free[self._nfree] = node
        self._nfree += 1

    cdef Py_ssize_t _new_leaf(self) except -1:
        cdef Py_ssize_t node = self._alloc()
        cdef Py_ssize_t k
        for k in range(self.ndim):
            self._lo[node, k] = self._point[k]
            self._hi[node, k] = self._point[k]
        self._count[node] = 1
        return node

    cdef void _refit(self, Py_ssize_t node) noexcept:
        cdef Py_ssize_t k
        cdef Py_ssize_t l = self._left[node]
        cdef Py_ssize_t r = self._right[node]
        for k in range(self.ndim):
            self._lo[node, k] = min(self._lo[l, k], self._lo[r, k])
            self._hi[node, k] = max(self._hi[l, k], self._hi[r, k])

    def __len__(self):
        return self.size

    def __contains__(self, index):
        return index in self._leaf_of

    def insert(self, index, point):
        if index in self._leaf_of:
            raise KeyError(f"index {index} already in tree")
        vals = [float(x) for x in point]
        if len(vals) != self.ndim:
            raise ValueError(f"expected {self.ndim} dimensions, got {len(vals)}")
        cdef Py_ssize_t k
        for k in range(self.ndim):
            if not isfinite(vals[k]):
                raise ValueError("point has non-finite coordinates")
            self._point[k] = vals[k]
        if self.size >= self.capacity:
            raise RuntimeError("tree is full; forget a point first")
        cdef Py_ssize_t leaf = self._insert()
        self._leaf_of[index] = leaf
        self.size += 1
        return leaf

    cdef Py_ssize_t _insert(self) except -1:
        cdef Py_ssize_t d = self.ndim
        cdef double[:] p = self._point
        cdef Py_ssize_t node, parent, up, leaf, left, right, branch, dim, k
        cdef double total, r, cum, cut, lo_hat, hi_hat, span
        cdef bint same
        cdef uint64_t z
        if self.root == -1:
            leaf = self._new_leaf()
            self.root = leaf
            return leaf

        node = self.root
        while self._left[node] != -1:
            if p[self._cut_dim[node]] <= self._cut_val[node]:
                node = self._left[node]
            else:
                node = self._right[node]
        same = True
        for k in range(d):
            if self._lo[node, k] != p[k]:
                same = False
                break
        if same:
            up = node
            while up != -1:
                self._count[up] += 1
                up = self._parent[up]
            return node

        node = self.root
        parent = -1
        while True:
            total = 0.0
            for k in range(d):
                total += max(self._hi[node, k], p[k]) - min(self._lo[node, k], p[k])
            z = _splitmix_next(&self._state)
            r = (1.0 - (z >> 11) * _INV_2_53) * total
            cum = 0.0
            dim = d - 1
            for k in range(d):
                cum += max(self._hi[node, k], p[k]) - min(self._lo[node, k], p[k])
                if cum >= r:
                    dim = k
                    break
            lo_hat = min(self._lo[node, dim], p[dim])
            hi_hat = max(self._hi[node, dim], p[dim])
            cut = lo_hat + cum - r
            if cut >= hi_hat:
                cut = nextafter(hi_hat, -INFINITY)
            if cut < lo_hat:
                cut = lo_hat
            if cut < self._lo[node, dim]:
                leaf = self._new_leaf()
                left = leaf
                right = node
                break
            if cut >= self._hi[node, dim]:
                leaf = self._new_leaf()
                left = node
                right = leaf
                break
            parent = node
            if p[self._cut_dim[node]] <= self._cut_val[node]:
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
            for k in range(d):
                if p[k] < self._lo[up, k]:
                    self._lo[up, k] = p[k]
                if p[k] > self._hi[up, k]:
                    self._hi[up, k] = p[k]
            up = self._parent[up]
        return leaf

    def forget(self, index):
        cdef Py_ssize_t leaf = self._leaf_of.pop(index)
        cdef Py_ssize_t up, parent, sibling, grand
        self.size -= 1
        if self._count[leaf] > 1:
            up = leaf
            while up != -1:
                self._count[up] -= 1
                up = self._parent[up]
            return
        if leaf == self.root:
            self.root = -1
            self._release(leaf)
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
        self._release(leaf)
        self._release(parent)
        up = grand
        while up != -1:
            self._count[up] -= 1
            self._refit(up)
            up = self._parent[up]

    def codisp(self, index):
        cdef Py_ssize_t node = self._leaf_of[index]
        cdef Py_ssize_t parent, sibling
        cdef double best = 0.0, disp
        while self._parent[node] != -1:
            parent = self._parent[node]
            sibling = self._right[parent] if self._left[parent] == node else self._left[parent]
            disp = <double>self._count[sibling] / <double>self._count[node]
            if disp > best:
                best = disp
            node = parent
        return best

    def export(self):
        return {
            "root": self.root,
            "parent": np.asarray(self._parent, dtype=np.int64),
            "left": np.asarray(self._left, dtype=np.int64),
            "right": np.asarray(self._right, dtype=np.int64),
            "cut_dim": np.asarray(self._cut_dim, dtype=np.int64),
            "cut_val": np.asarray(self._cut_val, dtype=np.float64).copy(),
            "count": np.asarray(self._count, dtype=np.int64),
            "lo": np.asarray(self._lo, dtype=np.float64).copy(),
            "hi": np.asarray(self._hi, dtype=np.float64).copy(),
            "leaf_of": dict(self._leaf_of),
        }
