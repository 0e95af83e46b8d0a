# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every routine fixes its floating-point reduction order so that results are
bitwise identical to the numpy implementations in ``_fallback``: each output
entry is accumulated sequentially, starting from zero, in the order given by
the caller (ascending neighbor / row / feature index).
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()

ctypedef cnp.int64_t idx_t


def spmm_rows(const idx_t[::1] indptr, const idx_t[::1] indices,
              const floating[::1] data, const floating[:, ::1] M,
              const idx_t[::1] rows):
    cdef Py_ssize_t nr = rows.shape[0], d = M.shape[1]
    cdef Py_ssize_t i, j, k, r
    cdef floating w
    dtype = np.float64 if floating is double else np.float32
    out = np.zeros((nr, d), dtype=dtype)
    cdef floating[:, ::1] o = out
    with nogil:
        for i in range(nr):
            r = rows[i]
            for j in range(indptr[r], indptr[r + 1]):
                w = data[j]
                for k in range(d):
                    o[i, k] += w * M[indices[j], k]
    return out


def outer_blocks(const floating[:, ::1] A, const floating[:, ::1] B,
                 const idx_t[::1] ptr, const idx_t[::1] rows):
    """Per-block sums of outer products ``a_r b_r^T`` over the rows of each block."""
    cdef Py_ssize_t nb = ptr.shape[0] - 1, p = A.shape[1], q = B.shape[1]
    cdef Py_ssize_t blk, t, r, i, j
    cdef floating ai
    dtype = np.float64 if floating is double else np.float32
    out = np.zeros((nb, p, q), dtype=dtype)
    cdef floating[:, :, ::1] o = out
    with nogil:
        for blk in range(nb):
            for t in range(ptr[blk], ptr[blk + 1]):
                r = rows[t]
                for i in range(p):
                    ai = A[r, i]
                    for j in range(q):
                        o[blk, i, j] += ai * B[r, j]
    return out


def sqdist(const double[:, ::1] A, const double[:, ::1] B):
    cdef Py_ssize_t m = A.shape[0], p = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    out = np.empty((m, p), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            for j in range(p):
                acc = 0.0
                for k in range(d):
                    diff = A[i, k] - B[j, k]
                    acc += diff * diff
                o[i, j] = acc
    return out


def matmul_seq(const double[:, ::1] A, const double[:, ::1] B):
    cdef Py_ssize_t m = A.shape[0], d = A.shape[1], q = B.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double a
    out = np.zeros((m, q), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            for k in range(d):
                a = A[i, k]
                for j in range(q):
                    o[i, j] += a * B[k, j]
    return out


def rowdot(const double[:, ::1] A, const double[:, ::1] B):
    cdef Py_ssize_t m = A.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, k
    out = np.zeros(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            for k in range(d):
                o[i] += A[i, k] * B[i, k]
    return out


def bfs_levels(const idx_t[::1] indptr, const idx_t[::1] indices,
               const idx_t[::1] seeds, Py_ssize_t n, Py_ssize_t depth):
    """Hop distance from the seed set, -1 beyond ``depth``."""
    dist_arr = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] dist = dist_arr
    queue_arr = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] queue = queue_arr
    cdef Py_ssize_t head = 0, tail = 0, i, j, u, v
    with nogil:
        for i in range(seeds.shape[0]):
            u = seeds[i]
            if dist[u] < 0:
                dist[u] = 0
                queue[tail] = u
                tail += 1
        while head < tail:
            u = queue[head]
            head += 1
            if dist[u] >= depth:
                continue
            for j in range(indptr[u], indptr[u + 1]):
                v = indices[j]
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue[tail] = v
                    tail += 1
    return dist_arr
