"""Pure-numpy versions of the compiled kernels.

Each function vectorizes across independent outputs and loops over the
reduction index, so every output entry sees the same sequence of
multiply-then-add operations as the compiled loop.
"""

import numpy as np


def _slots(indptr, rows):
    start = indptr[rows]
    count = indptr[rows + 1] - start
    return start, count


def spmm_rows(indptr, indices, data, M, rows):
    start, count = _slots(indptr, rows)
    out = np.zeros((len(rows), M.shape[1]), dtype=M.dtype)
    if len(rows) == 0:
        return out
    for k in range(int(count.max(initial=0))):
        sel = np.flatnonzero(count > k)
        pos = start[sel] + k
        out[sel] += data[pos, None] * M[indices[pos]]
    return out


def outer_blocks(A, B, ptr, rows):
    nb = len(ptr) - 1
    out = np.zeros((nb, A.shape[1], B.shape[1]), dtype=A.dtype)
    start, count = ptr[:-1], np.diff(ptr)
    for k in range(int(count.max(initial=0))):
        sel = np.flatnonzero(count > k)
        r = rows[start[sel] + k]
        out[sel] += A[r][:, :, None] * B[r][:, None, :]
    return out


def sqdist(A, B):
    out = np.zeros((A.shape[0], B.shape[0]), dtype=np.float64)
    for k in range(A.shape[1]):
        diff = A[:, k, None] - B[None, :, k]
        out += diff * diff
    return out


def matmul_seq(A, B):
    out = np.zeros((A.shape[0], B.shape[1]), dtype=np.float64)
    for k in range(A.shape[1]):
        out += A[:, k, None] * B[k]
    return out


def rowdot(A, B):
    out = np.zeros(A.shape[0], dtype=np.float64)
    for k in range(A.shape[1]):
        out += A[:, k] * B[:, k]
    return out


def bfs_levels(indptr, indices, seeds, n, depth):
    dist = np.full(n, -1, dtype=np.int64)
    frontier = np.unique(seeds)
    dist[frontier] = 0
    level = 0
    while level < depth and len(frontier):
        start, count = _slots(indptr, frontier)
        if count.sum() == 0:
            break
        offs = np.repeat(start - np.concatenate(([0], np.cumsum(count)[:-1])), count)
        nbrs = indices[np.arange(count.sum()) + offs]
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] < 0]
        level += 1
        dist[nbrs] = level
        frontier = nbrs
    return dist
