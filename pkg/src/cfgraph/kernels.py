"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``CFGRAPH_PURE_PYTHON=1`` to force the fallback. Both backends produce
bitwise-identical results (see ``tests/test_kernels.py``).
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("CFGRAPH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f(a, dtype=None):
    return np.ascontiguousarray(a, dtype=dtype or np.float64)


def spmm_rows(indptr, indices, data, M, rows, impl=None):
    """Rows ``rows`` of the sparse-dense product, accumulated in CSR order."""
    impl = impl or _impl
    M = np.ascontiguousarray(M)
    if M.dtype not in (np.float32, np.float64):
        M = M.astype(np.float64)
    return impl.spmm_rows(_i64(indptr), _i64(indices), _f(data, M.dtype), M, _i64(rows))


def outer_blocks(A, B, ptr, rows, impl=None):
    """For each block ``b``: sum over its rows ``r`` (in order) of ``outer(A[r], B[r])``."""
    impl = impl or _impl
    A = np.ascontiguousarray(A)
    B = np.ascontiguousarray(B, dtype=A.dtype)
    return impl.outer_blocks(A, B, _i64(ptr), _i64(rows))


def sqdist(A, B, impl=None):
    impl = impl or _impl
    return impl.sqdist(_f(A), _f(B))


def matmul_seq(A, B, impl=None):
    """Dense product with a fixed per-entry summation order (row-subset stable)."""
    impl = impl or _impl
    return impl.matmul_seq(_f(A), _f(B))


def rowdot(A, B, impl=None):
    impl = impl or _impl
    return impl.rowdot(_f(A), _f(B))


def bfs_levels(indptr, indices, seeds, n, depth, impl=None):
    impl = impl or _impl
    return impl.bfs_levels(_i64(indptr), _i64(indices), _i64(seeds), int(n), int(depth))
