"""Compiled vs numpy kernels: wall clock and bitwise agreement.

    python benchmarks/bench_kernels.py [--n 20000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from cfgraph import _fallback, kernels
from cfgraph.data import SbmSpec, generate_sbm


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n, seed):
    rng = np.random.default_rng(seed)
    g = generate_sbm(SbmSpec(n=n, num_classes=4, p_in=8.0 / n, p_out=1.0 / n, seed=seed)).graph
    M = rng.standard_normal((n, 32))
    rows = np.arange(n, dtype=np.int64)
    Y = rng.standard_normal((n, 4))
    ptr = np.linspace(0, n, 65).astype(np.int64)
    A = rng.standard_normal((1000, 64))
    B = rng.standard_normal((800, 64))
    W = rng.standard_normal((800, 4))
    yield "spmm_rows", lambda k: k.spmm_rows(g.prop_indptr, g.prop_indices, g.prop_data, M, rows)
    yield "outer_blocks", lambda k: k.outer_blocks(M, Y, ptr, rows)
    yield "sqdist", lambda k: k.sqdist(A, B)
    yield "matmul_seq", lambda k: k.matmul_seq(A @ B.T, W)
    yield "rowdot", lambda k: k.rowdot(M, M)
    seeds = np.arange(0, n, max(n // 50, 1), dtype=np.int64)
    yield "bfs_levels", lambda k: k.bfs_levels(g.indptr, g.indices, seeds, n, 3)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if kernels.BACKEND != "cython":
        print("compiled extension not available; only the numpy backend can be timed")
    compiled = kernels._impl
    print(f"{'kernel':<14}{'cython s':>12}{'numpy s':>12}{'ratio':>9}  bitwise")
    for name, call in cases(args.n, args.seed):
        tc, oc = best_of(lambda: call(_Bound(compiled)), args.repeats)
        tp, op = best_of(lambda: call(_Bound(_fallback)), args.repeats)
        print(f"{name:<14}{tc:>12.5f}{tp:>12.5f}{tp / tc:>9.1f}  {np.array_equal(oc, op)}")


class _Bound:
    """Calls the public wrappers with a fixed backend."""

    def __init__(self, impl):
        self.impl = impl

    def __getattr__(self, name):
        fn = getattr(kernels, name)
        return lambda *a: fn(*a, impl=self.impl)


if __name__ == "__main__":
    main()
