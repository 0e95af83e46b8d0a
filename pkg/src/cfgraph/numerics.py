"""Dense linear algebra for the closed-form solvers.

Ridge problems are solved through their normal equations with a Cholesky
factorization of G + alpha*I, where G = H_tr^T H_tr and b = H_tr^T Y_tr are
kept as sufficient statistics. :class:`GramTree` stores those statistics as
a fixed binary reduction tree over blocks of node ids, which lets a local
update reproduce a fresh assembly bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .errors import NotPositiveDefinite, ValidationError, WidthMismatch

DEFAULT_CHUNK = 2048
TREE_BUDGET_BYTES = 64 * 2**20
MIN_LEAF = 4


@dataclass
class RidgeStats:
    """Normal-equation sufficient statistics G = H^T H, b = H^T Y."""

    G: np.ndarray
    b: np.ndarray
    alpha: float

    @property
    def D(self):
        return self.G.shape[0]

    @property
    def C(self):
        return self.b.shape[1]

    def copy(self):
        return RidgeStats(self.G.copy(), self.b.copy(), self.alpha)


def _check_alpha(alpha):
    if not alpha > 0:
        raise ValidationError(f"regularizer must be > 0, got {alpha}")


def cholesky(M):
    try:
        return scipy.linalg.cho_factor(M, lower=False, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def shifted(G, alpha):
    M = np.array(G, copy=True)
    M[np.diag_indices_from(M)] += alpha
    return M


def solve_stats(stats: RidgeStats, factor=None):
    """W = (G + alpha I)^{-1} b. Pass ``factor`` to reuse a Cholesky factor."""
    _check_alpha(stats.alpha)
    if factor is None:
        factor = cholesky(shifted(stats.G, stats.alpha))
    return scipy.linalg.cho_solve(factor, stats.b, check_finite=False)


def assemble_stats(H_tr, Y_tr, alpha):
    """G and b accumulated row by row in the given order."""
    H_tr = np.atleast_2d(np.asarray(H_tr))
    Y_tr = np.asarray(Y_tr, dtype=H_tr.dtype)
    if Y_tr.ndim == 1:
        Y_tr = Y_tr[:, None]
    if len(H_tr) != len(Y_tr):
        raise WidthMismatch("H_tr and Y_tr row counts differ")
    ptr = np.array([0, len(H_tr)])
    rows = np.arange(len(H_tr))
    G = kernels.outer_blocks(H_tr, H_tr, ptr, rows)[0]
    b = kernels.outer_blocks(H_tr, Y_tr, ptr, rows)[0]
    return RidgeStats(G, b, float(alpha))


def ridge_solve(H_tr, Y_tr, alpha):
    """Returns (W, stats) with W = argmin ||H_tr W - Y_tr||^2 + alpha ||W||^2."""
    _check_alpha(alpha)
    if len(H_tr) < 1:
        raise ValidationError("ridge_solve needs at least one training row")
    stats = assemble_stats(H_tr, Y_tr, alpha)
    return solve_stats(stats), stats


def gram_downdate(stats: RidgeStats, H_old, Y_old, H_new=None, Y_new=None):
    """Rank-bounded refresh G <- G - H_old^T H_old + H_new^T H_new (b likewise).

    Row i of the ``old`` arrays is replaced by row i of the ``new`` arrays;
    pass fewer (or no) new rows for rows leaving the training set, i.e. the
    trailing old rows get no replacement. Old/new pairs that are bitwise
    equal are skipped, so an identity update leaves ``stats`` untouched.
    """
    D, C = stats.D, stats.C
    H_old = np.asarray(H_old, dtype=stats.G.dtype).reshape(-1, D) if np.size(H_old) else np.zeros((0, D))
    Y_old = np.asarray(Y_old, dtype=stats.G.dtype).reshape(len(H_old), -1) if len(H_old) else np.zeros((0, C))
    if H_new is None or np.size(H_new) == 0:
        H_new, Y_new = np.zeros((0, D)), np.zeros((0, C))
    H_new = np.asarray(H_new, dtype=stats.G.dtype)
    Y_new = np.asarray(Y_new, dtype=stats.G.dtype)
    Y_new = Y_new.reshape(len(H_new), -1) if len(H_new) else np.zeros((0, C))
    if H_new.ndim != 2 or H_new.shape[1] != D or H_old.shape[1] != D:
        raise WidthMismatch(f"rows must have width {D}")
    if Y_old.shape[1] != C or Y_new.shape[1] != C:
        raise WidthMismatch(f"label rows must have width {C}")
    if len(H_new) > len(H_old):
        raise ValidationError("more replacement rows than removed rows")

    k = len(H_new)
    same = np.all(H_old[:k] == H_new, axis=1) & np.all(Y_old[:k] == Y_new, axis=1)
    keep_old = np.concatenate([~same, np.ones(len(H_old) - k, dtype=bool)])
    H_old, Y_old = H_old[keep_old], Y_old[keep_old]
    H_new, Y_new = H_new[~same], Y_new[~same]
    if not len(H_old) and not len(H_new):
        return stats.copy()

    G = stats.G - H_old.T @ H_old + H_new.T @ H_new
    b = stats.b - H_old.T @ Y_old + H_new.T @ Y_new
    G = 0.5 * (G + G.T)
    return RidgeStats(G, b, stats.alpha)


def default_leaf_size(n, D, C, budget=TREE_BUDGET_BYTES, itemsize=8):
    """Smallest leaf size (>= MIN_LEAF ids) whose tree fits in ``budget``."""
    per_node = itemsize * D * (D + C)
    max_nodes = max(2, budget // max(per_node, 1))
    leaves = 1
    while 2 * (2 * leaves) <= max_nodes and leaves * MIN_LEAF < n:
        leaves *= 2
    return max(MIN_LEAF, -(-n // leaves))


class GramTree:
    """Sufficient statistics as a perfect binary reduction tree.

    Leaf ``l`` holds the sums of outer products over the training rows with
    ids in ``[l*leaf_size, (l+1)*leaf_size)``, accumulated in ascending id
    order; each internal node is ``left + right``. The root is (G, b). The
    shape depends only on (n, leaf_size), so recomputing a few leaves and
    their ancestors gives exactly the bits a fresh build would.

    Nodes are separate arrays that are replaced, never written in place, so
    :meth:`copy` is cheap and the original tree stays valid after an update.
    """

    def __init__(self, n, D, C, leaf_size, dtype=np.float64):
        self.n, self.D, self.C = int(n), int(D), int(C)
        self.leaf_size = int(leaf_size)
        nleaves = max(1, -(-self.n // self.leaf_size))
        P = 1
        while P < nleaves:
            P *= 2
        self.P = P
        self.dtype = np.dtype(dtype)
        self.G = [None] * (2 * P)
        self.b = [None] * (2 * P)
        self.leaf_rows_touched = 0

    @classmethod
    def build(cls, H, Y, train_mask, leaf_size, dtype=np.float64):
        H = np.ascontiguousarray(H, dtype=dtype)
        Y = np.ascontiguousarray(Y, dtype=dtype)
        tree = cls(H.shape[0], H.shape[1], Y.shape[1], leaf_size, dtype)
        tree._fill_leaves(np.arange(tree.P), H, Y, train_mask, gram=True)
        tree._reduce(np.arange(tree.P), gram=True)
        return tree

    def copy(self):
        out = GramTree.__new__(GramTree)
        out.__dict__.update(self.__dict__)
        out.G = list(self.G)
        out.b = list(self.b)
        out.leaf_rows_touched = 0
        return out

    def _leaf_members(self, leaves, train_mask):
        ls = self.leaf_size
        lo = np.minimum(leaves * ls, self.n)
        hi = np.minimum(lo + ls, self.n)
        span = hi - lo
        ids = np.repeat(lo, span) + (np.arange(span.sum()) - np.repeat(np.cumsum(span) - span, span))
        keep = np.asarray(train_mask, dtype=bool)[ids]
        owner = np.repeat(np.arange(len(leaves)), span)
        counts = np.bincount(owner[keep], minlength=len(leaves))
        ptr = np.zeros(len(leaves) + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return ptr, ids[keep]

    def _fill_leaves(self, leaves, H, Y, train_mask, gram):
        ptr, rows = self._leaf_members(leaves, train_mask)
        self.leaf_rows_touched += len(rows)
        if gram:
            for i, blk in zip(leaves, kernels.outer_blocks(H, H, ptr, rows)):
                self.G[self.P + i] = blk
        for i, blk in zip(leaves, kernels.outer_blocks(H, Y, ptr, rows)):
            self.b[self.P + i] = blk

    def _reduce(self, leaves, gram):
        nodes = np.unique((self.P + np.asarray(leaves)) // 2)
        arrays = (self.G, self.b) if gram else (self.b,)
        while len(nodes) and nodes[0] >= 1:
            for store in arrays:
                for i in nodes.tolist():
                    store[i] = store[2 * i] + store[2 * i + 1]
            if nodes[0] == 1:
                break
            nodes = np.unique(nodes // 2)

    def update(self, H, Y, train_mask, changed_ids, rhs_only=False):
        """Recompute the leaves holding ``changed_ids`` and their ancestors.

        ``H``/``Y``/``train_mask`` describe the modified data. With
        ``rhs_only`` the Gram side is left alone (labels changed, H did not).
        Returns the number of training rows re-accumulated.
        """
        changed_ids = np.asarray(changed_ids, dtype=np.int64)
        if not len(changed_ids):
            return 0
        H = np.ascontiguousarray(H, dtype=self.dtype)
        Y = np.ascontiguousarray(Y, dtype=self.dtype)
        before = self.leaf_rows_touched
        leaves = np.unique(changed_ids // self.leaf_size)
        self._fill_leaves(leaves, H, Y, train_mask, gram=not rhs_only)
        self._reduce(leaves, gram=not rhs_only)
        return self.leaf_rows_touched - before

    def stats(self, alpha):
        return RidgeStats(self.G[1].copy(), self.b[1].copy(), float(alpha))


def gaussian_kernel_blocks(A, B, sigma, chunk=DEFAULT_CHUNK):
    """Yield (row_start, block) with block = exp(-||a_i - b_j||^2 / (2 sigma^2))."""
    if not sigma > 0:
        raise ValidationError("sigma must be > 0")
    if chunk < 1:
        raise ValidationError("chunk must be >= 1")
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise WidthMismatch(f"widths {A.shape[1]} and {B.shape[1]} differ")
    scale = 2.0 * sigma * sigma
    for start in range(0, len(A), chunk):
        d2 = kernels.sqdist(A[start:start + chunk], B)
        yield start, np.exp(-d2 / scale)


def gaussian_kernel(A, B, sigma, chunk=DEFAULT_CHUNK):
    out = np.empty((len(A), len(B)))
    for start, blk in gaussian_kernel_blocks(A, B, sigma, chunk):
        out[start:start + len(blk)] = blk
    return out


def median_pairwise_distance(H, max_rows=1000):
    """Median Euclidean distance over an evenly strided subsample of rows."""
    H = np.asarray(H, dtype=np.float64)
    if len(H) > max_rows:
        H = H[np.linspace(0, len(H) - 1, max_rows).astype(np.int64)]
    d2 = kernels.sqdist(H, H)
    iu = np.triu_indices(len(H), k=1)
    if not len(iu[0]):
        return 1.0
    med = float(np.sqrt(np.median(d2[iu])))
    return med if med > 0 else 1.0


@dataclass
class KernelHead:
    sigma: float
    lambda_prime: float
    dual: np.ndarray
    train_repr: np.ndarray
    # Cholesky factor of K_tr + lambda' I, kept only on request
    factor: tuple | None = field(default=None, repr=False)


def krr_fit(h_tr, Y_tr, sigma, lambda_prime, chunk=DEFAULT_CHUNK, keep_factor=False):
    """Dual coefficients (K_tr + lambda' I)^{-1} Y_tr via Cholesky."""
    if not lambda_prime > 0:
        raise ValidationError("lambda_prime must be > 0")
    h_tr = np.ascontiguousarray(h_tr, dtype=np.float64)
    Y_tr = np.asarray(Y_tr, dtype=np.float64)
    if Y_tr.ndim == 1:
        Y_tr = Y_tr[:, None]
    K = gaussian_kernel(h_tr, h_tr, sigma, chunk)
    factor = cholesky(shifted(K, lambda_prime))
    dual = scipy.linalg.cho_solve(factor, Y_tr, check_finite=False)
    return KernelHead(float(sigma), float(lambda_prime), dual, h_tr.copy(),
                      factor if keep_factor else None)


def krr_predict(head: KernelHead, h_query, chunk=DEFAULT_CHUNK):
    h_query = np.asarray(h_query, dtype=np.float64)
    if h_query.ndim != 2 or h_query.shape[1] != head.train_repr.shape[1]:
        raise WidthMismatch("query width does not match the training representation")
    out = np.empty((len(h_query), head.dual.shape[1]))
    for start, blk in gaussian_kernel_blocks(h_query, head.train_repr, head.sigma, chunk):
        out[start:start + len(blk)] = kernels.matmul_seq(blk, head.dual)
    return out


def rff_frequencies(d, num_features, sigma, seed):
    """omega ~ N(0, sigma^-2 I), drawn from a Philox stream keyed on ``seed``."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    return rng.standard_normal((d, num_features)) / sigma


def rff_map(X, num_features, sigma, seed, omega=None):
    """Random Fourier features sqrt(1/F) [cos(X omega), sin(X omega)]."""
    if num_features < 1:
        raise ValidationError("num_features must be >= 1")
    if not sigma > 0:
        raise ValidationError("sigma must be > 0")
    X = np.asarray(X, dtype=np.float64)
    if omega is None:
        omega = rff_frequencies(X.shape[1], num_features, sigma, seed)
    proj = kernels.matmul_seq(X, omega)
    scale = np.sqrt(1.0 / num_features)
    return np.hstack([np.cos(proj), np.sin(proj)]) * scale


def column_whiten(M, stat_rows, eps=1e-8):
    """(M - mu) / max(sd, eps), with mu and sd taken over ``stat_rows`` only."""
    M = np.asarray(M, dtype=np.float64)
    stat_rows = np.asarray(stat_rows)
    if stat_rows.dtype == bool:
        stat_rows = np.flatnonzero(stat_rows)
    if not len(stat_rows):
        raise ValidationError("stat_rows must be non-empty")
    ref = M[stat_rows]
    mu = ref.mean(axis=0)
    sd = ref.std(axis=0)
    return (M - mu) / np.maximum(sd, eps)
