"""Sparse undirected graphs, the normalized propagation operator, and
graph-level statistics.

Node ids are never compacted: deleting a node removes its incident edges and
leaves an isolated id behind, so row indices stay addressable across
unlearning events.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NoTrainEdges, TargetMissing, ValidationError

FORGET_KINDS = ("label", "feature", "edge", "node", "subgraph")


def as_nodeset(ids, n=None):
    """Sorted unique int64 ids, bounds-checked against ``n`` when given."""
    out = np.unique(np.asarray(ids, dtype=np.int64).ravel())
    if n is not None and len(out) and (out[0] < 0 or out[-1] >= n):
        raise TargetMissing(f"node ids must lie in [0, {n})")
    return out


def _canonical_edges(edges, n):
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) and (e.min() < 0 or e.max() >= n):
        raise ValidationError(f"edge endpoint out of range [0, {n})")
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    if len(e):
        e = np.unique(e, axis=0)
    return e.reshape(-1, 2)


def _csr(rows, cols, n):
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable symmetric graph.

    ``indptr``/``indices`` hold A (no self-loops). ``prop_*`` hold the CSR of
    Ã = D̄^{-1/2}(A+I)D̄^{-1/2} with the diagonal entry in its sorted position,
    which fixes the per-row summation order used by :func:`propagate`.
    """

    n: int
    edges: np.ndarray
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)
    prop_indptr: np.ndarray = field(repr=False)
    prop_indices: np.ndarray = field(repr=False)
    prop_data: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n, edges):
        n = int(n)
        e = _canonical_edges(edges, n)
        u, v = e[:, 0], e[:, 1]
        indptr, indices = _csr(np.concatenate([u, v]), np.concatenate([v, u]), n)
        degrees = np.diff(indptr) + 1
        loops = np.arange(n, dtype=np.int64)
        p_rows = np.concatenate([u, v, loops])
        p_cols = np.concatenate([v, u, loops])
        prop_indptr, prop_indices = _csr(p_rows, p_cols, n)
        p_rows = np.repeat(loops, np.diff(prop_indptr))
        dbar = degrees.astype(np.float64)
        prop_data = 1.0 / np.sqrt(dbar[p_rows] * dbar[prop_indices])
        for a in (e, indptr, indices, degrees, prop_indptr, prop_indices, prop_data):
            a.setflags(write=False)
        return cls(n, e, indptr, indices, degrees, prop_indptr, prop_indices, prop_data)

    @property
    def num_edges(self):
        return len(self.edges)

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def has_edge(self, u, v):
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def dense_propagation(self):
        """Ã as a dense array (test oracle; small graphs only)."""
        out = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), np.diff(self.prop_indptr))
        out[rows, self.prop_indices] = self.prop_data
        return out

    def without_edges(self, drop):
        """Copy with the (canonicalized) edges in ``drop`` removed.

        Entries are deleted from the existing sorted arrays, so the result
        equals ``Graph.from_edges`` on the remaining edges without re-sorting.
        """
        drop = _canonical_edges(drop, self.n)
        n = self.n
        ekey = self.edges[:, 0] * n + self.edges[:, 1]
        pos = np.searchsorted(ekey, drop[:, 0] * n + drop[:, 1])
        hit = pos < len(ekey)
        hit[hit] = ekey[pos[hit]] == drop[hit, 0] * n + drop[hit, 1]
        if not hit.any():
            return self
        keep = np.ones(len(ekey), dtype=bool)
        keep[pos[hit]] = False
        edges = self.edges[keep]
        u, v = drop[hit, 0], drop[hit, 1]
        ru, rv = np.concatenate([u, v]), np.concatenate([v, u])
        indptr, indices, _ = _csr_delete(self.indptr, self.indices, ru, rv, n)
        degrees = np.diff(indptr) + 1
        prop_indptr, prop_indices, p_rows = _csr_delete(self.prop_indptr, self.prop_indices, ru, rv, n)
        dbar = degrees.astype(np.float64)
        prop_data = 1.0 / np.sqrt(dbar[p_rows] * dbar[prop_indices])
        for a in (edges, indptr, indices, degrees, prop_indptr, prop_indices, prop_data):
            a.setflags(write=False)
        return Graph(n, edges, indptr, indices, degrees, prop_indptr, prop_indices, prop_data)


def _csr_delete(indptr, indices, ru, rv, n):
    """Drop entries (ru[i], rv[i]) (all present) from a row-sorted CSR."""
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    pos = np.searchsorted(rows * n + indices, ru * n + rv)
    keep = np.ones(len(indices), dtype=bool)
    keep[pos] = False
    new_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows[keep], minlength=n), out=new_ptr[1:])
    return new_ptr, indices[keep], rows[keep]


def propagate(g: Graph, M, rows=None):
    """Ã·M, or only the listed output rows of it.

    Each output row sums its neighbors (self-loop included) in ascending id
    order, so a row computed alone is bitwise equal to the same row of the
    full product.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != g.n:
        raise DimensionMismatch(f"expected {g.n} rows, got shape {M.shape}")
    if rows is None:
        rows = np.arange(g.n, dtype=np.int64)
    return kernels.spmm_rows(g.prop_indptr, g.prop_indices, g.prop_data, M, rows)


def propagate_k(g: Graph, M, k):
    for _ in range(k):
        M = propagate(g, M)
    return M


def k_hop_distances(g: Graph, seeds, L):
    seeds = as_nodeset(seeds, g.n)
    return kernels.bfs_levels(g.indptr, g.indices, seeds, g.n, L)


def k_hop_neighborhood(g: Graph, seeds, L: int):
    """{v : d_G(v, seeds) <= L} as a sorted id array."""
    if L < 0:
        raise ValidationError("L must be non-negative")
    seeds = as_nodeset(seeds, g.n)
    if L == 0 or not len(seeds):
        return seeds
    return np.flatnonzero(k_hop_distances(g, seeds, L) >= 0).astype(np.int64)


def edge_homophily(g: Graph, labels, train_mask):
    e = _train_edges(g, labels, train_mask)
    y = np.asarray(labels)
    return float(np.mean(y[e[:, 0]] == y[e[:, 1]]))


def _train_edges(g, labels, train_mask):
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValidationError("adjusted homophily needs single-label classes")
    tr = np.asarray(train_mask, dtype=bool) & (y >= 0)
    e = g.edges[tr[g.edges[:, 0]] & tr[g.edges[:, 1]]]
    if not len(e):
        raise NoTrainEdges("no edges between labelled training nodes")
    return e


def adjusted_homophily(g: Graph, labels, train_mask) -> float:
    """Adjusted homophily on the train-induced subgraph.

    (h_edge - sum_c p_c^2) / (1 - sum_c p_c^2), where p_c is the share of
    train-subgraph degree held by class c. Only training labels are read.
    """
    y = np.asarray(labels)
    e = _train_edges(g, y, train_mask)
    same = y[e[:, 0]] == y[e[:, 1]]
    h_edge = same.sum() / len(e)
    ends = np.concatenate([y[e[:, 0]], y[e[:, 1]]])
    deg_mass = np.bincount(ends).astype(np.float64) / (2 * len(e))
    s = float(np.sum(deg_mass ** 2))
    if s >= 1.0:
        # every train-edge endpoint has one class: perfectly assortative
        return 1.0
    return float((h_edge - s) / (1.0 - s))


@dataclass(frozen=True)
class ForgetRequest:
    """Graph objects to forget.

    ``targets`` holds node ids, or an (m, 2) array of endpoint pairs for
    ``kind == "edge"``.
    """

    kind: str
    targets: np.ndarray

    def __post_init__(self):
        if self.kind not in FORGET_KINDS:
            raise ValidationError(f"unknown forget kind {self.kind!r}")
        t = np.asarray(self.targets, dtype=np.int64)
        t = t.reshape(-1, 2) if self.kind == "edge" else t.ravel()
        if not len(t):
            raise ValidationError("forget request has no targets")
        object.__setattr__(self, "targets", t)

    @property
    def size(self):
        return len(self.targets)

    def to_json(self):
        return {"kind": self.kind, "targets": self.targets.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["kind"], obj["targets"])


def modify_graph(g: Graph, req: ForgetRequest):
    """Apply the structural part of ``req``.

    Returns the new graph and the affected set S: nodes whose Ã row, feature
    row, or label changed. Edge deletion affects both endpoints; node and
    subgraph deletion affect the deleted nodes and all their former
    neighbors, since those neighbors' normalization changes.
    """
    if req.kind == "edge":
        e = req.targets
        for u, v in e:
            if not (0 <= u < g.n and 0 <= v < g.n) or not g.has_edge(u, v):
                raise TargetMissing(f"edge ({u}, {v}) not in graph")
        return g.without_edges(e), as_nodeset(e)
    nodes = as_nodeset(req.targets, g.n)
    if req.kind in ("label", "feature"):
        return g, nodes
    # node / subgraph: drop every incident edge, keep the ids
    inc = np.isin(g.edges[:, 0], nodes) | np.isin(g.edges[:, 1], nodes)
    former = g.edges[inc]
    affected = as_nodeset(np.concatenate([nodes, former.ravel()]))
    if not inc.any():
        return g, affected
    return g.without_edges(former), affected
