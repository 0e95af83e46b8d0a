"""Heterophilous-graph predictor: layer-wise closed-form refinement + Gaussian KRR.

Each layer aggregates the running representation with Ã, applies an optional
pointwise nonlinearity, solves a ridge problem against the training labels and
appends the resulting n x C predictions as new columns. A Gaussian kernel
ridge head on the final representation produces the output.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .data import Dataset
from .errors import ShapeMismatch, ValidationError
from .graph import Graph, propagate
from .numerics import (DEFAULT_CHUNK, GramTree, KernelHead, cholesky, default_leaf_size,
                       krr_fit, krr_predict, median_pairwise_distance, shifted)
from .pipeline_a import row_normalize

H0_BLOCKS = ("x", "ax", "a2x", "a3x", "var1", "var2", "diff0", "diff1", "diff2", "attn")
PHIS = ("none", "tanh", "elu")


@dataclass(frozen=True)
class LcfConfig:
    K: int = 3
    phi: str = "none"
    lam: float = 1.0
    sigma_scale: float = 1.0
    sigma: float | None = None
    lambda_prime: float = 1e-2
    use_lcf: bool = True
    blocks: tuple = H0_BLOCKS
    whiten: bool = True
    chunk: int = DEFAULT_CHUNK
    leaf_size: int | None = None

    def __post_init__(self):
        if self.use_lcf and self.K < 1:
            raise ValidationError("K must be >= 1 when layers are enabled")
        if self.phi not in PHIS:
            raise ValidationError(f"phi must be one of {PHIS}")
        if not self.lam > 0 or not self.lambda_prime > 0:
            raise ValidationError("regularizers must be > 0")
        if not self.sigma_scale > 0 or (self.sigma is not None and not self.sigma > 0):
            raise ValidationError("bandwidth must be > 0")
        blocks = tuple(self.blocks)
        unknown = set(blocks) - set(H0_BLOCKS)
        if unknown or not blocks:
            raise ValidationError(f"unknown or empty h0 blocks: {sorted(unknown)}")
        object.__setattr__(self, "blocks", tuple(b for b in H0_BLOCKS if b in blocks))

    @property
    def num_layers(self):
        return self.K if self.use_lcf else 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["blocks"] = tuple(d.get("blocks", H0_BLOCKS))
        return cls(**d)


def apply_phi(a, phi):
    if phi == "tanh":
        return np.tanh(a)
    if phi == "elu":
        return np.where(a > 0, a, np.expm1(np.minimum(a, 0.0)))
    return a


def attention_rows(g: Graph, Xh, rows):
    """Cosine-weighted mean over each node's closed neighborhood (self included).

    Weights max(cos, 0) normalized per node; uniform when they all vanish.
    """
    rows = np.asarray(rows, dtype=np.int64)
    start = g.prop_indptr[rows]
    count = g.prop_indptr[rows + 1] - start
    pos = np.repeat(start, count) + (np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count))
    src = np.repeat(rows, count)
    dst = g.prop_indices[pos]
    w = np.maximum(kernels.rowdot(Xh[src], Xh[dst]), 0.0)
    local_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(count, out=local_ptr[1:])
    local_rows = np.arange(len(rows), dtype=np.int64)
    totals = kernels.spmm_rows(local_ptr, np.zeros(len(w), np.int64), w, np.ones((1, 1)), local_rows)[:, 0]
    uniform = totals[np.repeat(local_rows, count)] == 0
    denom = np.where(uniform, np.repeat(count, count).astype(np.float64), totals[np.repeat(local_rows, count)])
    w = np.where(uniform, 1.0, w) / denom
    return kernels.spmm_rows(local_ptr, dst, w, Xh, local_rows)


@dataclass
class BaseStacks:
    """Hop stacks behind h0: Ã^j X̂ for j <= 3 and Ã^j (X̂ ⊙ X̂) for j <= 2."""

    xh: list
    sq: list

    @classmethod
    def build(cls, g, X):
        Xh = row_normalize(X)
        xh = [Xh]
        for _ in range(3):
            xh.append(propagate(g, xh[-1]))
        sq = [Xh * Xh]
        for _ in range(2):
            sq.append(propagate(g, sq[-1]))
        return cls(xh, sq)


def h0_from_stacks(g, st: BaseStacks, blocks=H0_BLOCKS, rows=None):
    sel = (lambda M: M) if rows is None else (lambda M: M[rows])
    xh, sq = st.xh, st.sq
    parts = []
    for b in blocks:
        if b == "x":
            parts.append(sel(xh[0]))
        elif b in ("ax", "a2x", "a3x"):
            parts.append(sel(xh[("ax", "a2x", "a3x").index(b) + 1]))
        elif b in ("var1", "var2"):
            k = 1 if b == "var1" else 2
            m = sel(xh[k])
            parts.append(sel(sq[k]) - m * m)
        elif b.startswith("diff"):
            k = int(b[-1])
            parts.append(sel(xh[k]) - sel(xh[k + 1]))
        else:
            parts.append(attention_rows(g, xh[0], np.arange(g.n) if rows is None else rows))
    return np.ascontiguousarray(np.hstack(parts))


def base_features_h0(ds: Dataset, blocks=H0_BLOCKS):
    """[X̂, ÃX̂, Ã²X̂, Ã³X̂, var1, var2, X̂-ÃX̂, ÃX̂-Ã²X̂, Ã²X̂-Ã³X̂, attn(X̂)], filtered by ``blocks``."""
    return h0_from_stacks(ds.graph, BaseStacks.build(ds.graph, ds.X), blocks)


def training_rows(ds: Dataset):
    return ds.train_mask & ~ds.removed


def layer_ridge(a, Y, tr, lam, leaf_size):
    tree = GramTree.build(a, Y, tr, leaf_size)
    stats = tree.stats(lam)
    factor = cholesky(shifted(stats.G, lam))
    return scipy.linalg.cho_solve(factor, stats.b, check_finite=False), tree, factor


def lcf_layer(g: Graph, h_prev, phi, lam, Y, train_mask, leaf_size=None):
    """One refinement round; returns (p_k, W_k, h_next).

    ``Y`` is the n x C target matrix; only ``train_mask`` rows enter the solve.
    """
    a = apply_phi(propagate(g, h_prev), phi)
    leaf_size = leaf_size or default_leaf_size(g.n, a.shape[1], Y.shape[1])
    W, _, _ = layer_ridge(a, Y, train_mask, lam, leaf_size)
    p = a @ W
    return p, W, np.hstack([h_prev, p])


@dataclass(eq=False)
class LcfNetModel:
    config: LcfConfig
    layers: list
    head: KernelHead
    whiten_mu: np.ndarray | None
    whiten_sd: np.ndarray | None
    leaf_sizes: list
    num_classes: int
    train_ids: np.ndarray
    widths: list = field(default_factory=list)
    # unlearning caches (layer-1 statistics), rebuilt by attach()
    stacks: BaseStacks | None = field(default=None, repr=False)
    h0: np.ndarray | None = field(default=None, repr=False)
    a1: np.ndarray | None = field(default=None, repr=False)
    tree1: GramTree | None = field(default=None, repr=False)
    targets: np.ndarray | None = field(default=None, repr=False)
    train_residuals: list = field(default_factory=list, repr=False)

    kind = "lcfnet"

    @property
    def propagation_depth(self):
        # h0 reaches 3 hops; the first layer aggregates once more
        return 4

    def weights(self):
        return list(self.layers) + [self.head.dual]

    def attach(self, ds: Dataset):
        fresh = fit_lcfnet(ds, self.config, leaf_sizes=self.leaf_sizes)
        for a, b in zip(fresh.weights(), self.weights()):
            if not np.array_equal(a, b):
                raise ValidationError("stored weights do not match the supplied dataset")
        self.stacks, self.h0, self.a1 = fresh.stacks, fresh.h0, fresh.a1
        self.tree1, self.targets = fresh.tree1, fresh.targets
        self.head.factor = fresh.head.factor
        return self


def whiten_stats(h0, tr, eps=1e-8):
    ref = h0[tr]
    return ref.mean(axis=0), np.maximum(ref.std(axis=0), eps)


def run_layers(g, h, cfg, Y, tr, leaf_sizes, first_layer=None):
    """Fit the K layers; returns (h_K, Ws, leaf_sizes, a1, tree1, residuals).

    ``first_layer`` may carry a precomputed ``(a1, W1, tree1)`` (used by local
    unlearning, which rebuilds layer 1 without a full propagation).
    """
    Ws, sizes, residuals = [], [], []
    a1 = tree1 = None
    for k in range(cfg.num_layers):
        if k == 0 and first_layer is not None:
            a, W, tree = first_layer
            ls = tree.leaf_size
        else:
            a = apply_phi(propagate(g, h), cfg.phi)
            ls = leaf_sizes[k] if leaf_sizes else (cfg.leaf_size or default_leaf_size(g.n, a.shape[1], Y.shape[1]))
            W, tree, _ = layer_ridge(a, Y, tr, cfg.lam, ls)
        if k == 0:
            a1, tree1 = a, tree
        p = a @ W
        residuals.append(float(np.linalg.norm(p[tr] - Y[tr])))
        Ws.append(W)
        sizes.append(ls)
        h = np.hstack([h, p])
    return h, Ws, sizes, a1, tree1, residuals


def fit_head(h, Y, tr, cfg):
    sigma = cfg.sigma
    if sigma is None:
        sigma = cfg.sigma_scale * median_pairwise_distance(h[tr])
    # the factor is kept for the label-only fast path of KRR-only models
    return krr_fit(h[tr], Y[tr], sigma, cfg.lambda_prime, cfg.chunk, keep_factor=not cfg.use_lcf)


def fit_lcfnet(ds: Dataset, cfg: LcfConfig, leaf_sizes=None) -> LcfNetModel:
    tr = training_rows(ds)
    if not tr.any():
        raise ValidationError("train mask is empty")
    stacks = BaseStacks.build(ds.graph, ds.X)
    h0 = h0_from_stacks(ds.graph, stacks, cfg.blocks)
    return assemble_lcfnet(ds, cfg, stacks, h0, leaf_sizes)


def assemble_lcfnet(ds, cfg, stacks, h0, leaf_sizes=None, first_layer=None):
    """Everything after h0: whitening, layers, head."""
    tr = training_rows(ds)
    Y = ds.targets()
    mu = sd = None
    h = h0
    if cfg.whiten:
        mu, sd = whiten_stats(h0, tr)
        h = (h0 - mu) / sd
    hK, Ws, sizes, a1, tree1, residuals = run_layers(ds.graph, h, cfg, Y, tr, leaf_sizes, first_layer)
    head = fit_head(hK, Y, tr, cfg)
    widths = [h0.shape[1] + k * ds.num_classes for k in range(cfg.num_layers + 1)]
    return LcfNetModel(cfg, Ws, head, mu, sd, sizes, ds.num_classes, np.flatnonzero(tr),
                       widths, stacks, h0, a1, tree1, Y, residuals)


def representation(model: LcfNetModel, ds: Dataset):
    """Replay h_K with the stored layer weights (no solves)."""
    cfg = model.config
    g = ds.graph
    h = base_features_h0(ds, cfg.blocks)
    if h.shape[1] != model.widths[0]:
        raise ShapeMismatch("feature width differs from fit time")
    if cfg.whiten:
        h = (h - model.whiten_mu) / model.whiten_sd
    for W in model.layers:
        a = apply_phi(propagate(g, h), cfg.phi)
        h = np.hstack([h, a @ W])
    return h


def predict_lcfnet(model: LcfNetModel, ds: Dataset):
    if ds.X.shape[0] != ds.n or ds.num_classes != model.num_classes:
        raise ShapeMismatch("dataset does not match the fitted model")
    return krr_predict(model.head, representation(model, ds), model.config.chunk)
