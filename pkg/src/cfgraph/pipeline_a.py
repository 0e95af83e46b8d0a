"""Assortative-graph predictor: propagated features + ridge (+ Correct-and-Smooth).

Features are built from a stack of propagation hops P_j = Ã^j X_src, which the
model keeps so that unlearning can recompute only the rows inside the K-hop
neighborhood of a modification.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .data import Dataset
from .errors import ShapeMismatch, ValidationError
from .graph import Graph, propagate
from .numerics import GramTree, RidgeStats, cholesky, default_leaf_size, rff_map, rff_frequencies, shifted

VARIANTS = ("plain", "multihop-concat", "multihop-rff")
PRECISIONS = {"fp64": np.float64, "fp32": np.float32}


@dataclass(frozen=True)
class CnsParams:
    alpha_correct: float = 0.5
    alpha_smooth: float = 0.5
    num_iters: int = 50


@dataclass(frozen=True)
class RffParams:
    num_features: int = 512
    sigma: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class PipelineAConfig:
    K: int = 2
    x_src: str = "raw"
    alpha: float = 1.0
    epsilon: float = 0.0
    variant: str = "plain"
    cns: CnsParams | None = None
    rff: RffParams | None = None
    group_alpha: tuple | None = None
    precision: str = "fp64"
    leaf_size: int | None = None

    def __post_init__(self):
        if not 0 <= self.K <= 8:
            raise ValidationError("K must lie in 0..8")
        if self.x_src not in ("raw", "rownorm"):
            raise ValidationError("x_src must be 'raw' or 'rownorm'")
        if not self.alpha > 0:
            raise ValidationError("alpha must be > 0")
        if not 0 <= self.epsilon < 1:
            raise ValidationError("epsilon must lie in [0, 1)")
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}")
        if self.variant == "multihop-rff" and self.rff is None:
            object.__setattr__(self, "rff", RffParams())
        if self.group_alpha is not None:
            ga = tuple(float(a) for a in self.group_alpha)
            if len(ga) != self.K + 1 or min(ga) <= 0:
                raise ValidationError("group_alpha needs K+1 positive entries")
            object.__setattr__(self, "group_alpha", ga)
        if self.precision not in PRECISIONS:
            raise ValidationError("precision must be fp32 or fp64")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("cns") is not None:
            d["cns"] = CnsParams(**d["cns"])
        if d.get("rff") is not None:
            d["rff"] = RffParams(**d["rff"])
        if d.get("group_alpha") is not None:
            d["group_alpha"] = tuple(d["group_alpha"])
        return cls(**d)


def row_normalize(X):
    """Rows scaled to unit L2 norm; zero rows stay zero. Row-local and order-fixed."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.sqrt(kernels.rowdot(X, X))
    safe = np.where(norms > 0, norms, 1.0)
    return X / safe[:, None]


def source_features(X, x_src, dtype=np.float64):
    X = row_normalize(X) if x_src == "rownorm" else np.asarray(X, dtype=np.float64)
    return np.ascontiguousarray(X, dtype=dtype)


def hop_stack(g: Graph, X_src, K):
    hops = [X_src]
    for _ in range(K):
        hops.append(propagate(g, hops[-1]))
    return hops


def group_scales(cfg: PipelineAConfig):
    if cfg.group_alpha is None:
        return [1.0] * (cfg.K + 1)
    return [1.0 / np.sqrt(a / cfg.alpha) for a in cfg.group_alpha]


def features_from_hops(hops, cfg: PipelineAConfig, rows=None):
    """H (or its ``rows``) from the hop stack; every op is row-local."""
    pick = (lambda P: P) if rows is None else (lambda P: P[rows])
    if cfg.variant == "plain":
        return np.ascontiguousarray(pick(hops[cfg.K]))
    scales = group_scales(cfg)
    blocks = [pick(P) if s == 1.0 else pick(P) * np.asarray(s, dtype=P.dtype)
              for P, s in zip(hops, scales)]
    concat = np.ascontiguousarray(np.hstack(blocks))
    if cfg.variant == "multihop-concat":
        return concat
    r = cfg.rff
    omega = rff_frequencies(concat.shape[1], r.num_features, r.sigma, r.seed)
    return np.ascontiguousarray(rff_map(concat, r.num_features, r.sigma, r.seed, omega),
                                dtype=hops[0].dtype)


def build_features_a(ds: Dataset, cfg: PipelineAConfig):
    return features_from_hops(hop_stack(ds.graph, source_features(ds.X, cfg.x_src, cfg.dtype), cfg.K), cfg)


def smooth_labels(Y, epsilon):
    """(1 - eps) Y + eps / C, entrywise."""
    Y = np.asarray(Y, dtype=np.float64)
    C = Y.shape[1]
    return (1.0 - epsilon) * Y + epsilon / C


def training_rows(ds: Dataset):
    return ds.train_mask & ~ds.removed


@dataclass(eq=False)
class PipelineAModel:
    config: PipelineAConfig
    W: np.ndarray
    stats: RidgeStats
    leaf_size: int
    num_classes: int
    # caches for prediction and local unlearning; rebuilt by attach() after loading
    hops: list | None = field(default=None, repr=False)
    H: np.ndarray | None = field(default=None, repr=False)
    tree: GramTree | None = field(default=None, repr=False)
    factor: tuple | None = field(default=None, repr=False)
    targets: np.ndarray | None = field(default=None, repr=False)

    kind = "pipeline-a"

    @property
    def propagation_depth(self):
        return self.config.K

    def weights(self):
        return [self.W]

    def raw_scores(self):
        return self.H @ self.W

    def attach(self, ds: Dataset):
        """Rebuild caches from ``ds`` and check they reproduce W bitwise."""
        fresh = fit_a(ds, self.config, leaf_size=self.leaf_size)
        if not np.array_equal(fresh.W, self.W):
            raise ValidationError("stored weights do not match the supplied dataset")
        self.hops, self.H, self.tree = fresh.hops, fresh.H, fresh.tree
        self.factor, self.targets, self.stats = fresh.factor, fresh.targets, fresh.stats
        return self


def fit_a(ds: Dataset, cfg: PipelineAConfig, leaf_size=None) -> PipelineAModel:
    if ds.multilabel:
        raise ValidationError("Pipeline A expects single-label classes; use lp_ridge for multi-label tasks")
    tr = training_rows(ds)
    if not tr.any():
        raise ValidationError("train mask is empty")
    dtype = cfg.dtype
    hops = hop_stack(ds.graph, source_features(ds.X, cfg.x_src, dtype), cfg.K)
    H = features_from_hops(hops, cfg)
    Y = np.ascontiguousarray(smooth_labels(ds.targets(), cfg.epsilon), dtype=dtype)
    if leaf_size is None:
        leaf_size = cfg.leaf_size or default_leaf_size(ds.n, H.shape[1], Y.shape[1],
                                                      itemsize=np.dtype(dtype).itemsize)
    tree = GramTree.build(H, Y, tr, leaf_size, dtype)
    stats = tree.stats(cfg.alpha)
    factor = cholesky(shifted(stats.G, stats.alpha))
    W = scipy.linalg.cho_solve(factor, stats.b, check_finite=False)
    return PipelineAModel(cfg, W, stats, leaf_size, ds.num_classes, hops, H, tree, factor, Y)


def correct_and_smooth(ds: Dataset, base_pred, params: CnsParams):
    """Residual correction then label smoothing over Ã (Huang et al. recipe).

    Both passes iterate Z <- (1 - a) Z0 + a Ã Z from their seed Z0; the
    correction is rescaled per node so its L1 norm matches the mean training
    residual ("autoscale"), and the smoothing pass clamps training rows to
    their one-hot labels before propagating.
    """
    base = np.asarray(base_pred, dtype=np.float64)
    if not np.isfinite(base).all():
        raise ValidationError("base predictions must be finite")
    g = ds.graph
    lab = ds.train_mask & (ds.y >= 0) & ~ds.removed
    Y = ds.targets()

    err = np.zeros_like(base)
    err[lab] = Y[lab] - base[lab]
    smoothed = _restart_propagation(g, err, params.alpha_correct, params.num_iters, (-1.0, 1.0))
    sigma = np.abs(err[lab]).sum() / max(int(lab.sum()), 1)
    l1 = np.abs(smoothed).sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        scale = sigma / l1
    scale[~np.isfinite(scale) | (scale > 1000)] = 1.0
    corrected = base + scale * smoothed

    seed = corrected.copy()
    seed[lab] = Y[lab]
    return _restart_propagation(g, seed, params.alpha_smooth, params.num_iters, (0.0, 1.0))


def _restart_propagation(g, Z0, a, iters, clip):
    if a == 0 or iters == 0:
        return Z0.copy()
    Z = Z0
    for _ in range(iters):
        Z = np.clip((1.0 - a) * Z0 + a * propagate(g, Z), *clip)
    return Z


def predict_a(model: PipelineAModel, ds: Dataset):
    """Raw ridge scores (C&S-refined when configured). Uses the cached H when present."""
    H = model.H if model.H is not None else build_features_a(ds, model.config)
    if H.shape[1] != model.W.shape[0]:
        raise ShapeMismatch("feature width differs from fit time")
    scores = (H @ model.W).astype(np.float64)
    if model.config.cns is not None:
        scores = correct_and_smooth(ds, scores, model.config.cns)
    return scores


def appnp_label_propagation(ds: Dataset, alpha_ppr=0.1, iters=10):
    """Z <- (1 - a) Ã Z + a Z0, Z0 = training labels (zeros elsewhere)."""
    if not 0 < alpha_ppr <= 1:
        raise ValidationError("alpha_ppr must lie in (0, 1]")
    Z0 = ds.targets()
    Z0[~(ds.train_mask & ~ds.removed)] = 0.0
    Z = Z0
    for _ in range(iters):
        Z = (1.0 - alpha_ppr) * propagate(ds.graph, Z) + alpha_ppr * Z0
    return Z


def lp_ridge(ds: Dataset, alpha_ppr=0.1, iters=10, alpha=1.0):
    """Label propagation features followed by a multi-label ridge with {0,1} targets."""
    from .numerics import ridge_solve

    Z = appnp_label_propagation(ds, alpha_ppr, iters)
    tr = ds.train_mask & ~ds.removed
    W, _ = ridge_solve(Z[tr], ds.targets()[tr], alpha)
    return Z @ W
