"""Exact unlearning for the closed-form predictors.

Three strategies produce the post-forget model:

* ``khop``: recompute feature rows only inside the L-hop neighborhood of the
  modification, refresh the affected leaves of the Gram tree and re-solve
  (Pipeline A, and LCF-Net with a single unwhitened layer).
* ``full``: re-solve the closed form on the modified inputs, reusing the
  feature matrix when only labels changed.
* ``retrain``: run the fit entry point from scratch on the modified dataset.
  This is the reference the other two are verified against.

Forgetting never renumbers nodes. A forgotten label takes the node out of the
training set (its features and edges stay, so it is still predicted like any
unlabelled node); a forgotten feature row is zeroed; a deleted node loses its
edges, its feature row, its label and its split membership, and is marked in
``Dataset.removed``.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg

from .data import Dataset, evaluate, philox, predict_labels, roc_auc
from .errors import DegenerateSets, KindMismatch, NotLocalityEligible, ValidationError
from .graph import ForgetRequest, as_nodeset, k_hop_distances, modify_graph, propagate
from .lcfnet import (BaseStacks, LcfNetModel, apply_phi, assemble_lcfnet, fit_lcfnet,
                     h0_from_stacks, predict_lcfnet)
from .numerics import GramTree, cholesky, shifted
from .pipeline_a import (PipelineAModel, features_from_hops, fit_a, predict_a, row_normalize,
                         smooth_labels, source_features, training_rows)

STRATEGIES = ("khop", "full", "retrain")
TOL_FP64 = 1e-12
TOL_FP32 = 1e-3
SMALL_FORGET = 20


@dataclass
class UnlearnReport:
    strategy: str
    kind: str = ""
    forget_size: int = 0
    delta_theta: float | None = None
    pred_agreement: float | None = None
    prob_equal: bool | None = None
    mia_auc: float | None = None
    mia_auc_retrained: float | None = None
    test_delta: float | None = None
    wall_clock: dict = field(default_factory=dict)
    affected_size: int = 0
    neighborhood_size: int = 0
    touched_rows: int = 0
    speedup: float | None = None
    small_sample: bool = False

    def to_json(self):
        out = {"delta_theta": self.delta_theta, "mia": self.mia_auc, "test_delta": self.test_delta,
               "t_A": self.wall_clock.get("khop"), "speedup": self.speedup}
        out.update({k: v for k, v in asdict(self).items() if k not in out})
        return out


# --- forget application ------------------------------------------------------

def apply_forget(ds: Dataset, req: ForgetRequest):
    """Modified dataset and the affected set S (changed Ã, feature or label rows)."""
    g2, S = modify_graph(ds.graph, req)
    if req.kind == "edge":
        return ds.with_(graph=g2), S
    nodes = as_nodeset(req.targets, ds.n)
    if req.kind == "label":
        labelled = _has_label(ds)[nodes]
        if (labelled & ~ds.train_mask[nodes]).any():
            raise ValidationError("label forget targets must be training nodes")
        return ds.with_(y=_blank_labels(ds.y, nodes), train_mask=ds.train_mask & ~_member(ds.n, nodes)), S
    X = ds.X.copy()
    X[nodes] = 0.0
    if req.kind == "feature":
        return ds.with_(X=X), S
    keep = ~_member(ds.n, nodes)
    removed = ds.removed | ~keep
    return ds.with_(graph=g2, X=X, y=_blank_labels(ds.y, nodes), train_mask=ds.train_mask & keep,
                    val_mask=ds.val_mask & keep, test_mask=ds.test_mask & keep, removed=removed), S


def _member(n, nodes):
    m = np.zeros(n, dtype=bool)
    m[nodes] = True
    return m


def _blank_labels(y, nodes):
    y = y.copy()
    y[nodes] = 0 if y.ndim == 2 else -1
    return y


def sample_forget_request(ds: Dataset, kind, size, seed=0):
    """Random forget request of ``size`` objects drawn from a Philox stream."""
    rng = philox(seed)
    alive = np.flatnonzero(~ds.removed)
    if kind == "label":
        pool = np.flatnonzero(training_rows(ds) & _has_label(ds))
    elif kind == "edge":
        e = ds.graph.edges
        if not len(e):
            raise ValidationError("graph has no edges to forget")
        pick = rng.choice(len(e), size=min(size, len(e)), replace=False)
        return ForgetRequest("edge", e[np.sort(pick)])
    elif kind == "subgraph":
        return ForgetRequest("subgraph", _ball(ds.graph, int(rng.choice(alive)), size, ds.removed))
    else:
        pool = alive
    if not len(pool):
        raise ValidationError(f"no candidates for {kind} forget")
    return ForgetRequest(kind, np.sort(rng.choice(pool, size=min(size, len(pool)), replace=False)))


def _has_label(ds):
    return ds.y.any(axis=1) if ds.multilabel else ds.y >= 0


def _ball(g, root, size, removed):
    """First ``size`` nodes of a BFS from ``root`` (a connected induced subgraph)."""
    seen = {root}
    order = [root]
    i = 0
    while i < len(order) and len(order) < size:
        for v in g.neighbors(order[i]):
            v = int(v)
            if v not in seen and not removed[v]:
                seen.add(v)
                order.append(v)
                if len(order) == size:
                    break
        i += 1
    return np.array(sorted(order), dtype=np.int64)


# --- model-kind dispatch -----------------------------------------------------

def predict(model, ds: Dataset, fresh=False):
    """Scores on ``ds``; ``fresh`` ignores Pipeline A's cached features."""
    if isinstance(model, PipelineAModel):
        return predict_a(replace(model, H=None) if fresh else model, ds)
    if isinstance(model, LcfNetModel):
        return predict_lcfnet(model, ds)
    raise KindMismatch(f"unsupported model type {type(model).__name__}")


def retrain_from_scratch(model, ds_modified: Dataset):
    """Fresh fit with the model's configuration on the modified dataset."""
    if isinstance(model, PipelineAModel):
        return fit_a(ds_modified, model.config)
    if isinstance(model, LcfNetModel):
        return fit_lcfnet(ds_modified, model.config)
    raise KindMismatch(f"unsupported model type {type(model).__name__}")


def locality_eligible(model):
    if isinstance(model, PipelineAModel):
        return True
    if isinstance(model, LcfNetModel):
        cfg = model.config
        return cfg.use_lcf and cfg.K == 1 and not cfg.whiten
    return False


def tolerance(model):
    cfg = model.config
    return TOL_FP32 if getattr(cfg, "precision", "fp64") == "fp32" else TOL_FP64


def _require_caches(model):
    missing = model.H is None if isinstance(model, PipelineAModel) else model.h0 is None
    if missing:
        raise ValidationError("model caches are empty; call model.attach(ds) first")


# --- strategies ---------------------------------------------------------------

def _levels(g, S, L):
    """Hop distance from S (-1 beyond L) plus the sorted N_L(S)."""
    if not len(S):
        d = np.full(g.n, -1, dtype=np.int64)
        return d, d[:0]
    d = k_hop_distances(g, S, L)
    return d, np.flatnonzero(d >= 0).astype(np.int64)


def _within(dist, j):
    return np.flatnonzero((dist >= 0) & (dist <= j)).astype(np.int64)


def _tree_rows(ds, ds2, N):
    """Rows of N that enter the Gram tree before or after the forget."""
    return N[training_rows(ds)[N] | training_rows(ds2)[N]]


def _replace_rows(M, rows, values):
    out = M.copy()
    out[rows] = values
    return out


def _khop_a(model: PipelineAModel, ds, ds2, req, S):
    cfg = model.config
    tr = training_rows(ds2)
    Y = np.ascontiguousarray(smooth_labels(ds2.targets(), cfg.epsilon), dtype=cfg.dtype)
    tree = model.tree.copy()
    if req.kind == "label":
        # features are untouched; only the forgotten rows leave G and b
        hops, H, N = model.hops, model.H, S
        tree.update(H, Y, tr, N)
    else:
        # deletions only: the old graph contains every path of the new one
        dist, N = _levels(ds.graph, S, cfg.K)
        hops = [_replace_rows(model.hops[0], S, source_features(ds2.X[S], cfg.x_src, cfg.dtype))]
        for j in range(1, cfg.K + 1):
            rows = _within(dist, j)
            hops.append(_replace_rows(model.hops[j], rows, propagate(ds2.graph, hops[j - 1], rows)))
        H = _replace_rows(model.H, N, features_from_hops(hops, cfg, N)) if cfg.variant != "plain" \
            else np.ascontiguousarray(hops[cfg.K])
        tree.update(H, Y, tr, _tree_rows(ds, ds2, N))
    stats = tree.stats(cfg.alpha)
    factor = cholesky(shifted(stats.G, stats.alpha))
    W = scipy.linalg.cho_solve(factor, stats.b, check_finite=False)
    out = replace(model, W=W, stats=stats, hops=hops, H=H, tree=tree, factor=factor, targets=Y)
    return out, N


def _khop_lcf(model: LcfNetModel, ds, ds2, req, S):
    cfg = model.config
    tr = training_rows(ds2)
    Y = ds2.targets()
    tree = model.tree1.copy()
    if req.kind == "label":
        stacks, h0, a1, N = model.stacks, model.h0, model.a1, S
        tree.update(a1, Y, tr, N)
    else:
        # h0 reaches three hops (plus attention over one), layer 1 adds one more
        dist, N = _levels(ds.graph, S, model.propagation_depth)
        g2 = ds2.graph
        st = model.stacks
        xh0 = _replace_rows(st.xh[0], S, row_normalize(ds2.X[S]))
        xh, sq = [xh0], [_replace_rows(st.sq[0], S, xh0[S] * xh0[S])]
        for j in range(1, 4):
            rows = _within(dist, j)
            xh.append(_replace_rows(st.xh[j], rows, propagate(g2, xh[j - 1], rows)))
            if j < 3:
                sq.append(_replace_rows(st.sq[j], rows, propagate(g2, sq[j - 1], rows)))
        stacks = BaseStacks(xh, sq)
        rows3 = _within(dist, 3)
        h0 = _replace_rows(model.h0, rows3, h0_from_stacks(g2, stacks, cfg.blocks, rows3))
        a1 = _replace_rows(model.a1, N, apply_phi(propagate(g2, h0, N), cfg.phi))
        tree.update(a1, Y, tr, _tree_rows(ds, ds2, N))
    stats = tree.stats(cfg.lam)
    W1 = scipy.linalg.cho_solve(cholesky(shifted(stats.G, cfg.lam)), stats.b, check_finite=False)
    out = assemble_lcfnet(ds2, cfg, stacks, h0, model.leaf_sizes, first_layer=(a1, W1, tree))
    return out, N


def unlearn_khop(model, ds: Dataset, req: ForgetRequest):
    """Local unlearning; returns (model', report). ``model`` is left untouched."""
    if not locality_eligible(model):
        raise NotLocalityEligible(
            "only Pipeline A and single-layer unwhitened LCF-Net models have a local update")
    _require_caches(model)
    t0 = time.perf_counter()
    ds2, S = apply_forget(ds, req)
    if isinstance(model, PipelineAModel):
        out, N = _khop_a(model, ds, ds2, req, S)
        out.raw_scores()
    else:
        out, N = _khop_lcf(model, ds, ds2, req, S)
    elapsed = time.perf_counter() - t0
    rep = UnlearnReport("khop", req.kind, req.size, wall_clock={"khop": elapsed},
                        affected_size=int(training_rows(ds)[N].sum()),
                        neighborhood_size=len(N), touched_rows=len(N))
    return out, rep


def unlearn_full(model, ds: Dataset, req: ForgetRequest):
    """Closed-form re-solve on the modified inputs; returns (model', report)."""
    t0 = time.perf_counter()
    ds2, S = apply_forget(ds, req)
    if isinstance(model, PipelineAModel) and req.kind == "label" and model.H is not None:
        # features are untouched by a label change; rebuild the statistics and re-factor
        cfg = model.config
        Y = np.ascontiguousarray(smooth_labels(ds2.targets(), cfg.epsilon), dtype=cfg.dtype)
        tree = GramTree.build(model.H, Y, training_rows(ds2), model.leaf_size, cfg.dtype)
        stats = tree.stats(cfg.alpha)
        factor = cholesky(shifted(stats.G, stats.alpha))
        W = scipy.linalg.cho_solve(factor, stats.b, check_finite=False)
        out = replace(model, W=W, stats=stats, tree=tree, factor=factor, targets=Y)
        out.raw_scores()
    elif isinstance(model, PipelineAModel):
        out = fit_a(ds2, model.config, leaf_size=model.leaf_size)
        out.raw_scores()
    elif isinstance(model, LcfNetModel):
        out = fit_lcfnet(ds2, model.config, leaf_sizes=model.leaf_sizes)
    else:
        raise KindMismatch(f"unsupported model type {type(model).__name__}")
    elapsed = time.perf_counter() - t0
    return out, UnlearnReport("full", req.kind, req.size, wall_clock={"full": elapsed},
                              affected_size=int(ds.train_mask.sum()))


def unlearn_krr_label_smw(model: LcfNetModel, ds: Dataset, req: ForgetRequest):
    """EXPERIMENTAL Schur-complement (Woodbury) label-deletion update for KRR-only models.

    With A = K_tr + λ'I factored at fit time, dropping the rows/columns F of
    the forgotten labels gives, for the kept set R and Z = A^{-1} E_F,

        A_RR^{-1} y_R = x_R - Z_R Z_F^{-1} x_F,    x = A^{-1} [y_R; 0],

    at O(n_tr^2 |F|) instead of a new O(n_tr^3) factorization. It applies
    only when the remaining kernel entries are unchanged: no whitening and a
    fixed bandwidth (``LcfConfig.sigma``). The result is equal to retraining
    up to rounding, not bitwise; check it with :func:`verify_exact`.
    """
    cfg = model.config
    if req.kind != "label" or not isinstance(model, LcfNetModel) or cfg.use_lcf:
        raise NotLocalityEligible("the Woodbury path covers label forget on KRR-only models")
    if cfg.whiten or cfg.sigma is None:
        raise NotLocalityEligible("the Woodbury path needs whiten=False and a fixed sigma")
    if model.head.factor is None:
        raise ValidationError("kernel factor not cached; refit or attach the model")
    t0 = time.perf_counter()
    ds2, _ = apply_forget(ds, req)
    gone = np.isin(model.train_ids, forget_nodes_of(req))
    Y = ds2.targets()
    y = np.zeros((len(model.train_ids), Y.shape[1]))
    y[~gone] = Y[model.train_ids[~gone]]
    x = scipy.linalg.cho_solve(model.head.factor, y, check_finite=False)
    E = np.zeros((len(gone), int(gone.sum())))
    E[np.flatnonzero(gone), np.arange(E.shape[1])] = 1.0
    Z = scipy.linalg.cho_solve(model.head.factor, E, check_finite=False)
    dual = x[~gone] - Z[~gone] @ np.linalg.solve(Z[gone], x[gone])
    head = replace(model.head, dual=dual, train_repr=model.head.train_repr[~gone], factor=None)
    out = replace(model, head=head, train_ids=model.train_ids[~gone], targets=Y)
    elapsed = time.perf_counter() - t0
    return out, UnlearnReport("khop", req.kind, req.size, wall_clock={"khop": elapsed},
                              affected_size=int(gone.sum()), touched_rows=int(gone.sum()))


def unlearn(model, ds, req, strategy="khop"):
    if strategy == "khop":
        return unlearn_khop(model, ds, req)
    if strategy == "full":
        return unlearn_full(model, ds, req)
    if strategy == "retrain":
        t0 = time.perf_counter()
        ds2, _ = apply_forget(ds, req)
        out = retrain_from_scratch(model, ds2)
        return out, UnlearnReport("retrain", req.kind, req.size,
                                  wall_clock={"retrain": time.perf_counter() - t0})
    raise ValidationError(f"strategy must be one of {STRATEGIES}")


# --- verification --------------------------------------------------------------

def probabilities(scores, multilabel=False):
    """Row softmax (or elementwise sigmoid for multi-label scores)."""
    s = np.asarray(scores, dtype=np.float64)
    if multilabel:
        return 1.0 / (1.0 + np.exp(-s))
    z = np.exp(s - s.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def _check_same_kind(a, b):
    if type(a) is not type(b) or a.config != b.config:
        raise KindMismatch("models differ in kind or configuration")


def weight_delta(a, b):
    _check_same_kind(a, b)
    wa, wb = a.weights(), b.weights()
    if len(wa) != len(wb) or any(x.shape != y.shape for x, y in zip(wa, wb)):
        return float("inf")
    return max(float(np.max(np.abs(x.astype(np.float64) - y.astype(np.float64)), initial=0.0))
               for x, y in zip(wa, wb))


@dataclass(frozen=True)
class MiaResult:
    auc: float
    auc_retrained: float
    small_sample: bool

    @property
    def gap(self):
        return self.auc - self.auc_retrained


def _confidence_auc(conf, forget, holdout):
    scores = np.concatenate([conf[forget], conf[holdout]])
    if np.all(scores == scores[0]):
        return 0.5
    labels = np.concatenate([np.ones(len(forget), bool), np.zeros(len(holdout), bool)])
    return roc_auc(scores, labels)


def mia_attack(model_unlearned, model_retrained, ds: Dataset, forget_nodes, holdout_nodes):
    """Confidence-threshold membership inference.

    Score = max softmax probability per node when the model is queried with
    the records in ``ds`` (pass the pre-forget dataset: the attacker holds the
    original records). AUC separates forget nodes (positives) from
    never-trained holdout nodes, under each model.
    """
    forget = as_nodeset(forget_nodes, ds.n)
    holdout = as_nodeset(holdout_nodes, ds.n)
    if not len(forget) or not len(holdout):
        raise DegenerateSets("forget and holdout sets must both be non-empty")
    aucs = []
    for m in (model_unlearned, model_retrained):
        conf = probabilities(predict(m, ds, fresh=True), ds.multilabel).max(axis=1)
        aucs.append(_confidence_auc(conf, forget, holdout))
    return MiaResult(aucs[0], aucs[1], len(forget) < SMALL_FORGET)


def default_holdout(ds: Dataset, forget_nodes, seed=0, size=None):
    """Never-trained test nodes, disjoint from the forget set."""
    pool = np.setdiff1d(np.flatnonzero(ds.test_mask & ~ds.removed), forget_nodes)
    size = len(pool) if size is None else min(size, len(pool))
    return np.sort(philox(seed).choice(pool, size=size, replace=False))


def forget_nodes_of(req: ForgetRequest):
    return as_nodeset(req.targets)


def verify_exact(model_unlearned, model_retrained, ds: Dataset, forget_nodes=None, holdout_nodes=None,
                 query_ds=None):
    """Compare an unlearned model with the retrain reference on ``ds`` (post-forget).

    The membership attack queries ``query_ds`` (default ``ds``).
    """
    _check_same_kind(model_unlearned, model_retrained)
    rep = UnlearnReport("verify", delta_theta=weight_delta(model_unlearned, model_retrained))
    alive = ~ds.removed
    pu = probabilities(predict(model_unlearned, ds), ds.multilabel)[alive]
    pr = probabilities(predict(model_retrained, ds), ds.multilabel)[alive]
    rep.prob_equal = bool(np.array_equal(pu, pr))
    if ds.multilabel:
        rep.pred_agreement = float(np.mean((pu > 0.5) == (pr > 0.5)))
    else:
        rep.pred_agreement = float(np.mean(predict_labels(pu) == predict_labels(pr)))
    if forget_nodes is not None and holdout_nodes is not None and len(forget_nodes) and len(holdout_nodes):
        mia = mia_attack(model_unlearned, model_retrained, ds if query_ds is None else query_ds,
                         forget_nodes, holdout_nodes)
        rep.mia_auc, rep.mia_auc_retrained, rep.small_sample = mia.auc, mia.auc_retrained, mia.small_sample
    return rep


def unlearn_and_verify(model, ds: Dataset, req: ForgetRequest, strategy="khop", seed=0):
    """One exactness row: unlearn, retrain, compare, attack."""
    out, rep = unlearn(model, ds, req, strategy)
    ds2, _ = apply_forget(ds, req)
    t0 = time.perf_counter()
    ref = retrain_from_scratch(model, ds2)
    rep.wall_clock["retrain"] = time.perf_counter() - t0
    forget = forget_nodes_of(req)
    holdout = default_holdout(ds2, forget, seed)
    v = verify_exact(out, ref, ds2, forget, holdout if len(holdout) else None, query_ds=ds)
    rep.delta_theta, rep.prob_equal, rep.pred_agreement = v.delta_theta, v.prob_equal, v.pred_agreement
    rep.mia_auc, rep.mia_auc_retrained, rep.small_sample = v.mia_auc, v.mia_auc_retrained, v.small_sample
    if ds.test_mask.any() and ds2.test_mask.any():
        rep.test_delta = evaluate(predict(ref, ds2), ds2, ds2.test_mask) - \
            evaluate(predict(model, ds), ds, ds.test_mask)
    return out, rep


# --- benchmark -----------------------------------------------------------------

BENCH_COLUMNS = ("kind", "forget_size", "neighborhood_size", "t_khop", "t_full", "t_retrain", "speedup")


def _best_time(fn, repeats):
    best, result = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_unlearn(ds: Dataset, model, forget_grid, seed=0, repeats=3, retrain=True):
    """Time khop / full / retrain for each (kind, size); returns a list of row dicts.

    Times are the best of ``repeats`` runs and include the full-graph score
    refresh for Pipeline A.
    """
    rows = []
    for i, (kind, size) in enumerate(forget_grid):
        req = sample_forget_request(ds, kind, size, seed + i)
        t_khop = nb = None
        if locality_eligible(model):
            t_khop, (_, rep) = _best_time(lambda: unlearn_khop(model, ds, req), repeats)
            nb = rep.neighborhood_size
        t_full, _ = _best_time(lambda: unlearn_full(model, ds, req), repeats)
        t_ret = None
        if retrain:
            t_ret, _ = _best_time(lambda: unlearn(model, ds, req, "retrain"), repeats)
        rows.append({"kind": kind, "forget_size": req.size, "neighborhood_size": nb,
                     "t_khop": t_khop, "t_full": t_full, "t_retrain": t_ret,
                     "speedup": t_full / t_khop if t_khop else None})
    return rows


def bench_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else (f"{r[k]:.6g}" if isinstance(r[k], float) else r[k]))
                    for k in BENCH_COLUMNS})
    return buf.getvalue()
