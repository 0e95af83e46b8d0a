import json
from dataclasses import replace

import numpy as np
import pytest

from cfgraph import (ForgetRequest, Graph, LcfConfig, PipelineAConfig, RffParams, fit_a, fit_lcfnet,
                     k_hop_neighborhood, unlearn, unlearn_full, unlearn_khop, verify_exact)
from cfgraph.errors import DegenerateSets, KindMismatch, NotLocalityEligible, ValidationError
from cfgraph.unlearn import (apply_forget, bench_csv, bench_unlearn, default_holdout, mia_attack,
                             predict, retrain_from_scratch, sample_forget_request,
                             unlearn_and_verify, unlearn_krr_label_smw, weight_delta)

KINDS = ("label", "feature", "edge", "node", "subgraph")


def _exact(out, ref, ds2):
    rep = verify_exact(out, ref, ds2)
    return rep.delta_theta == 0.0 and rep.prob_equal


@pytest.mark.parametrize("kind", KINDS)
def test_khop_pipeline_a_is_bitwise(heterophilous, kind):
    ds = heterophilous
    m = fit_a(ds, PipelineAConfig(K=2, epsilon=0.1, leaf_size=16))
    req = sample_forget_request(ds, kind, 6, seed=1)
    out, rep = unlearn_khop(m, ds, req)
    ds2, S = apply_forget(ds, req)
    assert _exact(out, retrain_from_scratch(m, ds2), ds2)
    L = 0 if kind == "label" else 2
    assert rep.touched_rows == len(k_hop_neighborhood(ds.graph, S, L))


@pytest.mark.parametrize("kind", KINDS)
def test_khop_lcf_is_bitwise(homophilous, kind):
    ds = homophilous
    m = fit_lcfnet(ds, LcfConfig(K=1, phi="tanh", whiten=False, leaf_size=16))
    req = sample_forget_request(ds, kind, 5, seed=2)
    out, rep = unlearn_khop(m, ds, req)
    ds2, _ = apply_forget(ds, req)
    assert _exact(out, retrain_from_scratch(m, ds2), ds2)
    assert rep.neighborhood_size <= ds.n


@pytest.mark.parametrize("kind", KINDS)
def test_full_equals_retrain(homophilous, kind):
    ds = homophilous
    for m in (fit_a(ds, PipelineAConfig(K=1)), fit_lcfnet(ds, LcfConfig(K=2))):
        req = sample_forget_request(ds, kind, 4, seed=3)
        out, _ = unlearn_full(m, ds, req)
        ds2, _ = apply_forget(ds, req)
        assert _exact(out, retrain_from_scratch(m, ds2), ds2)


def test_not_locality_eligible(homophilous):
    req = sample_forget_request(homophilous, "edge", 2)
    for cfg in (LcfConfig(K=2, whiten=False), LcfConfig(K=1, whiten=True)):
        with pytest.raises(NotLocalityEligible):
            unlearn_khop(fit_lcfnet(homophilous, cfg), homophilous, req)


def test_far_node_leaves_weights_unchanged(homophilous):
    ds = homophilous
    # append a 4-node path of unlabelled nodes, far from every training node
    n = ds.n
    edges = np.vstack([ds.graph.edges, [[n, n + 1], [n + 1, n + 2], [n + 2, n + 3]]])
    pad = np.zeros(4, bool)
    ds = ds.with_(graph=Graph.from_edges(n + 4, edges), X=np.vstack([ds.X, np.ones((4, ds.X.shape[1]))]),
                  y=np.concatenate([ds.y, [-1] * 4]), train_mask=np.concatenate([ds.train_mask, pad]),
                  val_mask=np.concatenate([ds.val_mask, pad]), test_mask=np.concatenate([ds.test_mask, pad]),
                  removed=np.zeros(n + 4, bool))
    m = fit_a(ds, PipelineAConfig(K=2))
    out, rep = unlearn_khop(m, ds, ForgetRequest("node", [n + 1]))
    assert np.array_equal(out.W, m.W) and rep.affected_size == 0


def test_repeat_forget_is_noop(homophilous):
    ds = homophilous
    m = fit_a(ds, PipelineAConfig(K=2))
    req = sample_forget_request(ds, "label", 3)
    out, _ = unlearn_khop(m, ds, req)
    ds2, _ = apply_forget(ds, req)
    again, _ = unlearn_khop(out, ds2, req)
    assert np.array_equal(again.W, out.W)


def test_label_forget_validation(homophilous):
    ds = homophilous
    val_node = np.flatnonzero(ds.val_mask)[:1]
    with pytest.raises(ValidationError):
        apply_forget(ds, ForgetRequest("label", val_node))
    ds2, S = apply_forget(ds, ForgetRequest("label", ds.train_ids[:2]))
    assert ds2.y[ds.train_ids[0]] == -1 and not ds2.train_mask[ds.train_ids[:2]].any()
    assert np.array_equal(ds2.X, ds.X)


def test_node_forget_marks_removed(homophilous):
    ds = homophilous
    v = int(ds.graph.edges[0, 0])
    ds2, S = apply_forget(ds, ForgetRequest("node", [v]))
    assert ds2.removed[v] and not ds2.X[v].any() and len(ds2.graph.neighbors(v)) == 0
    assert set(ds.graph.neighbors(v)) <= set(S.tolist())


def test_caches_required(homophilous):
    m = fit_a(homophilous, PipelineAConfig())
    bare = replace(m, H=None)
    with pytest.raises(ValidationError):
        unlearn_khop(bare, homophilous, sample_forget_request(homophilous, "edge", 1))
    with pytest.raises(ValidationError):
        unlearn(m, homophilous, sample_forget_request(homophilous, "edge", 1), "bogus")


def test_verify_detector(homophilous):
    ds = homophilous
    m = fit_a(ds, PipelineAConfig())
    rep = verify_exact(m, m, ds, [0, 1], default_holdout(ds, [0, 1]))
    assert rep.delta_theta == 0.0 and rep.pred_agreement == 1.0 and rep.prob_equal
    assert rep.mia_auc == rep.mia_auc_retrained and rep.small_sample
    W = m.W.copy()
    W[0, 0] += 1e-3
    rep = verify_exact(replace(m, W=W), m, ds)
    assert rep.delta_theta == pytest.approx(1e-3, rel=1e-9) and not rep.prob_equal
    with pytest.raises(KindMismatch):
        weight_delta(m, fit_a(ds, PipelineAConfig(K=3)))


def test_mia_gap_and_positive_control(homophilous):
    ds = homophilous
    m = fit_a(ds, PipelineAConfig(K=0, alpha=1e-3, variant="multihop-rff", rff=RffParams(sigma=1.0)))
    req = sample_forget_request(ds, "label", 50, seed=4)
    out, rep = unlearn_and_verify(m, ds, req)
    assert rep.delta_theta == 0.0 and rep.mia_auc == rep.mia_auc_retrained
    ds2, _ = apply_forget(ds, req)
    ref = retrain_from_scratch(m, ds2)
    forget = req.targets
    res = mia_attack(m, ref, ds, forget, default_holdout(ds2, forget))
    assert res.gap > 0.05 and not res.small_sample
    with pytest.raises(DegenerateSets):
        mia_attack(m, ref, ds, [], [1])
    assert set(json.loads(json.dumps(rep.to_json()))) >= {"delta_theta", "mia", "test_delta", "t_A", "speedup"}


def test_smw_label_path(homophilous):
    ds = homophilous
    m = fit_lcfnet(ds, LcfConfig(use_lcf=False, whiten=False, sigma=1.5))
    req = sample_forget_request(ds, "label", 10, seed=5)
    out, _ = unlearn_krr_label_smw(m, ds, req)
    ds2, _ = apply_forget(ds, req)
    ref = retrain_from_scratch(m, ds2)
    assert weight_delta(out, ref) <= 1e-10
    assert np.array_equal(out.train_ids, ref.train_ids)
    with pytest.raises(NotLocalityEligible):
        unlearn_krr_label_smw(fit_lcfnet(ds, LcfConfig(use_lcf=False, whiten=False)), ds, req)


def test_bench_rows(homophilous):
    m = fit_a(homophilous, PipelineAConfig(K=2))
    rows = bench_unlearn(homophilous, m, [("edge", 3), ("label", 3)], repeats=1)
    assert [r["kind"] for r in rows] == ["edge", "label"]
    assert all(r["t_khop"] > 0 and r["t_full"] > 0 and r["t_retrain"] > 0 for r in rows)
    csv = bench_csv(rows)
    assert csv.splitlines()[0] == "kind,forget_size,neighborhood_size,t_khop,t_full,t_retrain,speedup"
    assert len(csv.splitlines()) == 3


def test_predict_rejects_unknown_model(homophilous):
    with pytest.raises(KindMismatch):
        predict(object(), homophilous)
