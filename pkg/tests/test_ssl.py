import json

import numpy as np
import pytest

from evossl import linear
from evossl.data import LabeledResample
from evossl.policy import ClassifierGenes, PolicyDomain, PolicyGenotype, random_policy, threshold_at
from evossl.ssl import (
    MAX_ITERS,
    NO_ACCEPTANCE,
    SslOutcome,
    ViewData,
    fused_proba,
    predict_final,
    run_ssl,
    select_pseudo_labels,
)
from evossl.views import ViewDomain, ViewGenotype, build_views, identity_views, random_view


def test_empty_pool_is_supervised(blobs, blob_split):
    plan, rs = blob_split
    empty = LabeledResample(rs.L0_idx, np.array([], dtype=np.int64), 0)
    out = run_ssl(blobs, empty, identity_views(blobs.d), PolicyGenotype(), plan.probe_idx)
    assert out.pseudo_added == 0
    assert out.stop_reason == NO_ACCEPTANCE
    assert out.iterations_run == 1
    ref = linear.fit(blobs.features[rs.L0_idx], blobs.labels[rs.L0_idx], n_classes=2)
    np.testing.assert_allclose(out.final_models[0].W, ref.W)


def test_veto_removes_nothing_for_identical_views(blobs, blob_split):
    plan, rs = blob_split
    b = PolicyGenotype(tau0=0.6, tau_min=0.6, q=50, nu=True, T=3)
    out = run_ssl(blobs, rs, identity_views(blobs.d), b, plan.probe_idx)
    for row in out.iteration_log:
        c = row["candidates_after_each_filter"]
        assert c["veto"] == c["confidence"]


def test_unreachable_threshold_adds_nothing(blobs, blob_split):
    plan, rs = blob_split
    b = PolicyGenotype(theta_clf=ClassifierGenes(l2=1e4), tau0=0.999, tau_min=0.999)
    vd = ViewData.build(identity_views(blobs.d), blobs.features, plan.pool_idx)
    m = linear.fit(vd.X1[rs.L0_idx], blobs.labels[rs.L0_idx], n_classes=2, l2=1e4)
    # oracle: every posterior on the pool sits below the threshold
    assert m.predict_proba(vd.X1[rs.U0_idx]).max() < 0.999
    out = run_ssl(blobs, rs, identity_views(blobs.d), b, plan.probe_idx, views=vd)
    assert out.pseudo_added == 0


def test_tie_rule_prefers_class_zero():
    class Fixed:
        def __init__(self, P):
            self.P = np.array(P)

        def predict_proba(self, X):
            return np.repeat(self.P[None], len(X), axis=0)

    out = SslOutcome((Fixed([0.6, 0.4]), Fixed([0.4, 0.6])), np.array([]), np.array([]), 0, 0, 0, [], 0, 0, 0, MAX_ITERS)
    t = build_views(identity_views(2), np.eye(2))
    assert predict_final(out, t, np.zeros((3, 2))).tolist() == [0, 0, 0]


def test_identical_views_equal_single_model(blobs, blob_split):
    plan, rs = blob_split
    out = run_ssl(blobs, rs, identity_views(blobs.d), PolicyGenotype(T=2), plan.probe_idx)
    X = blobs.features[plan.test_idx]
    t = build_views(identity_views(blobs.d), blobs.features[plan.pool_idx])
    np.testing.assert_array_equal(predict_final(out, t, X), out.final_models[0].predict(X))


def test_fusion_not_worse_than_weaker_view(blobs, blob_split):
    plan, rs = blob_split
    a = ViewGenotype(np.array([1, 1, 1, 0, 0, 0], bool), np.array([1, 0, 1, 1, 0, 1], bool), False, False, 2, 2, 0, 0, 0)
    vd = ViewData.build(a, blobs.features, plan.pool_idx)
    out = run_ssl(blobs, rs, a, PolicyGenotype(T=3), plan.probe_idx, views=vd)
    test = plan.test_idx
    y = blobs.labels[test]
    acc1 = np.mean(out.final_models[0].predict(vd.X1[test]) == y)
    acc2 = np.mean(out.final_models[1].predict(vd.X2[test]) == y)
    fused = np.mean(np.argmax(fused_proba(out.final_models, vd.X1[test], vd.X2[test]), 1) == y)
    assert fused >= min(acc1, acc2) - 0.05


def test_selection_order_and_cap():
    P1 = np.array([[0.95, 0.05], [0.97, 0.03], [0.95, 0.05], [0.2, 0.8], [0.5, 0.5]])
    P2 = np.full_like(P1, 0.5)
    u = np.array([40, 10, 30, 20, 50])
    pos, lab, counts = select_pseudo_labels(P1, P2, u, 0.8, 0.0, False, q=2)
    # class 0: conf 0.97 (idx 10) then the 0.95 tie resolved to idx 30 over 40
    assert sorted(u[pos].tolist()) == [10, 20, 30]
    assert counts["confidence"] == 4


def test_label_from_more_confident_view():
    P1 = np.array([[0.85, 0.15]])
    P2 = np.array([[0.1, 0.9]])
    _, lab, _ = select_pseudo_labels(P1, P2, np.array([0]), 0.8, 0.0, False, 5)
    assert lab.tolist() == [1]
    _, lab, _ = select_pseudo_labels(P1, P2, np.array([0]), 0.8, 0.0, True, 5)
    assert lab.tolist() == []


def test_margin_filter():
    P1 = np.array([[0.6, 0.4], [0.9, 0.1]])
    pos, _, c = select_pseudo_labels(P1, P1, np.array([0, 1]), 0.5, 0.5, False, 5)
    assert pos.tolist() == [1] and c["margin"] == 1


def test_loop_invariants_random_genotypes(blobs, blob_split, tmp_path):
    plan, rs = blob_split
    rng = np.random.default_rng(5)
    vdom, pdom = ViewDomain.for_features(blobs.d), PolicyDomain()
    for i in range(25):
        a, b = random_view(vdom, rng), random_policy(pdom, rng)
        out = run_ssl(blobs, rs, a, b, plan.probe_idx, seed=i)
        assert out.pseudo_added == sum(out.per_iter_added) == out.L_final_size - len(rs.L0_idx)
        assert 0 <= out.pseudo_added <= len(rs.U0_idx)
        assert out.iterations_run <= b.T
        assert len(np.intersect1d(out.L_final_idx, plan.probe_idx)) == 0
        assert len(np.unique(out.L_final_idx)) == out.L_final_size
        for row in out.iteration_log:
            assert max(row["accepted_per_class"]) <= b.q
            assert row["tau_t"] == threshold_at(b, row["t"])
            c = list(row["candidates_after_each_filter"].values())
            assert c == sorted(c, reverse=True)
        # replay: every accepted index passed the confidence filter at its iteration
        if out.iteration_log:
            out.write_log(tmp_path / "log.jsonl")
            rows = [json.loads(x) for x in (tmp_path / "log.jsonl").read_text().splitlines()]
            assert len(rows) == len(out.iteration_log)


def test_acceptance_replay(blobs, blob_split):
    plan, rs = blob_split
    a = identity_views(blobs.d)
    b = PolicyGenotype(tau0=0.8, delta_tau=0.02, tau_min=0.7, q=15, T=4)
    vd = ViewData.build(a, blobs.features, plan.pool_idx)
    out = run_ssl(blobs, rs, a, b, plan.probe_idx, views=vd)
    L, lab = list(rs.L0_idx), list(blobs.labels[rs.L0_idx])
    for row in out.iteration_log:
        m = linear.fit(vd.X1[L], np.array(lab), n_classes=2)
        acc = row.get("accepted_idx", [])
        if acc:
            P = m.predict_proba(vd.X1[acc])
            assert P.max(1).min() >= row["tau_t"]
        L += acc
        lab += out.L_final_labels[len(lab): len(lab) + len(acc)].tolist()
    assert len(L) == out.L_final_size
