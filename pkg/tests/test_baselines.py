from dataclasses import replace

import numpy as np
import pytest

from evossl import linear
from evossl.baselines import (
    BaselineConfig,
    feature_halves,
    knn_affinity,
    label_spreading,
    normalized_affinity,
    run_baseline,
    run_cotraining,
    run_label_spreading,
    run_self_training,
    run_supervised_refs,
)
from evossl.data import Dataset, LabeledResample, make_split, resample_labeled
from evossl.synthetic import gaussian_blobs

CFG = BaselineConfig()


def test_unreachable_threshold_is_supervised(blobs, blob_split):
    plan, rs = blob_split
    st = run_self_training(blobs, plan, rs, replace(CFG, tau_fixed=1.01))
    lr = run_supervised_refs(blobs, plan, rs, CFG, which=("lr_ref",))[0]
    assert st.pseudo_added == 0
    assert st.test_macro_f1 == lr.test_macro_f1


def test_empty_pool_is_supervised(blobs, blob_split):
    plan, rs = blob_split
    empty = LabeledResample(rs.L0_idx, np.array([], dtype=np.int64), 0)
    st = run_self_training(blobs, plan, empty, CFG)
    lr = run_supervised_refs(blobs, plan, empty, CFG, which=("lr_ref",))[0]
    assert st.test_macro_f1 == lr.test_macro_f1


def test_full_labels_st_equals_lr():
    ds = gaussian_blobs(n=300, d=4, separation=5.0, seed=5)  # Bayes error about 0.6%
    plan = make_split(ds, 1.0, 0)
    rs = resample_labeled(plan, ds, 0)
    assert len(rs.U0_idx) == 0
    st = run_self_training(ds, plan, rs, replace(CFG, tau_fixed=1.01))
    lr = run_supervised_refs(ds, plan, rs, CFG, which=("lr_ref",))[0]
    assert st.test_macro_f1 == lr.test_macro_f1
    assert lr.test_macro_f1 > 0.95


def test_st_not_worse_than_supervised_on_separable_blobs():
    ds = gaussian_blobs(n=600, d=6, informative=3, separation=3.0, seed=8)
    st_scores, lr_scores = [], []
    for seed in range(10):
        plan = make_split(ds, 0.05, seed)
        rs = resample_labeled(plan, ds, 0)
        st_scores.append(run_self_training(ds, plan, rs, CFG).test_macro_f1)
        lr_scores.append(run_supervised_refs(ds, plan, rs, CFG, which=("lr_ref",))[0].test_macro_f1)
    assert np.median(st_scores) >= np.median(lr_scores) - 0.02


def test_halves_partition():
    h1, h2 = feature_halves(20, np.random.default_rng(0))
    assert len(np.intersect1d(h1, h2)) == 0
    assert sorted(np.concatenate([h1, h2]).tolist()) == list(range(20))
    h1b, _ = feature_halves(20, np.random.default_rng(0))
    assert np.array_equal(h1, h1b)
    assert (len(h1), len(h2)) == (10, 10)
    assert len(feature_halves(7, np.random.default_rng(0))[0]) == 4


def test_hco_deterministic_and_reports_split(blobs, blob_split):
    plan, rs = blob_split
    a, b = run_cotraining(blobs, plan, rs, CFG), run_cotraining(blobs, plan, rs, CFG)
    assert a.to_dict() | {"duration_s": 0} == b.to_dict() | {"duration_s": 0}
    cols = a.extra["view_columns"]
    assert sorted(cols[0] + cols[1]) == list(range(blobs.d))


def test_hco_duplicated_views_track_st():
    base = gaussian_blobs(n=400, d=1, informative=1, separation=2.0, seed=2)
    X = np.hstack([base.features, base.features])
    ds = Dataset("dup", X, base.labels, 2, ["a", "b"], base.class_names)
    diffs = []
    for seed in range(5):
        plan = make_split(ds, 0.05, seed)
        rs = resample_labeled(plan, ds, 0)
        diffs.append(run_cotraining(ds, plan, rs, CFG).test_macro_f1 - run_self_training(ds, plan, rs, CFG).test_macro_f1)
    assert abs(np.median(diffs)) < 0.05


def test_hco_single_feature_flag():
    ds = gaussian_blobs(n=200, d=1, informative=1, seed=1)
    plan = make_split(ds, 0.1, 0)
    s = run_cotraining(ds, plan, resample_labeled(plan, ds, 0), CFG)
    assert s.method == "hco" and s.extra["degenerate_single_feature"]


def _toy_graph():
    W = np.zeros((6, 6))
    for block in ((0, 1, 2), (3, 4, 5)):
        for i in block:
            for j in block:
                if i != j:
                    W[i, j] = 1.0
    Y = np.zeros((6, 2))
    Y[0, 0] = 1
    Y[3, 1] = 1
    return W, Y


def test_label_spreading_closed_form():
    W, Y = _toy_graph()
    res = label_spreading(W, Y, alpha=0.9, tol=1e-12, max_iter=10_000)
    S = normalized_affinity(W)
    F = 0.1 * np.linalg.solve(np.eye(6) - 0.9 * S, Y)
    assert res.labels.tolist() == np.argmax(F, 1).tolist() == [0, 0, 0, 1, 1, 1]
    np.testing.assert_allclose(res.F, F / F.sum(1, keepdims=True), atol=1e-9)
    np.testing.assert_allclose(res.F.sum(1), 1.0, atol=1e-9)


def test_small_alpha_keeps_clamped_labels():
    W, Y = _toy_graph()
    res = label_spreading(W, Y, alpha=1e-3)
    assert res.labels[0] == 0 and res.labels[3] == 1
    assert res.F[0, 0] > 0.99


def test_unreached_component_uniform():
    W, Y = _toy_graph()
    Y[3] = 0
    res = label_spreading(W, Y)
    assert res.unreached.tolist() == [3, 4, 5]
    np.testing.assert_allclose(res.F[3:], 0.5)
    assert res.labels[3:].tolist() == [0, 0, 0]


def test_identical_features_follow_majority():
    W = knn_affinity(np.zeros((8, 3)), 7)
    assert np.all(W[~np.eye(8, dtype=bool)] == 1.0)
    Y = np.zeros((8, 2))
    Y[0, 1] = Y[1, 1] = Y[2, 0] = 1
    assert label_spreading(W, Y).labels[3:].tolist() == [1] * 5


def test_knn_graph_symmetric(rng):
    W = knn_affinity(rng.normal(size=(30, 3)), 4)
    assert np.array_equal(W, W.T)
    assert np.all(np.diag(W) == 0)
    assert (W > 0).sum(1).min() >= 4


def test_ls_run_modes(blobs, blob_split):
    plan, rs = blob_split
    trans = run_label_spreading(blobs, plan, rs, CFG)
    ind = run_label_spreading(blobs, plan, rs, replace(CFG, ls_transductive=False))
    assert trans.probe_drop is None
    assert 0 <= trans.test_macro_f1 <= 1 and 0 <= ind.test_macro_f1 <= 1


def test_shared_split_hash(blobs, blob_split):
    plan, rs = blob_split
    hashes = {run_baseline(m, blobs, plan, rs, CFG).split_hash for m in ("st", "hco", "ls", "lr_ref", "svm_ref")}
    assert hashes == {plan.digest()}


def test_svm_reference_deterministic(blobs, blob_split):
    plan, rs = blob_split
    a = run_baseline("svm_ref", blobs, plan, rs, CFG)
    b = run_baseline("svm_ref", blobs, plan, rs, CFG)
    assert a.test_macro_f1 == b.test_macro_f1


def test_probe_never_labeled(blobs, blob_split):
    # the ST and HCo loops only ever draw from the resample's pool
    plan, rs = blob_split
    assert len(np.intersect1d(rs.U0_idx, plan.probe_idx)) == 0
    assert len(np.intersect1d(rs.L0_idx, plan.probe_idx)) == 0


def test_bad_config():
    with pytest.raises(ValueError):
        BaselineConfig(ls_alpha=1.0)
    with pytest.raises(ValueError):
        BaselineConfig.from_dict({"nope": 1})
