"""Two-view pseudo-labeling loop with per-iteration acceptance diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import linear
from .data import Dataset, LabeledResample
from .metrics import macro_f1_score
from .policy import PolicyGenotype, threshold_at
from .views import ViewGenotype, ViewTransform, build_views

MAX_ITERS = "max_iters"
NO_ACCEPTANCE = "no_acceptance"
POOL_EXHAUSTED = "pool_exhausted"


@dataclass
class ViewData:
    """Both view transforms plus the transformed feature matrix for every row."""

    transforms: tuple[ViewTransform, ViewTransform]
    X1: np.ndarray
    X2: np.ndarray

    @classmethod
    def build(cls, a: ViewGenotype, features: np.ndarray, fit_rows) -> "ViewData":
        t1, t2 = build_views(a, features[np.asarray(fit_rows)])
        return cls((t1, t2), t1.apply(features), t2.apply(features))


@dataclass
class SslOutcome:
    final_models: tuple[linear.LinearClassifier, linear.LinearClassifier]
    L_final_idx: np.ndarray
    L_final_labels: np.ndarray
    L0_size: int
    U0_size: int
    pseudo_added: int
    per_iter_added: list[int]
    probe_before: float
    probe_after: float
    iterations_run: int
    stop_reason: str
    iteration_log: list[dict] = field(default_factory=list)

    @property
    def L_final_size(self) -> int:
        return len(self.L_final_idx)

    @property
    def probe_drop(self) -> float:
        return self.probe_before - self.probe_after

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            for row in self.iteration_log:
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def fused_proba(models, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    return 0.5 * (models[0].predict_proba(X1) + models[1].predict_proba(X2))


def predict_final(out: SslOutcome, views, X: np.ndarray) -> np.ndarray:
    """Argmax of the mean view posterior (ties go to the lower class index)."""
    t1, t2 = views
    return np.argmax(fused_proba(out.final_models, t1.apply(X), t2.apply(X)), axis=1)


def _fit_pair(vd: ViewData, rows, labels, n_classes, b: PolicyGenotype, seed):
    clf = b.theta_clf
    kw = dict(n_classes=n_classes, l2=clf.l2, max_epochs=clf.max_epochs, seed=seed, calibrate=clf.calibrate)
    return (
        linear.fit(vd.X1[rows], labels, **kw),
        linear.fit(vd.X2[rows], labels, **kw),
    )


def _probe_score(models, vd: ViewData, probe_idx, y, n_classes) -> float:
    if len(probe_idx) == 0:
        return 0.0
    pred = np.argmax(fused_proba(models, vd.X1[probe_idx], vd.X2[probe_idx]), axis=1)
    return macro_f1_score(y[probe_idx], pred, n_classes)


def select_pseudo_labels(P1, P2, u_idx, tau, gamma, veto, q):
    """Apply the acceptance filters and per-class cap to one iteration's posteriors.

    Returns (accepted positions into ``u_idx``, their labels, filter counts).
    """
    c1, c2 = P1.max(axis=1), P2.max(axis=1)
    y1, y2 = P1.argmax(axis=1), P2.argmax(axis=1)
    conf = np.maximum(c1, c2)
    # view 1 wins exact confidence ties
    label = np.where(c1 >= c2, y1, y2)
    keep = conf >= tau
    counts = {"pool": int(len(u_idx)), "confidence": int(keep.sum())}
    if gamma > 0:
        s1, s2 = np.sort(P1, axis=1), np.sort(P2, axis=1)
        m1 = s1[:, -1] - s1[:, -2]
        m2 = s2[:, -1] - s2[:, -2]
        keep &= np.maximum(m1, m2) >= gamma
        counts["margin"] = int(keep.sum())
    if veto:
        keep &= y1 == y2
        counts["veto"] = int(keep.sum())
    cand = np.flatnonzero(keep)
    chosen = []
    for c in np.unique(label[cand]):
        members = cand[label[cand] == c]
        # descending confidence, then ascending sample index
        order = np.lexsort((u_idx[members], -conf[members]))
        chosen.append(members[order[:q]])
    pos = np.sort(np.concatenate(chosen)) if chosen else np.array([], dtype=np.int64)
    return pos, label[pos], counts


def run_ssl(
    ds: Dataset,
    rs: LabeledResample,
    a: ViewGenotype,
    b: PolicyGenotype,
    probe_idx,
    seed: int = 0,
    views: ViewData | None = None,
) -> SslOutcome:
    y = ds.labels
    C = ds.n_classes
    probe_idx = np.asarray(probe_idx, dtype=np.int64)
    if views is None:
        views = ViewData.build(a, ds.features, np.concatenate([rs.L0_idx, rs.U0_idx]))
    L_idx = rs.L0_idx.copy()
    L_lab = y[L_idx].copy()
    U_idx = rs.U0_idx.copy()
    per_iter, log = [], []
    stop = MAX_ITERS
    models = _fit_pair(views, L_idx, L_lab, C, b, seed)
    probe_before = _probe_score(models, views, probe_idx, y, C)
    stale = False
    t = 0
    for t in range(b.T):
        if stale:
            models = _fit_pair(views, L_idx, L_lab, C, b, seed)
            stale = False
        tau = threshold_at(b, t)
        if len(U_idx) == 0:
            log.append({"t": t, "tau_t": tau, "candidates_after_each_filter": {"pool": 0}, "accepted_per_class": [0] * C})
            per_iter.append(0)
            stop = NO_ACCEPTANCE
            break
        P1 = models[0].predict_proba(views.X1[U_idx])
        P2 = models[1].predict_proba(views.X2[U_idx])
        pos, lab, counts = select_pseudo_labels(P1, P2, U_idx, tau, b.gamma, b.nu, b.q)
        log.append(
            {
                "t": t,
                "tau_t": tau,
                "candidates_after_each_filter": counts,
                "accepted_per_class": np.bincount(lab, minlength=C).tolist(),
                "accepted_idx": U_idx[pos].tolist(),
            }
        )
        per_iter.append(len(pos))
        if len(pos) == 0:
            stop = NO_ACCEPTANCE
            break
        L_idx = np.concatenate([L_idx, U_idx[pos]])
        L_lab = np.concatenate([L_lab, lab])
        U_idx = np.delete(U_idx, pos)
        stale = True
        if len(U_idx) == 0:
            stop = POOL_EXHAUSTED
            break
    if stale:
        models = _fit_pair(views, L_idx, L_lab, C, b, seed)
    probe_after = _probe_score(models, views, probe_idx, y, C)
    added = int(sum(per_iter))
    return SslOutcome(
        final_models=models,
        L_final_idx=L_idx,
        L_final_labels=L_lab,
        L0_size=len(rs.L0_idx),
        U0_size=len(rs.U0_idx),
        pseudo_added=added,
        per_iter_added=per_iter,
        probe_before=probe_before,
        probe_after=probe_after,
        iterations_run=t + 1 if b.T > 0 else 0,
        stop_reason=stop,
        iteration_log=log,
    )
