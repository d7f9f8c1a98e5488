"""Fixed-policy SSL baselines (ST, HCo, LS) and supervised linear references."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from . import linear
from .data import Dataset, LabeledResample, SplitPlan, rng_for
from .metrics import macro_f1_score
from .summary import RunSummary, summarize_predictions

METHODS = ("st", "hco", "ls", "lr_ref", "svm_ref")


@dataclass(frozen=True)
class BaselineConfig:
    tau_fixed: float = 0.9
    max_iters: int = 10
    ls_alpha: float = 0.9
    ls_neighbors: int = 7
    ls_max_iter: int = 1000
    ls_tol: float = 1e-6
    ls_transductive: bool = True
    l2: float = 1e-2
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ls_alpha < 1.0:
            raise ValueError("baselines.ls_alpha must lie in (0, 1)")
        if self.max_iters < 0 or self.ls_neighbors < 1 or self.ls_max_iter < 1:
            raise ValueError("baselines: iteration counts and ls_neighbors must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "BaselineConfig":
        data = dict(data or {})
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown baselines fields: {sorted(unknown)}")
        return cls(**data)


def _fit(X, y, ds, cfg, seed):
    return linear.fit(X, y, n_classes=ds.n_classes, l2=cfg.l2, max_epochs=cfg.max_epochs, seed=seed)


def _probe(proba_fn, plan, ds) -> float:
    if len(plan.probe_idx) == 0:
        return 0.0
    pred = np.argmax(proba_fn(plan.probe_idx), axis=1)
    return macro_f1_score(ds.labels[plan.probe_idx], pred, ds.n_classes)


def _finish(method, ds, plan, proba_fn, probe_before, added, **extra) -> RunSummary:
    probe_after = _probe(proba_fn, plan, ds)
    return summarize_predictions(
        method, ds, plan,
        np.argmax(proba_fn(plan.test_idx), axis=1),
        np.argmax(proba_fn(plan.val_idx), axis=1),
        probe_drop=probe_before - probe_after, pseudo_added=added, **extra,
    )


def run_self_training(ds: Dataset, plan: SplitPlan, rs: LabeledResample, cfg: BaselineConfig) -> RunSummary:
    """Single identity view, fixed threshold, no margin/veto/cap."""
    X, y = ds.features, ds.labels
    L_idx, L_lab = rs.L0_idx.copy(), y[rs.L0_idx].copy()
    U_idx = rs.U0_idx.copy()
    model = _fit(X[L_idx], L_lab, ds, cfg, plan.seed)
    probe_before = _probe(lambda r: model.predict_proba(X[r]), plan, ds)
    added = 0
    for _ in range(cfg.max_iters):
        if len(U_idx) == 0:
            break
        P = model.predict_proba(X[U_idx])
        pos = np.flatnonzero(P.max(axis=1) >= cfg.tau_fixed)
        if len(pos) == 0:
            break
        L_idx = np.concatenate([L_idx, U_idx[pos]])
        L_lab = np.concatenate([L_lab, P[pos].argmax(axis=1)])
        U_idx = np.delete(U_idx, pos)
        added += len(pos)
        model = _fit(X[L_idx], L_lab, ds, cfg, plan.seed)
    return _finish("st", ds, plan, lambda r: model.predict_proba(X[r]), probe_before, added)


def feature_halves(d: int, rng) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(d)
    h = (d + 1) // 2
    return np.sort(perm[:h]), np.sort(perm[h:])


def run_cotraining(ds: Dataset, plan: SplitPlan, rs: LabeledResample, cfg: BaselineConfig) -> RunSummary:
    """Two random feature halves; each view's confident labels go to the other view's training set."""
    if ds.d < 2:
        s = run_self_training(ds, plan, rs, cfg)
        s.method = "hco"
        s.extra["degenerate_single_feature"] = True
        return s
    rng = rng_for("hco", cfg.seed, plan.seed, ds.name)
    cols = feature_halves(ds.d, rng)
    X, y = ds.features, ds.labels
    Xv = [X[:, c] for c in cols]
    L = [[rs.L0_idx.copy(), y[rs.L0_idx].copy()] for _ in range(2)]
    U_idx = rs.U0_idx.copy()
    models = [_fit(Xv[v][L[v][0]], L[v][1], ds, cfg, plan.seed) for v in range(2)]

    def proba(rows):
        return 0.5 * (models[0].predict_proba(Xv[0][rows]) + models[1].predict_proba(Xv[1][rows]))

    probe_before = _probe(proba, plan, ds)
    added = 0
    for _ in range(cfg.max_iters):
        if len(U_idx) == 0:
            break
        taught = []
        for v in range(2):
            P = models[v].predict_proba(Xv[v][U_idx])
            taught.append((np.flatnonzero(P.max(axis=1) >= cfg.tau_fixed), P.argmax(axis=1)))
        used = np.union1d(taught[0][0], taught[1][0])
        if len(used) == 0:
            break
        for v in range(2):
            pos, lab = taught[1 - v]
            L[v][0] = np.concatenate([L[v][0], U_idx[pos]])
            L[v][1] = np.concatenate([L[v][1], lab[pos]])
        U_idx = np.delete(U_idx, used)
        added += len(used)
        models = [_fit(Xv[v][L[v][0]], L[v][1], ds, cfg, plan.seed) for v in range(2)]
    return _finish("hco", ds, plan, proba, probe_before, added,
                   view_columns=[c.tolist() for c in cols])


def knn_affinity(X: np.ndarray, k: int) -> np.ndarray:
    """Symmetric kNN graph with RBF weights; bandwidth is the median neighbor distance (0 -> 1)."""
    n = len(X)
    k = min(k, n - 1)
    W = np.zeros((n, n))
    if k < 1:
        return W
    dist, nbr = cKDTree(X).query(X, k=k + 1)
    dist, nbr = dist[:, 1:], nbr[:, 1:]
    sigma = float(np.median(dist))
    if sigma == 0.0:
        sigma = 1.0
    rows = np.repeat(np.arange(n), k)
    W[rows, nbr.ravel()] = np.exp(-dist.ravel() ** 2 / (2 * sigma**2))
    # a point can land among its own "neighbors" when duplicates exist
    np.fill_diagonal(W, 0.0)
    return np.maximum(W, W.T)


def normalized_affinity(W: np.ndarray) -> np.ndarray:
    deg = W.sum(axis=1)
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    return inv[:, None] * W * inv[None, :]


@dataclass
class SpreadResult:
    F: np.ndarray
    labels: np.ndarray
    iterations: int
    unreached: np.ndarray  # rows with no path to a labeled node


def label_spreading(W: np.ndarray, Y: np.ndarray, alpha: float = 0.9, tol: float = 1e-6,
                    max_iter: int = 1000) -> SpreadResult:
    """Iterate F <- alpha*S*F + (1-alpha)*Y; rows are renormalized to sum to one at the end."""
    S = normalized_affinity(W)
    F = Y.astype(float).copy()
    it = 0
    for it in range(1, max_iter + 1):
        F_next = alpha * (S @ F) + (1 - alpha) * Y
        change = np.abs(F_next - F).max()
        F = F_next
        if change < tol:
            break
    mass = F.sum(axis=1)
    unreached = mass <= 0
    out = np.empty_like(F)
    out[~unreached] = F[~unreached] / mass[~unreached, None]
    out[unreached] = 1.0 / F.shape[1]
    return SpreadResult(out, np.argmax(out, axis=1), it, np.flatnonzero(unreached))


def run_label_spreading(ds: Dataset, plan: SplitPlan, rs: LabeledResample, cfg: BaselineConfig) -> RunSummary:
    X, y, C = ds.features, ds.labels, ds.n_classes
    nodes = [rs.L0_idx, rs.U0_idx]
    if cfg.ls_transductive:
        nodes.append(plan.test_idx)
    nodes = np.concatenate(nodes)
    Y = np.zeros((len(nodes), C))
    Y[np.arange(len(rs.L0_idx)), y[rs.L0_idx]] = 1.0
    res = label_spreading(knn_affinity(X[nodes], cfg.ls_neighbors), Y, cfg.ls_alpha, cfg.ls_tol, cfg.ls_max_iter)
    tree = cKDTree(X[nodes])

    def predict(rows):
        # rows outside the graph take the label of their nearest transduced node
        return res.labels[tree.query(X[rows], k=1)[1]]

    if cfg.ls_transductive:
        pos = {int(i): j for j, i in enumerate(nodes)}
        test_pred = res.labels[[pos[int(i)] for i in plan.test_idx]]
    else:
        test_pred = predict(plan.test_idx)
    return summarize_predictions(
        "ls", ds, plan, test_pred, predict(plan.val_idx),
        probe_drop=None, pseudo_added=None,
        ls_iterations=res.iterations, ls_unreached=int(len(res.unreached)),
    )


def run_supervised_refs(ds: Dataset, plan: SplitPlan, rs: LabeledResample, cfg: BaselineConfig,
                        which=("lr_ref", "svm_ref")) -> list[RunSummary]:
    X, y = ds.features, ds.labels
    out = []
    for method in which:
        if method == "lr_ref":
            model = _fit(X[rs.L0_idx], y[rs.L0_idx], ds, cfg, plan.seed)
        elif method == "svm_ref":
            model = linear.fit_linear_svm_reference(X[rs.L0_idx], y[rs.L0_idx], ds.n_classes, seed=plan.seed)
        else:
            raise ValueError(f"unknown reference {method!r}")
        out.append(summarize_predictions(
            method, ds, plan, model.predict(X[plan.test_idx]), model.predict(X[plan.val_idx])
        ))
    return out


def run_baseline(method: str, ds: Dataset, plan: SplitPlan, rs: LabeledResample, cfg: BaselineConfig) -> RunSummary:
    if method == "st":
        return run_self_training(ds, plan, rs, cfg)
    if method == "hco":
        return run_cotraining(ds, plan, rs, cfg)
    if method == "ls":
        return run_label_spreading(ds, plan, rs, cfg)
    if method in ("lr_ref", "svm_ref"):
        return run_supervised_refs(ds, plan, rs, cfg, which=(method,))[0]
    raise ValueError(f"unknown baseline {method!r}")
