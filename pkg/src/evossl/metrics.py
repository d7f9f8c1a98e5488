"""Scores, pseudo-labeling diagnostics, population diversity and cost-to-target."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np


@dataclass(frozen=True)
class ScoreReport:
    macro_f1: float
    accuracy: float
    per_class_f1: list[float] = field(default_factory=list)


def confusion(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted labels")
    return np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes).reshape(
        n_classes, n_classes
    )


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    # 2*TP / (2*TP + FP + FN) equals the precision/recall harmonic mean; 0/0 -> 0
    denom = 2 * tp + fp + fn
    return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def _macro(cm: np.ndarray) -> float:
    # mean of the exact per-class ratios, rounded once, so the value does not
    # depend on float summation order
    tp = np.diag(cm)
    denom = cm.sum(axis=0) + cm.sum(axis=1)
    total = sum((Fraction(2 * int(t), int(dn)) for t, dn in zip(tp, denom) if dn), Fraction(0))
    return float(total / len(tp))


def macro_f1(y_true, y_pred, n_classes: int) -> ScoreReport:
    cm = confusion(y_true, y_pred, n_classes)
    f1 = per_class_f1(cm)
    total = cm.sum()
    acc = float(np.trace(cm) / total) if total else 0.0
    return ScoreReport(_macro(cm), acc, f1.tolist())


def macro_f1_score(y_true, y_pred, n_classes: int) -> float:
    return _macro(confusion(y_true, y_pred, n_classes))


def probe_drop(s_before: float, s_after: float) -> float:
    return float(s_before - s_after)


def val_optimism(s_val: float, s_test: float) -> float:
    return float(s_val - s_test)


@dataclass(frozen=True)
class DiversitySnapshot:
    mask_jaccard: float
    numeric_dispersion: float
    boolean_disagreement: float

    def to_dict(self) -> dict:
        return {
            "maskJaccard": self.mask_jaccard,
            "policyNumeric": self.numeric_dispersion,
            "policyBoolean": self.boolean_disagreement,
        }


def jaccard_distance(a, b) -> float:
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    assert union > 0, "Jaccard distance of two empty masks is undefined"
    return 1.0 - np.count_nonzero(a & b) / union


def mask_diversity(masks) -> float:
    masks = list(masks)
    if len(masks) < 2:
        return 0.0
    return float(np.mean([jaccard_distance(a, b) for a, b in combinations(masks, 2)]))


def numeric_dispersion(vectors) -> float:
    V = np.asarray(vectors, dtype=float)
    if len(V) < 2:
        return 0.0
    # offsets from the first row keep a population of clones exactly at zero
    D = V - V[0]
    return float(np.linalg.norm(D - D.mean(axis=0), axis=1).mean())


def boolean_disagreement(flags) -> float:
    B = np.asarray(flags, dtype=bool)
    n = len(B)
    if n < 2 or B.ndim != 2 or B.shape[1] == 0:
        return 0.0
    ones = B.sum(axis=0)
    # disagreeing pairs per flag over all unordered pairs
    rates = ones * (n - ones) / (n * (n - 1) / 2)
    return float(rates.mean())


def diversity(views, policies, policy_domain) -> DiversitySnapshot:
    masks = [m for g in views for m in (g.m1, g.m2)]
    return DiversitySnapshot(
        mask_diversity(masks),
        numeric_dispersion([b.numeric_vector(policy_domain) for b in policies]),
        boolean_disagreement([b.boolean_vector() for b in policies]),
    )


@dataclass(frozen=True)
class TargetCost:
    F_star: float
    gtt: int
    ttt: float


def cost_to_target(best_so_far, wall_clock, ratio: float = 0.99) -> TargetCost:
    """First generation whose best-so-far fitness reaches ``ratio`` of the final value.

    The target is ``F* - (1 - ratio)*|F*|`` so the comparison stays meaningful when
    the final fitness is zero or negative; for positive ``F*`` this is ``ratio*F*``.
    """
    best = np.asarray(best_so_far, dtype=float)
    clock = np.asarray(wall_clock, dtype=float)
    if best.size == 0:
        raise ValueError("empty trajectory")
    F_star = float(best[-1])
    target = F_star - (1.0 - ratio) * abs(F_star)
    gtt = int(np.flatnonzero(best >= target)[0])
    return TargetCost(F_star, gtt, float(clock[gtt]))


def trajectory_cost(logs, ratio: float = 0.99) -> TargetCost:
    return cost_to_target([g.best_so_far_F for g in logs], [g.wall_clock_cum for g in logs], ratio)
