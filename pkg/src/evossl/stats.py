"""Paired Wilcoxon signed-rank tests, win counting and descriptive tables."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

EXACT_MAX_N = 15
BASELINES = ("st", "ls", "hco")


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of positive differences (x - y)
    p_value: float
    significant: bool
    n: int
    exact: bool


def signed_rank_null(doubled_ranks) -> np.ndarray:
    """Counts of each attainable doubled W+ when every sign is a fair coin."""
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(x, y, alpha: float = 0.01, exact: bool | None = None) -> WilcoxonResult:
    """Two-sided paired test; zero differences dropped, tied magnitudes get average ranks."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("paired samples must have equal length")
    d = x - y
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, False, 0, True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    use_exact = n <= EXACT_MAX_N if exact is None else exact
    if use_exact:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = signed_rank_null(doubled)
        w2 = int(round(2 * w_plus))
        total = 2**n
        lower = int(sum(counts[: w2 + 1]))
        upper = int(sum(counts[w2:]))
        p = min(1.0, 2 * min(lower, upper) / total)
    else:
        mean = n * (n + 1) / 4
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24 - float(np.sum(tie_counts**3 - tie_counts)) / 48
        if var <= 0:
            p = 1.0
        else:
            z = (abs(w_plus - mean) - 0.5) / math.sqrt(var)
            p = float(min(1.0, 2 * norm.sf(max(z, 0.0))))
    return WilcoxonResult(w_plus, p, p < alpha, n, use_exact)


def count_wins(records, alpha: float = 0.01, n_comparisons: int | None = None,
               methods=("ccssl", "eassl"), baselines=BASELINES, metric: str = "test_macro_f1"):
    """Cells (dataset, lf) where a method beats every baseline under paired Wilcoxon tests.

    ``records`` are dicts carrying method, dataset, lf, seed and the metric.
    Returns ``{method: {lf: [datasets won]}}`` plus the per-comparison p-values.
    """
    table = defaultdict(dict)
    for r in records:
        table[(r["dataset"], r["lf"])].setdefault(r["method"], {})[r["seed"]] = r[metric]
    present = [b for b in baselines if any(b in cell for cell in table.values())]
    n_comparisons = n_comparisons or max(1, len(present))
    level = alpha / n_comparisons
    wins = {m: defaultdict(list) for m in methods}
    detail = {}
    for (dataset, lf), cell in sorted(table.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        for m in methods:
            if m not in cell:
                continue
            ok = bool(present)
            for b in present:
                if b not in cell:
                    ok = False
                    continue
                seeds_m, seeds_b = set(cell[m]), set(cell[b])
                if seeds_m != seeds_b:
                    gap = sorted(seeds_m ^ seeds_b)
                    raise ValueError(f"unpaired seeds for {m} vs {b} on {dataset} lf={lf}: {gap}")
                seeds = sorted(seeds_m)
                xm = [cell[m][s] for s in seeds]
                xb = [cell[b][s] for s in seeds]
                res = wilcoxon_signed_rank(xm, xb, alpha=level)
                better = np.median(xm) > np.median(xb)
                detail[(m, b, dataset, lf)] = (res.p_value, bool(better))
                ok = ok and res.p_value < level and better
            if ok:
                wins[m][lf].append(dataset)
    return {m: dict(v) for m, v in wins.items()}, detail


def describe(values) -> dict:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"min": float(v.min()), "median": float(med), "iqr": float(q3 - q1), "max": float(v.max())}
