import itertools

import numpy as np
import pytest
from scipy.stats import rankdata

from evossl.stats import count_wins, describe, wilcoxon_signed_rank


def enumerate_p(x, y):
    """Oracle: walk all 2^n sign assignments of the nonzero ranked differences."""
    d = np.asarray(x, float) - np.asarray(y, float)
    d = d[d != 0]
    if len(d) == 0:
        return 1.0
    r = rankdata(np.abs(d))
    w = r[d > 0].sum()
    lo = hi = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        s = sum(ri for ri, sg in zip(r, signs) if sg)
        lo += s <= w + 1e-9
        hi += s >= w - 1e-9
    return min(1.0, 2 * min(lo, hi) / 2 ** len(d))


def test_all_positive_n6():
    res = wilcoxon_signed_rank([2, 3, 4, 5, 6, 7], [1, 1, 1, 1, 1, 1])
    assert res.p_value == pytest.approx(0.03125, abs=1e-15)
    assert res.exact


def test_identical_samples():
    res = wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])
    assert res.p_value == 1.0 and not res.significant


def test_swap_symmetry(rng):
    x, y = rng.normal(size=9), rng.normal(size=9)
    a, b = wilcoxon_signed_rank(x, y), wilcoxon_signed_rank(y, x)
    assert a.p_value == pytest.approx(b.p_value, abs=1e-15)
    n = a.n
    assert a.statistic + b.statistic == pytest.approx(n * (n + 1) / 2)


def test_exact_matches_enumeration_with_ties(rng):
    for _ in range(60):
        n = int(rng.integers(1, 11))
        x = rng.integers(0, 4, n).astype(float)
        y = rng.integers(0, 4, n).astype(float)
        assert wilcoxon_signed_rank(x, y).p_value == pytest.approx(enumerate_p(x, y), abs=1e-12)


def test_normal_approximation_near_exact(rng):
    x, y = rng.normal(size=14), rng.normal(size=14)
    ex = wilcoxon_signed_rank(x, y, exact=True).p_value
    ap = wilcoxon_signed_rank(x, y, exact=False).p_value
    assert abs(ex - ap) < 0.03


def test_large_n_uses_normal():
    res = wilcoxon_signed_rank(np.arange(30) + 0.5, np.zeros(30))
    assert not res.exact
    assert res.p_value < 0.01 / 3


def _records(method_vals, seeds=range(30), dataset="d", lf=0.01):
    out = []
    for m, vals in method_vals.items():
        for s, v in zip(seeds, vals):
            out.append({"method": m, "dataset": dataset, "lf": lf, "seed": s, "test_macro_f1": v})
    return out


def test_dominating_method_wins(rng):
    base = rng.uniform(0.3, 0.6, 30)
    recs = _records({"ccssl": base + 0.2, "st": base, "ls": base - 0.01, "hco": base + 0.01})
    wins, detail = count_wins(recs, alpha=0.01)
    assert wins["ccssl"] == {0.01: ["d"]}


def test_identical_method_cannot_win(rng):
    base = rng.uniform(0.3, 0.6, 30)
    recs = _records({"ccssl": base, "st": base, "ls": base - 0.2, "hco": base - 0.2})
    wins, _ = count_wins(recs)
    assert wins["ccssl"] == {}


def test_unpaired_seeds_rejected():
    recs = _records({"ccssl": [0.5] * 3}, seeds=[0, 1, 2]) + _records({"st": [0.4] * 3}, seeds=[0, 1, 5])
    with pytest.raises(ValueError, match="unpaired"):
        count_wins(recs)


def test_describe():
    d = describe([1, 2, 3, 4, 5])
    assert d == {"min": 1.0, "median": 3.0, "iqr": 2.0, "max": 5.0}
