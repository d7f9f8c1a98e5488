import numpy as np
import pytest

from evossl import linear


def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def max_rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def test_gradient_matches_finite_differences(rng):
    X = rng.normal(size=(5, 3))
    y = np.array([0, 1, 2, 1, 0])
    W, b = rng.normal(size=(3, 3)), rng.normal(size=3)
    _, gW, gb = linear.loss_and_grad(W, b, X, y, 0.1, 3)
    fW = _fd_grad(lambda: linear.loss_and_grad(W, b, X, y, 0.1, 3)[0], W)
    fb = _fd_grad(lambda: linear.loss_and_grad(W, b, X, y, 0.1, 3)[0], b)
    assert max_rel_err(gW, fW) < 1e-5
    assert max_rel_err(gb, fb) < 1e-5


def test_two_points_ordering():
    m = linear.fit(np.array([[-1.0], [1.0]]), np.array([0, 1]))
    assert m.predict_proba(np.array([[1.0]]))[0, 1] > 0.5


def test_single_class_errors():
    with pytest.raises(ValueError):
        linear.fit(np.zeros((3, 2)), np.array([1, 1, 1]), n_classes=2)


def test_empty_errors():
    with pytest.raises(ValueError):
        linear.fit(np.zeros((0, 2)), np.array([], dtype=int), n_classes=2)


def test_uniform_and_saturated_posteriors():
    m = linear.LinearClassifier(np.zeros((3, 2)), np.zeros(3), 1.0, 10, 1e-4)
    np.testing.assert_allclose(m.predict_proba(np.ones((4, 2))), 1 / 3)
    m2 = linear.LinearClassifier(np.array([[10.0], [-10.0]]), np.zeros(2), 1.0, 10, 1e-4)
    np.testing.assert_allclose(m2.predict_proba(np.array([[1.0]]))[0], [1, 0], atol=1e-8)


def test_rows_sum_to_one(rng):
    m = linear.LinearClassifier(rng.normal(size=(4, 5)), rng.normal(size=4), 1.0, 10, 1e-4)
    P = m.predict_proba(rng.normal(size=(1000, 5)) * 5)
    np.testing.assert_allclose(P.sum(1), 1.0, atol=1e-9)


def test_dimension_mismatch(rng):
    m = linear.fit(rng.normal(size=(10, 3)), np.array([0, 1] * 5))
    with pytest.raises(ValueError):
        m.predict_proba(np.zeros((2, 4)))


def test_affine_consistency(rng):
    # scaling inputs by c and weights by 1/c leaves the posterior unchanged
    m = linear.LinearClassifier(rng.normal(size=(3, 4)), rng.normal(size=3), 1.0, 10, 1e-4)
    X = rng.normal(size=(20, 4))
    m2 = linear.LinearClassifier(m.W / 4.0, m.b, 1.0, 10, 1e-4)
    np.testing.assert_allclose(m.predict_proba(X), m2.predict_proba(4.0 * X), atol=1e-12)


def test_fit_reaches_low_gradient(rng):
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=60) > 0).astype(int)
    m = linear.fit(X, y, l2=0.1, max_epochs=500, tol=1e-6)
    _, gW, gb = linear.loss_and_grad(m.W, m.b, X, y, 0.1, 2)
    assert np.linalg.norm(np.concatenate([gW.ravel(), gb])) < 1e-4


def test_fit_matches_scipy_optimum(rng):
    from scipy.optimize import minimize

    X = rng.normal(size=(40, 3))
    y = rng.integers(0, 3, 40)

    def f(theta):
        W, b = theta[:9].reshape(3, 3), theta[9:]
        loss, gW, gb = linear.loss_and_grad(W, b, X, y, 0.5, 3)
        return loss, np.concatenate([gW.ravel(), gb])

    ref = minimize(f, np.zeros(12), jac=True, method="L-BFGS-B", options={"gtol": 1e-10})
    m = linear.fit(X, y, n_classes=3, l2=0.5, max_epochs=2000, tol=1e-8)
    assert linear.loss_and_grad(m.W, m.b, X, y, 0.5, 3)[0] == pytest.approx(ref.fun, abs=1e-7)


def test_calibrated_fit_runs(rng):
    X = rng.normal(size=(80, 2))
    y = (X[:, 0] > 0).astype(int)
    m = linear.fit(X, y, calibrate=True, seed=1)
    assert m.temperature > 0
    np.testing.assert_allclose(m.predict_proba(X).sum(1), 1.0)


def test_svm_reference(rng):
    m = linear.fit_linear_svm_reference(np.array([[-1.0], [1.0]]), np.array([0, 1]), 2, seed=0)
    s = m.decision_function(np.array([[1.0]]))[0]
    assert s[1] > s[0]
    X = np.vstack([rng.normal(-2, 0.5, (25, 2)), rng.normal(2, 0.5, (25, 2))])
    y = np.array([0] * 25 + [1] * 25)
    svm = linear.fit_linear_svm_reference(X, y, 2, seed=0)
    lr = linear.fit(X, y)
    assert np.mean(svm.predict(X) == lr.predict(X)) >= 0.95
    tiny = linear.fit_linear_svm_reference(X, y, 2, C_reg=1e-8, seed=0)
    assert np.abs(tiny.W).max() < 1e-3
    again = linear.fit_linear_svm_reference(X, y, 2, seed=0)
    assert np.array_equal(svm.W, again.W)
