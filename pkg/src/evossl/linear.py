"""Regularized multinomial logistic regression and a linear SVM reference.

Both are trained full-batch and deterministically so that repeated fits on the
same data give bit-identical models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar

DEFAULT_L2 = 1e-2
DEFAULT_MAX_EPOCHS = 200
DEFAULT_TOL = 1e-4


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    W: np.ndarray
    b: np.ndarray
    l2: float
    max_epochs: int = DEFAULT_MAX_EPOCHS
    tol: float = DEFAULT_TOL
    temperature: float = 1.0
    epochs_run: int = 0

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def n_features(self) -> int:
        return self.W.shape[1]

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} feature columns, got array of shape {X.shape}"
            )
        return X @ self.W.T + self.b

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(X) / self.temperature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def predict_proba(model: LinearClassifier, X: np.ndarray) -> np.ndarray:
    return model.predict_proba(X)


def _one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    Y = np.zeros((len(y), n_classes))
    Y[np.arange(len(y)), y] = 1.0
    return Y


def objective(W, b, X, Y, l2):
    """Mean cross-entropy plus ``l2/2 * ||W||^2``; returns (loss, posteriors)."""
    Z = X @ W.T + b
    zmax = Z.max(axis=1, keepdims=True)
    E = np.exp(Z - zmax)
    S = E.sum(axis=1, keepdims=True)
    lse = np.log(S) + zmax
    loss = float(np.sum(lse - np.sum(Z * Y, axis=1, keepdims=True))) / len(X)
    loss += 0.5 * l2 * float(np.sum(W * W))
    return loss, E / S


def gradient(W, P, X, Y, l2, active=None):
    R = (P - Y) / len(X)
    gW = R.T @ X + l2 * W
    gb = R.sum(axis=0)
    if active is not None:
        gW[~active] = 0.0
        gb[~active] = 0.0
    return gW, gb


def loss_and_grad(W, b, X, y, l2, n_classes=None):
    """Objective and its analytic gradient, exposed for finite-difference checks."""
    n_classes = n_classes or W.shape[0]
    Y = _one_hot(np.asarray(y), n_classes)
    loss, P = objective(W, b, X, Y, l2)
    gW, gb = gradient(W, P, X, Y, l2)
    return loss, gW, gb


@njit(cache=True)
def _evaluate(Xa, y, Wa, l2, d, P):
    n, C = Xa.shape[0], Wa.shape[0]
    Z = Xa @ Wa.T
    total = 0.0
    for i in range(n):
        zmax = Z[i, 0]
        for c in range(1, C):
            if Z[i, c] > zmax:
                zmax = Z[i, c]
        s = 0.0
        for c in range(C):
            e = np.exp(Z[i, c] - zmax)
            P[i, c] = e
            s += e
        total += np.log(s) + zmax - Z[i, y[i]]
        for c in range(C):
            P[i, c] /= s
    reg = 0.0
    for c in range(C):
        for j in range(d):
            reg += Wa[c, j] * Wa[c, j]
    return total / n + 0.5 * l2 * reg


@njit(cache=True)
def _descend(Xa, y, C, l2, max_epochs, tol, active):
    """Backtracking (Armijo) gradient descent on the bias-augmented weights."""
    n, d1 = Xa.shape
    d = d1 - 1
    XaT = np.ascontiguousarray(Xa.T)
    Wa = np.zeros((C, d1))
    W_new = np.zeros((C, d1))
    P = np.empty((n, C))
    P_new = np.empty((n, C))
    loss = _evaluate(Xa, y, Wa, l2, d, P)
    step = 1.0
    epochs = 0
    while epochs < max_epochs:
        for i in range(n):
            P[i, y[i]] -= 1.0
        g = (XaT @ P).T / n
        gsq = 0.0
        for c in range(C):
            for j in range(d1):
                if not active[c]:
                    g[c, j] = 0.0
                elif j < d:
                    g[c, j] += l2 * Wa[c, j]
                gsq += g[c, j] * g[c, j]
        if gsq < tol * tol:
            break
        step = min(step * 2.0, 1e4)
        while True:
            for c in range(C):
                for j in range(d1):
                    W_new[c, j] = Wa[c, j] - step * g[c, j]
            new_loss = _evaluate(Xa, y, W_new, l2, d, P_new)
            # Armijo sufficient decrease
            if new_loss <= loss - 0.5 * step * gsq or step < 1e-12:
                break
            step *= 0.5
        if new_loss > loss:
            break
        Wa, W_new = W_new, Wa
        P, P_new = P_new, P
        loss = new_loss
        epochs += 1
    return Wa, epochs, loss


def _gradient_descent(X, y, n_classes, l2, max_epochs, tol, active):
    n, d = X.shape
    Xa = np.empty((n, d + 1))
    Xa[:, :d] = X
    Xa[:, d] = 1.0
    Wa, epochs, loss = _descend(Xa, y, n_classes, float(l2), int(max_epochs), float(tol), active)
    return Wa[:, :d].copy(), Wa[:, d].copy(), epochs, loss


def fit(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int | None = None,
    l2: float = DEFAULT_L2,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    calibrate: bool = False,
) -> LinearClassifier:
    """Fit multinomial logistic regression by full-batch gradient descent.

    Classes that never occur in ``y`` keep their zero-initialized weights and
    still receive a posterior through the softmax over all ``n_classes`` logits.
    With ``calibrate`` a temperature is fitted on a seeded 20% hold-out of the
    training rows and the weights are fitted on the rest.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("cannot fit on an empty training set")
    if len(y) != len(X):
        raise ValueError("X and y lengths differ")
    if l2 <= 0:
        raise ValueError("l2 must be positive")
    n_classes = int(n_classes or y.max() + 1)
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")
    if calibrate:
        split = _calibration_split(y, seed)
        if split is not None:
            tr, ho = split
            model = fit(X[tr], y[tr], n_classes, l2, max_epochs, tol, seed)
            T = _fit_temperature(model.decision_function(X[ho]), y[ho])
            return LinearClassifier(model.W, model.b, l2, max_epochs, tol, T, model.epochs_run)
    active = np.bincount(y, minlength=n_classes) > 0
    W, b, epochs, _ = _gradient_descent(X, y, n_classes, l2, max_epochs, tol, active)
    return LinearClassifier(W, b, float(l2), int(max_epochs), float(tol), 1.0, epochs)


def _calibration_split(y, seed, frac=0.2):
    n = len(y)
    n_ho = int(round(frac * n))
    if n_ho < 2 or n - n_ho < 2:
        return None
    order = np.random.default_rng(seed).permutation(n)
    ho, tr = np.sort(order[:n_ho]), np.sort(order[n_ho:])
    if len(np.unique(y[tr])) < 2:
        return None
    return tr, ho


def _fit_temperature(logits, y):
    def nll(log_t):
        P = softmax(logits / np.exp(log_t))
        return -float(np.mean(np.log(np.clip(P[np.arange(len(y)), y], 1e-300, None))))

    res = minimize_scalar(nll, bounds=(-3.0, 3.0), method="bounded", options={"xatol": 1e-6})
    return float(np.exp(res.x))


def fit_linear_svm_reference(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int | None = None,
    C_reg: float = 1.0,
    seed: int = 0,
    epochs: int = 500,
) -> LinearClassifier:
    """One-vs-rest L2 hinge-loss SVM trained by full-batch subgradient descent.

    Minimizes ``0.5*||w_c||^2 + C_reg * sum_i hinge`` per class with step
    ``1/t`` and returns the averaged iterate; decision scores are turned into
    pseudo-posteriors by the softmax in ``predict_proba``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot fit on an empty training set")
    n_classes = int(n_classes or y.max() + 1)
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")
    S = np.where(_one_hot(y, n_classes) > 0, 1.0, -1.0)  # n x C targets
    Xb = np.hstack([X, np.ones((len(X), 1))])
    Wb = np.zeros((n_classes, Xb.shape[1]))
    avg = np.zeros_like(Wb)
    for t in range(1, epochs + 1):
        margins = S * (Xb @ Wb.T)
        viol = (margins < 1.0) * S
        grad = Wb.copy()
        grad[:, -1] = 0.0  # bias is not regularized
        grad -= C_reg * (viol.T @ Xb)
        Wb -= grad / t
        avg += (Wb - avg) / t
    return LinearClassifier(avg[:, :-1].copy(), avg[:, -1].copy(), l2=1.0 / max(C_reg, 1e-300), max_epochs=epochs)
