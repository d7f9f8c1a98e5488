"""Synthetic Gaussian fixtures for desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .data import Dataset, Standardizer


def gaussian_blobs(
    n: int = 1000,
    d: int = 10,
    informative: int = 4,
    n_classes: int = 2,
    separation: float = 1.5,
    seed: int = 0,
    name: str | None = None,
) -> Dataset:
    """Isotropic Gaussian classes whose means differ only on the first ``informative`` columns."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % n_classes
    rng.shuffle(y)
    centers = np.zeros((n_classes, d))
    centers[:, :informative] = rng.normal(size=(n_classes, informative))
    # rescale so the nearest pair of centers sits `separation` apart
    gaps = [np.linalg.norm(centers[i] - centers[j]) for i in range(n_classes) for j in range(i)]
    centers *= separation / min(gaps)
    X = centers[y] + rng.normal(size=(n, d))
    return Dataset(
        name=name or f"blobs_n{n}_d{d}_c{n_classes}_s{seed}",
        features=Standardizer.fit(X).transform(X),
        labels=y,
        n_classes=n_classes,
        encoded=X,
    )
