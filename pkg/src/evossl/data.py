"""Dataset ingestion, preprocessing and deterministic partitioning."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

# test / validation / probe / pool
DEFAULT_PROPORTIONS = (0.20, 0.16, 0.08, 0.56)


class DataError(ValueError):
    """Raised when a data file or dataset violates ingestion rules."""


class StratificationError(DataError):
    pass


def stable_hash(*parts) -> int:
    """64-bit hash that is stable across processes (unlike ``hash``)."""
    h = hashlib.sha256("\x1f".join(repr(p) for p in parts).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(stable_hash(*parts))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_names: list[str] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)
    # imputed + one-hot encoded matrix before standardization
    encoded: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-d matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError("labels length does not match feature rows")
        if self.n_classes < 2:
            raise DataError("dataset needs at least two classes")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise DataError("labels outside [0, n_classes)")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        if self.encoded is not None:
            object.__setattr__(self, "encoded", _frozen(np.asarray(self.encoded, dtype=float)))
        if not self.feature_names:
            object.__setattr__(self, "feature_names", [f"x{j}" for j in range(X.shape[1])])

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.name.encode())
        h.update(self.features.tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        # zero-variance columns map to all zeros
        scale = np.where(std > 0, std, 1.0)
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


def encode_frame(frame: pd.DataFrame) -> tuple[np.ndarray, list[str]]:
    """Mean-impute numeric columns and one-hot encode the rest."""
    blocks, names = [], []
    for col in frame.columns:
        s = frame[col]
        if pd.api.types.is_bool_dtype(s):
            s = s.astype(float)
        if pd.api.types.is_numeric_dtype(s):
            v = s.to_numpy(dtype=float)
            v = np.where(np.isnan(v), np.nanmean(v) if np.any(~np.isnan(v)) else 0.0, v)
            blocks.append(v[:, None])
            names.append(str(col))
        else:
            levels = sorted(s.dropna().astype(str).unique())
            vals = s.astype(str).where(s.notna(), None)
            onehot = np.zeros((len(s), len(levels)))
            for j, level in enumerate(levels):
                onehot[:, j] = (vals == level).to_numpy(dtype=float)
            blocks.append(onehot)
            names.extend(f"{col}={level}" for level in levels)
    if not blocks:
        raise DataError("no feature columns")
    return np.hstack(blocks), names


def dataset_from_frame(frame: pd.DataFrame, label_column: str, name: str) -> Dataset:
    if label_column not in frame.columns:
        raise DataError(f"label column {label_column!r} not found")
    frame = frame[frame[label_column].notna()].reset_index(drop=True)
    raw_labels = frame[label_column]
    classes = sorted(raw_labels.unique(), key=_sort_key)
    if len(classes) < 2:
        raise DataError(f"label column {label_column!r} has a single class")
    lookup = {c: i for i, c in enumerate(classes)}
    y = raw_labels.map(lookup).to_numpy(dtype=np.int64)
    encoded, names = encode_frame(frame.drop(columns=[label_column]))
    X = Standardizer.fit(encoded).transform(encoded)
    return Dataset(
        name=name,
        features=X,
        labels=y,
        n_classes=len(classes),
        feature_names=names,
        class_names=[str(c) for c in classes],
        encoded=encoded,
    )


def _sort_key(v):
    # numeric labels sort numerically, everything else lexically
    try:
        return (0, float(v), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(v))


def load_csv(path, label_column: str, name: str | None = None) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        frame = pd.read_csv(path, skipinitialspace=True)
    except pd.errors.ParserError as exc:
        raise DataError(f"{path}: malformed CSV ({exc})") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: empty file") from exc
    return dataset_from_frame(frame, label_column, name or path.stem)


def restandardize(ds: Dataset, rows) -> Dataset:
    """Recompute the z-scoring from ``rows`` of the encoded matrix only."""
    base = ds.encoded if ds.encoded is not None else ds.features
    scaler = Standardizer.fit(base[np.asarray(rows)])
    return Dataset(
        name=ds.name,
        features=scaler.transform(base),
        labels=ds.labels,
        n_classes=ds.n_classes,
        feature_names=list(ds.feature_names),
        class_names=list(ds.class_names),
        encoded=base,
    )


@dataclass(frozen=True, eq=False)
class SplitPlan:
    test_idx: np.ndarray
    val_idx: np.ndarray
    probe_idx: np.ndarray
    pool_idx: np.ndarray
    lf: float
    seed: int
    dataset: str = ""

    def __post_init__(self):
        for f in ("test_idx", "val_idx", "probe_idx", "pool_idx"):
            object.__setattr__(self, f, _frozen(np.sort(np.asarray(getattr(self, f), dtype=np.int64))))

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.test_idx, self.val_idx, self.probe_idx, self.pool_idx):
            h.update(a.tobytes())
            h.update(b"|")
        h.update(repr((self.lf, self.seed, self.dataset)).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class LabeledResample:
    L0_idx: np.ndarray
    U0_idx: np.ndarray
    k: int

    def __post_init__(self):
        object.__setattr__(self, "L0_idx", _frozen(np.sort(np.asarray(self.L0_idx, dtype=np.int64))))
        object.__setattr__(self, "U0_idx", _frozen(np.sort(np.asarray(self.U0_idx, dtype=np.int64))))


def _allocate(counts: np.ndarray, props, minimums) -> np.ndarray:
    """Per-class role counts: stratified, honoring minimums and global totals.

    Returns an int matrix of shape (n_classes, n_roles).
    """
    counts = np.asarray(counts, dtype=np.int64)
    props = np.asarray(props, dtype=float)
    n = int(counts.sum())
    totals = np.floor(props * n + 0.5).astype(np.int64)
    totals[-1] = n - totals[:-1].sum()
    quota = counts[:, None] * props[None, :]
    alloc = np.maximum(np.floor(quota).astype(np.int64), np.asarray(minimums)[None, :])
    for c in range(len(counts)):
        # tiny classes: trim from the largest role above its minimum
        while alloc[c].sum() > counts[c]:
            slack = alloc[c] - np.asarray(minimums)
            alloc[c, int(np.argmax(slack))] -= 1
    remaining = counts - alloc.sum(axis=1)
    deficit = totals - alloc.sum(axis=0)
    frac = quota - np.floor(quota)
    order = sorted(
        ((c, r) for c in range(len(counts)) for r in range(len(props))),
        key=lambda cr: (-frac[cr], cr),
    )
    while remaining.sum() > 0:
        progressed = False
        for c, r in order:
            if remaining[c] > 0 and deficit[r] > 0:
                alloc[c, r] += 1
                remaining[c] -= 1
                deficit[r] -= 1
                progressed = True
        if not progressed:
            # minimums overshot some totals; leftovers go to the last role
            alloc[:, -1] += remaining
            remaining[:] = 0
    return alloc


def make_split(ds: Dataset, lf: float, seed: int, proportions=DEFAULT_PROPORTIONS) -> SplitPlan:
    if not 0 < lf <= 1:
        raise ValueError(f"labeled fraction must lie in (0, 1], got {lf}")
    y = ds.labels
    classes, counts = np.unique(y, return_counts=True)
    for c, n_c in zip(classes, counts):
        if n_c < 4:
            raise StratificationError(
                f"class {c} has {n_c} samples; at least 4 are needed for a stratified split"
            )
    alloc = _allocate(counts, proportions, (1, 1, 1, 1))
    # the split ignores lf so every labeled fraction shares one partition
    rng = rng_for("split", int(seed), ds.name)
    roles: list[list[int]] = [[], [], [], []]
    for ci, c in enumerate(classes):
        members = np.flatnonzero(y == c)
        members = members[rng.permutation(len(members))]
        start = 0
        for r in range(4):
            roles[r].extend(members[start : start + alloc[ci, r]].tolist())
            start += alloc[ci, r]
    return SplitPlan(*roles, lf=float(lf), seed=int(seed), dataset=ds.name)


def labeled_size(lf: float, pool_size: int, n_classes: int) -> int:
    return min(pool_size, max(n_classes, int(np.floor(lf * pool_size + 0.5))))


def resample_labeled(plan: SplitPlan, ds: Dataset, k: int) -> LabeledResample:
    if k < 0:
        raise ValueError("resample index must be non-negative")
    pool = plan.pool_idx
    y = ds.labels[pool]
    classes, counts = np.unique(y, return_counts=True)
    size = labeled_size(plan.lf, len(pool), len(classes))
    alloc = _allocate(counts, (size / len(pool), 1 - size / len(pool)), (1, 0))
    rng = rng_for("resample", plan.seed, plan.dataset, plan.lf, int(k))
    chosen = []
    for ci, c in enumerate(classes):
        members = pool[y == c]
        chosen.append(members[rng.permutation(len(members))[: alloc[ci, 0]]])
    L0 = np.concatenate(chosen)
    U0 = np.setdiff1d(pool, L0)
    return LabeledResample(L0, U0, int(k))
