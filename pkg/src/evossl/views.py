"""View-builder genotype, its two feature-space transforms, and its variation operators."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import rng_for

PROJ_SEED_MAX = 2**31 - 1


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ViewDomain:
    d: int
    k_min: int = 2
    k_max: int = 16
    B_max: int = 10

    @classmethod
    def for_features(cls, d: int, k_min: int = 2, k_max_cap: int = 16, B_max: int = 10) -> "ViewDomain":
        return cls(d=d, k_min=min(k_min, d), k_max=max(2, min(k_max_cap, d)), B_max=B_max)


@dataclass(frozen=True, eq=False)
class ViewGenotype:
    m1: np.ndarray
    m2: np.ndarray
    p1: bool
    p2: bool
    k1: int
    k2: int
    B1: int
    B2: int
    proj_seed: int

    def __post_init__(self):
        for f in ("m1", "m2"):
            m = np.array(getattr(self, f), dtype=bool)
            m.setflags(write=False)
            object.__setattr__(self, f, m)
        for f in ("p1", "p2"):
            object.__setattr__(self, f, bool(getattr(self, f)))
        for f in ("k1", "k2", "B1", "B2", "proj_seed"):
            object.__setattr__(self, f, int(getattr(self, f)))

    @property
    def d(self) -> int:
        return len(self.m1)

    def key(self) -> tuple:
        return (
            self.m1.tobytes(),
            self.m2.tobytes(),
            self.p1,
            self.p2,
            self.k1,
            self.k2,
            self.B1,
            self.B2,
            self.proj_seed,
        )

    def __eq__(self, other):
        return isinstance(other, ViewGenotype) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["m1"] = self.m1.astype(int).tolist()
        out["m2"] = self.m2.astype(int).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ViewGenotype":
        return cls(**data)

    def is_feasible(self, domain: ViewDomain) -> bool:
        return (
            self.m1.sum() >= domain.k_min
            and self.m2.sum() >= domain.k_min
            and all(2 <= k <= domain.k_max for k in (self.k1, self.k2))
            and all(0 <= B <= domain.B_max for B in (self.B1, self.B2))
            and 0 <= self.proj_seed <= PROJ_SEED_MAX
        )


def identity_views(d: int) -> ViewGenotype:
    ones = np.ones(d, dtype=bool)
    k = max(2, min(16, d))
    return ViewGenotype(ones, ones, False, False, k, k, 0, 0, 0)


def random_view(domain: ViewDomain, rng: np.random.Generator) -> ViewGenotype:
    g = ViewGenotype(
        m1=rng.random(domain.d) < 0.5,
        m2=rng.random(domain.d) < 0.5,
        p1=rng.random() < 0.5,
        p2=rng.random() < 0.5,
        k1=rng.integers(2, domain.k_max + 1),
        k2=rng.integers(2, domain.k_max + 1),
        B1=rng.integers(0, domain.B_max + 1),
        B2=rng.integers(0, domain.B_max + 1),
        proj_seed=rng.integers(0, PROJ_SEED_MAX + 1),
    )
    return repair_view(g, rng, domain)


@dataclass(frozen=True, eq=False)
class ViewTransform:
    columns: np.ndarray
    projection: np.ndarray | None = None
    # per output column (low, width) of equal-width bins, with the bin count
    bin_low: np.ndarray | None = None
    bin_width: np.ndarray | None = None
    bins: int = 0

    @property
    def output_dim(self) -> int:
        return len(self.columns) if self.projection is None else self.projection.shape[0]

    def _project(self, X: np.ndarray) -> np.ndarray:
        Z = np.asarray(X, dtype=float)[:, self.columns]
        if self.projection is not None:
            Z = Z @ self.projection.T
        return Z

    def apply(self, X: np.ndarray) -> np.ndarray:
        Z = self._project(X)
        if self.bins >= 2:
            Z = discretize(Z, self.bin_low, self.bin_width, self.bins)
        return Z


def discretize(Z, low, width, bins):
    """Replace each value by the midpoint of its equal-width bin (clipped to the fitted range)."""
    safe = np.where(width > 0, width, 1.0)
    idx = np.clip(np.floor((Z - low) / safe), 0, bins - 1)
    out = low + (idx + 0.5) * width
    # constant columns stay as they are
    return np.where(width > 0, out, Z)


def projection_matrix(k: int, p: int, proj_seed: int, view: int) -> np.ndarray:
    rng = rng_for("projection", proj_seed, view, k, p)
    return rng.standard_normal((k, p)) / np.sqrt(k)


def _build_one(mask, project, k, B, proj_seed, view, X_fit) -> ViewTransform:
    cols = np.flatnonzero(mask)
    proj = projection_matrix(k, len(cols), proj_seed, view) if project else None
    t = ViewTransform(columns=cols, projection=proj)
    if B >= 2:
        Z = t._project(X_fit)
        lo, hi = Z.min(axis=0), Z.max(axis=0)
        t = replace(t, bin_low=lo, bin_width=(hi - lo) / B, bins=int(B))
    return t


def build_views(g: ViewGenotype, X_fit: np.ndarray) -> tuple[ViewTransform, ViewTransform]:
    X_fit = np.asarray(X_fit, dtype=float)
    if len(X_fit) == 0:
        raise ValueError("cannot fit view transforms on an empty matrix")
    if X_fit.shape[1] != g.d:
        raise ValueError(f"genotype covers {g.d} features but data has {X_fit.shape[1]}")
    if g.m1.sum() == 0 or g.m2.sum() == 0:
        g = repair_view(g, np.random.default_rng(g.proj_seed), ViewDomain.for_features(g.d))
    return (
        _build_one(g.m1, g.p1, g.k1, g.B1, g.proj_seed, 1, X_fit),
        _build_one(g.m2, g.p2, g.k2, g.B2, g.proj_seed, 2, X_fit),
    )


def _step(value, rng):
    return value + (1 if rng.random() < 0.5 else -1)


def mutate_view(g: ViewGenotype, p_bit: float, p_flip: float, rng, domain: ViewDomain | None = None) -> ViewGenotype:
    domain = domain or ViewDomain.for_features(g.d)
    m1 = g.m1 ^ (rng.random(g.d) < p_bit)
    m2 = g.m2 ^ (rng.random(g.d) < p_bit)
    ints = {}
    for f in ("k1", "k2", "B1", "B2", "proj_seed"):
        v = getattr(g, f)
        ints[f] = _step(v, rng) if rng.random() < p_flip else v
    p1 = (not g.p1) if rng.random() < p_flip else g.p1
    p2 = (not g.p2) if rng.random() < p_flip else g.p2
    return repair_view(ViewGenotype(m1, m2, p1, p2, **ints), rng, domain)


def crossover_view(g1: ViewGenotype, g2: ViewGenotype, rng, domain: ViewDomain | None = None):
    if g1.d != g2.d:
        raise ValueError("parents cover different feature counts")
    domain = domain or ViewDomain.for_features(g1.d)
    a, b = g1.to_dict(), g2.to_dict()
    for f in ("m1", "m2"):
        swap = rng.random(g1.d) < 0.5
        x, y = np.asarray(a[f]), np.asarray(b[f])
        a[f], b[f] = np.where(swap, y, x), np.where(swap, x, y)
    for f in ("p1", "p2", "k1", "k2", "B1", "B2", "proj_seed"):
        if rng.random() < 0.5:
            a[f], b[f] = b[f], a[f]
    return (
        repair_view(ViewGenotype(**a), rng, domain),
        repair_view(ViewGenotype(**b), rng, domain),
    )


def repair_view(g: ViewGenotype, rng, domain: ViewDomain | None = None) -> ViewGenotype:
    domain = domain or ViewDomain.for_features(g.d)
    if domain.k_min > g.d:
        raise ConfigurationError(f"k_min={domain.k_min} exceeds the feature count {g.d}")
    masks = []
    for m in (g.m1, g.m2):
        m = m.copy()
        while m.sum() < domain.k_min:
            zeros = np.flatnonzero(~m)
            m[zeros[rng.integers(len(zeros))]] = True
        masks.append(m)
    out = ViewGenotype(
        masks[0],
        masks[1],
        g.p1,
        g.p2,
        int(np.clip(g.k1, 2, domain.k_max)),
        int(np.clip(g.k2, 2, domain.k_max)),
        int(np.clip(g.B1, 0, domain.B_max)),
        int(np.clip(g.B2, 0, domain.B_max)),
        int(np.clip(g.proj_seed, 0, PROJ_SEED_MAX)),
    )
    return g if out == g else out
