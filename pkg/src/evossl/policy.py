"""Pseudo-labeling policy genotype, threshold schedule and variation operators."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class PolicyDomain:
    l2: tuple[float, float] = (1e-4, 10.0)  # searched on a log10 scale
    max_epochs: tuple[int, int] = (50, 500)
    tau0: tuple[float, float] = (0.5, 0.99)
    delta_tau: tuple[float, float] = (0.0, 0.1)
    tau_min: tuple[float, float] = (0.5, 0.99)
    q: tuple[int, int] = (1, 50)
    gamma: tuple[float, float] = (0.0, 0.5)
    T: tuple[int, int] = (1, 20)
    allow_calibrate: bool = False

    @classmethod
    def from_dict(cls, data: dict | None) -> "PolicyDomain":
        data = dict(data or {})
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


@dataclass(frozen=True)
class ClassifierGenes:
    l2: float = 1e-2
    max_epochs: int = 200
    calibrate: bool = False


@dataclass(frozen=True)
class PolicyGenotype:
    theta_clf: ClassifierGenes = field(default_factory=ClassifierGenes)
    tau0: float = 0.9
    delta_tau: float = 0.0
    tau_min: float = 0.9
    q: int = 10
    gamma: float = 0.0
    nu: bool = False
    T: int = 10

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyGenotype":
        data = dict(data)
        data["theta_clf"] = ClassifierGenes(**data.get("theta_clf", {}))
        return cls(**data)

    def is_feasible(self, domain: PolicyDomain) -> bool:
        def within(v, lohi):
            return lohi[0] <= v <= lohi[1]

        return (
            within(self.theta_clf.l2, domain.l2)
            and within(self.theta_clf.max_epochs, domain.max_epochs)
            and within(self.tau0, domain.tau0)
            and within(self.delta_tau, domain.delta_tau)
            and within(self.tau_min, domain.tau_min)
            and self.tau_min <= self.tau0
            and within(self.q, domain.q)
            and within(self.gamma, domain.gamma)
            and within(self.T, domain.T)
            and (domain.allow_calibrate or not self.theta_clf.calibrate)
        )

    def numeric_vector(self, domain: PolicyDomain) -> np.ndarray:
        """Numeric genes min-max normalized to [0, 1] by their domain bounds."""
        lo, hi = np.log10(domain.l2[0]), np.log10(domain.l2[1])
        raw = [
            ((np.log10(self.theta_clf.l2) - lo) / (hi - lo)),
            _norm(self.theta_clf.max_epochs, domain.max_epochs),
            _norm(self.tau0, domain.tau0),
            _norm(self.delta_tau, domain.delta_tau),
            _norm(self.tau_min, domain.tau_min),
            _norm(self.q, domain.q),
            _norm(self.gamma, domain.gamma),
            _norm(self.T, domain.T),
        ]
        return np.clip(np.array(raw, dtype=float), 0.0, 1.0)

    def boolean_vector(self) -> np.ndarray:
        return np.array([self.nu, self.theta_clf.calibrate], dtype=bool)


def _norm(v, lohi):
    lo, hi = lohi
    return 0.0 if hi == lo else (v - lo) / (hi - lo)


def threshold_at(b: PolicyGenotype, t: int) -> float:
    return max(b.tau_min, b.tau0 - t * b.delta_tau)


# genes that take arithmetic crossover and bounded additive-noise mutation;
# l2 is varied on a log10 scale
_CONTINUOUS = ("l2", "tau0", "delta_tau", "tau_min", "gamma")


def _get_cont(b: PolicyGenotype) -> dict:
    return {
        "l2": b.theta_clf.l2,
        "tau0": b.tau0,
        "delta_tau": b.delta_tau,
        "tau_min": b.tau_min,
        "gamma": b.gamma,
    }


def _to_scale(k, v):
    return float(np.log10(v)) if k == "l2" else v


def _from_scale(k, v):
    return float(10.0**v) if k == "l2" else v


def _cont_bounds(domain: PolicyDomain) -> dict:
    return {
        "l2": domain.l2,
        "tau0": domain.tau0,
        "delta_tau": domain.delta_tau,
        "tau_min": domain.tau_min,
        "gamma": domain.gamma,
    }


def _assemble(cont: dict, max_epochs, calibrate, q, nu, T) -> PolicyGenotype:
    return PolicyGenotype(
        theta_clf=ClassifierGenes(float(cont["l2"]), int(max_epochs), bool(calibrate)),
        tau0=float(cont["tau0"]),
        delta_tau=float(cont["delta_tau"]),
        tau_min=float(cont["tau_min"]),
        q=int(q),
        gamma=float(cont["gamma"]),
        nu=bool(nu),
        T=int(T),
    )


def random_policy(domain: PolicyDomain, rng: np.random.Generator) -> PolicyGenotype:
    bounds = _cont_bounds(domain)
    cont = {
        k: _from_scale(k, rng.uniform(_to_scale(k, bounds[k][0]), _to_scale(k, bounds[k][1])))
        for k in _CONTINUOUS
    }
    b = _assemble(
        cont,
        max_epochs=rng.integers(domain.max_epochs[0], domain.max_epochs[1] + 1),
        calibrate=domain.allow_calibrate and rng.random() < 0.5,
        q=rng.integers(domain.q[0], domain.q[1] + 1),
        nu=rng.random() < 0.5,
        T=rng.integers(domain.T[0], domain.T[1] + 1),
    )
    return repair_policy(b, domain)


def mutate_policy(b: PolicyGenotype, p_mut: float, p_flip: float, rng, domain: PolicyDomain | None = None) -> PolicyGenotype:
    domain = domain or PolicyDomain()
    bounds = _cont_bounds(domain)
    cont = _get_cont(b)
    for k in _CONTINUOUS:
        if rng.random() < p_mut:
            lo, hi = (_to_scale(k, v) for v in bounds[k])
            half = 0.1 * (hi - lo)
            moved = np.clip(_to_scale(k, cont[k]) + rng.uniform(-half, half), lo, hi)
            cont[k] = _from_scale(k, float(moved))
    max_epochs = b.theta_clf.max_epochs
    if rng.random() < p_mut:
        half = 0.1 * (domain.max_epochs[1] - domain.max_epochs[0])
        max_epochs = int(round(max_epochs + rng.uniform(-half, half)))
    q, T = b.q, b.T
    if rng.random() < p_mut:
        q += 1 if rng.random() < 0.5 else -1
    if rng.random() < p_mut:
        T += 1 if rng.random() < 0.5 else -1
    nu = (not b.nu) if rng.random() < p_flip else b.nu
    calibrate = b.theta_clf.calibrate
    if domain.allow_calibrate and rng.random() < p_flip:
        calibrate = not calibrate
    return repair_policy(_assemble(cont, max_epochs, calibrate, q, nu, T), domain)


def crossover_policy(
    b1: PolicyGenotype,
    b2: PolicyGenotype,
    rng,
    domain: PolicyDomain | None = None,
    per_gene_alpha: bool = False,
    alpha: float | None = None,
):
    """Arithmetic crossover on continuous genes, 0.5 swaps on discrete ones."""
    domain = domain or PolicyDomain()
    c1, c2 = _get_cont(b1), _get_cont(b2)
    shared = rng.uniform() if alpha is None else alpha
    o1, o2 = {}, {}
    for k in _CONTINUOUS:
        a = rng.uniform() if (per_gene_alpha and alpha is None) else shared
        x1, x2 = _to_scale(k, c1[k]), _to_scale(k, c2[k])
        o1[k] = _from_scale(k, a * x1 + (1 - a) * x2)
        o2[k] = _from_scale(k, a * x2 + (1 - a) * x1)
        if c1[k] == c2[k]:
            o1[k] = o2[k] = c1[k]
    disc1 = {"max_epochs": b1.theta_clf.max_epochs, "calibrate": b1.theta_clf.calibrate, "q": b1.q, "nu": b1.nu, "T": b1.T}
    disc2 = {"max_epochs": b2.theta_clf.max_epochs, "calibrate": b2.theta_clf.calibrate, "q": b2.q, "nu": b2.nu, "T": b2.T}
    for k in disc1:
        if rng.random() < 0.5:
            disc1[k], disc2[k] = disc2[k], disc1[k]
    return (
        repair_policy(_assemble(o1, **disc1), domain),
        repair_policy(_assemble(o2, **disc2), domain),
    )


def repair_policy(b: PolicyGenotype, domain: PolicyDomain | None = None) -> PolicyGenotype:
    domain = domain or PolicyDomain()
    bounds = _cont_bounds(domain)
    cont = {k: float(np.clip(v, *bounds[k])) for k, v in _get_cont(b).items()}
    cont["delta_tau"] = max(0.0, cont["delta_tau"])
    cont["tau_min"] = min(cont["tau_min"], cont["tau0"])
    out = _assemble(
        cont,
        max_epochs=int(np.clip(b.theta_clf.max_epochs, *domain.max_epochs)),
        calibrate=b.theta_clf.calibrate and domain.allow_calibrate,
        q=int(np.clip(b.q, *domain.q)),
        nu=b.nu,
        T=int(np.clip(b.T, *domain.T)),
    )
    return b if out == b else out
