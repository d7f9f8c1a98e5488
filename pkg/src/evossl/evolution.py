"""Joint fitness, cooperative coevolution (CC-SSL) and the monolithic EA (EA-SSL)."""

from __future__ import annotations

import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data import Dataset, SplitPlan, resample_labeled, rng_for, stable_hash
from .metrics import diversity, macro_f1_score, trajectory_cost
from .policy import (
    PolicyDomain,
    PolicyGenotype,
    crossover_policy,
    mutate_policy,
    random_policy,
)
from .ssl import ViewData, fused_proba, run_ssl
from .summary import RunSummary, summarize_predictions
from .views import ViewDomain, ViewGenotype, crossover_view, mutate_view, random_view


@dataclass(frozen=True)
class OperatorProbs:
    pA_cx: float = 0.85
    pA_mut: float = 0.45
    pB_cx: float = 0.85
    pB_mut: float = 0.35


@dataclass(frozen=True)
class FitnessWeights:
    lambda_std: float = 0.4
    lambda_bias: float = 0.7
    lambda_add: float = 0.0

    def fitness(self, mu, sigma, probe_drop, n_add) -> float:
        return mu - self.lambda_std * sigma - self.lambda_bias * probe_drop - self.lambda_add * n_add


@dataclass(frozen=True)
class SearchConfig:
    pop_a: int = 6
    pop_b: int = 6
    pop_mono: int = 36
    generations: int = 50
    random_partners: int = 2
    resamples: int = 3
    elites: int = 1
    tournament_size: int = 2
    operators: OperatorProbs = field(default_factory=OperatorProbs)
    ea_operators: OperatorProbs = field(default_factory=lambda: OperatorProbs(0.85, 0.35, 0.85, 0.35))
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    seed: int = 0
    per_gene_alpha: bool = False
    k_min: int = 2
    k_max_cap: int = 16
    B_max: int = 10
    policy_domain: PolicyDomain = field(default_factory=PolicyDomain)

    def __post_init__(self):
        self.validate()

    @property
    def teams_per_individual(self) -> int:
        return self.random_partners + 1

    def validate(self) -> None:
        for name in ("pop_a", "pop_b", "pop_mono", "generations", "resamples", "tournament_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"search.{name} must be >= 1")
        if self.random_partners < 0:
            raise ValueError("search.random_partners must be >= 0")
        if self.elites < 0 or self.elites >= min(self.pop_a, self.pop_b, self.pop_mono) and min(self.pop_a, self.pop_b, self.pop_mono) > 1:
            raise ValueError("search.elites must be smaller than every population size")
        for ops in (self.operators, self.ea_operators):
            for f in fields(ops):
                v = getattr(ops, f.name)
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"operator probability {f.name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "SearchConfig":
        data = dict(data or {})
        if "teams_per_individual" in data:
            data["random_partners"] = int(data.pop("teams_per_individual")) - 1
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown search fields: {sorted(unknown)}")
        for key, typ in (("operators", OperatorProbs), ("ea_operators", OperatorProbs), ("weights", FitnessWeights)):
            if isinstance(data.get(key), dict):
                data[key] = typ(**data[key])
        if isinstance(data.get("policy_domain"), dict):
            data["policy_domain"] = PolicyDomain.from_dict(data["policy_domain"])
        return cls(**data)

    def view_domain(self, d: int) -> ViewDomain:
        return ViewDomain.for_features(d, self.k_min, self.k_max_cap, self.B_max)


@dataclass(frozen=True)
class EvalRecord:
    a: ViewGenotype
    b: PolicyGenotype
    scores: tuple[float, ...]
    mu: float
    sigma: float
    probe_drop_mean: float
    n_add_mean: float
    F: float
    eval_cost_calls: int

    def to_dict(self) -> dict:
        return {
            "a": self.a.to_dict(),
            "b": self.b.to_dict(),
            "scores": list(self.scores),
            "mu": self.mu,
            "sigma": self.sigma,
            "probe_drop_mean": self.probe_drop_mean,
            "n_add_mean": self.n_add_mean,
            "F": self.F,
            "eval_cost_calls": self.eval_cost_calls,
        }


class JointEvaluator:
    """Scores (view builder, policy) pairs over K fixed labeled resamples.

    Every call counts K fitness calls. Results are memoized by genotype: an
    evaluation is a pure function of the pair, so a repeated pair is returned
    from the cache but still charged to the budget.
    """

    def __init__(self, ds: Dataset, plan: SplitPlan, cfg: SearchConfig, view_cache_size: int = 256):
        self.ds = ds
        self.plan = plan
        self.cfg = cfg
        self.resamples = [resample_labeled(plan, ds, k) for k in range(cfg.resamples)]
        self.calls = 0
        self.cache_hits = 0
        self.records: list[EvalRecord] = []
        self._views: OrderedDict = OrderedDict()
        self._view_cache_size = view_cache_size
        self._memo: dict = {}

    def views_for(self, a: ViewGenotype) -> ViewData:
        key = a.key()
        vd = self._views.get(key)
        if vd is None:
            vd = ViewData.build(a, self.ds.features, self.plan.pool_idx)
            self._views[key] = vd
            if len(self._views) > self._view_cache_size:
                self._views.popitem(last=False)
        else:
            self._views.move_to_end(key)
        return vd

    def __call__(self, a: ViewGenotype, b: PolicyGenotype) -> EvalRecord:
        K = len(self.resamples)
        self.calls += K
        key = (a.key(), b)
        rec = self._memo.get(key)
        if rec is not None:
            self.cache_hits += K
        else:
            rec = self._evaluate(a, b)
            self._memo[key] = rec
        self.records.append(rec)
        return rec

    def _evaluate(self, a, b) -> EvalRecord:
        vd = self.views_for(a)
        y, C = self.ds.labels, self.ds.n_classes
        val = self.plan.val_idx
        scores, drops, added = [], [], []
        for rs in self.resamples:
            out = run_ssl(self.ds, rs, a, b, self.plan.probe_idx, seed=stable_hash(self.plan.seed, rs.k), views=vd)
            pred = np.argmax(fused_proba(out.final_models, vd.X1[val], vd.X2[val]), axis=1)
            scores.append(macro_f1_score(y[val], pred, C))
            drops.append(out.probe_drop)
            added.append(out.pseudo_added)
        mu = float(np.mean(scores))
        sigma = float(np.std(scores))
        pd_mean = float(np.mean(drops))
        n_add = float(np.mean(added))
        F = self.cfg.weights.fitness(mu, sigma, pd_mean, n_add)
        return EvalRecord(a, b, tuple(scores), mu, sigma, pd_mean, n_add, F, len(self.resamples))


def evaluate_joint(a, b, ds, plan, cfg) -> EvalRecord:
    return JointEvaluator(ds, plan, cfg)(a, b)


@dataclass
class GenerationLog:
    gen: int
    best_so_far_F: float
    fitness_calls_cum: int
    wall_clock_cum: float
    diversity: dict
    best_pair: dict
    gen_best_F: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SearchResult:
    best_pair: tuple[ViewGenotype, PolicyGenotype]
    best_record: EvalRecord
    logs: list[GenerationLog]
    summary: RunSummary
    init_calls: int
    evaluator: JointEvaluator
    populations: list = field(default_factory=list)


def tournament_select(pop, fitnesses, size, rng, return_index=False):
    """Draw ``size`` distinct individuals uniformly; the fittest wins, ties go to the earliest draw."""
    size = min(size, len(pop))
    draws = rng.choice(len(pop), size=size, replace=False)
    best = draws[0]
    for i in draws[1:]:
        if fitnesses[i] > fitnesses[best]:
            best = i
    return (pop[best], int(best)) if return_index else pop[best]


def evolve(pop, fit, cfg: SearchConfig, p_cx, crossover, mutate, rng):
    """One generational step: keep the top ``elites`` verbatim, fill the rest with offspring.

    Returns the new population and its carried-over fitness (offspring get -inf).
    """
    n = len(pop)
    E = min(cfg.elites, n)
    tiebreak = rng.permutation(n)
    order = sorted(range(n), key=lambda i: (-fit[i], tiebreak[i]))
    new_pop = [pop[i] for i in order[:E]]
    new_fit = [fit[i] for i in order[:E]]
    offspring = []
    while len(offspring) < n - E:
        p1 = tournament_select(pop, fit, cfg.tournament_size, rng)
        p2 = tournament_select(pop, fit, cfg.tournament_size, rng)
        if rng.random() < p_cx:
            c1, c2 = crossover(p1, p2, rng)
        else:
            c1, c2 = p1, p2
        offspring.extend([mutate(c1, rng), mutate(c2, rng)])
    offspring = offspring[: n - E]
    return new_pop + offspring, new_fit + [-np.inf] * len(offspring)


def _view_ops(domain: ViewDomain, p_mut: float):
    def cx(g1, g2, rng):
        return crossover_view(g1, g2, rng, domain)

    def mut(g, rng):
        return mutate_view(g, p_mut / domain.d, p_mut, rng, domain)

    return cx, mut


def _policy_ops(domain: PolicyDomain, p_mut: float, per_gene_alpha: bool):
    def cx(b1, b2, rng):
        return crossover_policy(b1, b2, rng, domain, per_gene_alpha=per_gene_alpha)

    def mut(b, rng):
        return mutate_policy(b, p_mut, p_mut, rng, domain)

    return cx, mut


def _pair_dict(rec: EvalRecord) -> dict:
    return {"a": rec.a.to_dict(), "b": rec.b.to_dict(), "F": rec.F}


def _sample_partners(n, best, R, rng):
    """R distinct random partner indices, avoiding the elitist partner when possible."""
    if R == 0:
        return []
    others = [i for i in range(n) if i != best]
    if len(others) >= R:
        return [others[i] for i in rng.choice(len(others), size=R, replace=False)]
    if n >= R:
        return list(rng.choice(n, size=R, replace=False))
    return list(rng.choice(n, size=R, replace=True))


def final_assessment(method, ds, plan, a, b, **extra) -> RunSummary:
    """Train the selected pair on the first labeled resample and score it on test/validation."""
    rs = resample_labeled(plan, ds, 0)
    vd = ViewData.build(a, ds.features, plan.pool_idx)
    out = run_ssl(ds, rs, a, b, plan.probe_idx, seed=stable_hash(plan.seed, rs.k), views=vd)

    def pred(rows):
        return np.argmax(fused_proba(out.final_models, vd.X1[rows], vd.X2[rows]), axis=1)

    return summarize_predictions(
        method, ds, plan, pred(plan.test_idx), pred(plan.val_idx),
        probe_drop=out.probe_drop, pseudo_added=out.pseudo_added, **extra,
    )


class _Tracker:
    def __init__(self, evaluator: JointEvaluator):
        self.evaluator = evaluator
        self.best: EvalRecord | None = None
        self.logs: list[GenerationLog] = []
        self.start = time.perf_counter()
        self.base_calls = 0

    def offer(self, rec: EvalRecord) -> None:
        if self.best is None or rec.F > self.best.F:
            self.best = rec

    def log(self, gen, views, policies, policy_domain, gen_best):
        snap = diversity(views, policies, policy_domain)
        self.logs.append(
            GenerationLog(
                gen=gen,
                best_so_far_F=self.best.F,
                fitness_calls_cum=self.evaluator.calls - self.base_calls,
                wall_clock_cum=time.perf_counter() - self.start,
                diversity=snap.to_dict(),
                best_pair=_pair_dict(self.best),
                gen_best_F=gen_best,
            )
        )


def run_ccssl(ds: Dataset, plan: SplitPlan, cfg: SearchConfig, on_generation=None) -> SearchResult:
    """Two-population cooperative coevolution with elitist + random collaborators."""
    rng = rng_for("ccssl", cfg.seed, plan.digest())
    vdom = cfg.view_domain(ds.d)
    pdom = cfg.policy_domain
    ev = JointEvaluator(ds, plan, cfg)
    tr = _Tracker(ev)
    ops = cfg.operators
    a_cx, a_mut = _view_ops(vdom, ops.pA_mut)
    b_cx, b_mut = _policy_ops(pdom, ops.pB_mut, cfg.per_gene_alpha)

    pop_a = [random_view(vdom, rng) for _ in range(cfg.pop_a)]
    pop_b = [random_policy(pdom, rng) for _ in range(cfg.pop_b)]

    # initial collaborations: one random partner each
    fit_a, fit_b = [], []
    for a in pop_a:
        rec = ev(a, pop_b[rng.integers(len(pop_b))])
        tr.offer(rec)
        fit_a.append(rec.F)
    for b in pop_b:
        rec = ev(pop_a[rng.integers(len(pop_a))], b)
        tr.offer(rec)
        fit_b.append(rec.F)
    init_calls = ev.calls
    tr.base_calls = init_calls
    tr.log(0, pop_a, pop_b, pdom, max(fit_a + fit_b))

    R = cfg.random_partners
    for g in range(1, cfg.generations + 1):
        ia = int(np.argmax(fit_a))
        ib = int(np.argmax(fit_b))
        a_best, b_best = pop_a[ia], pop_b[ib]
        new_fit_a = []
        for a in pop_a:
            partners = [b_best] + [pop_b[j] for j in _sample_partners(len(pop_b), ib, R, rng)]
            recs = [ev(a, b) for b in partners]
            for rec in recs:
                tr.offer(rec)
            new_fit_a.append(max(r.F for r in recs))
        new_fit_b = []
        for b in pop_b:
            partners = [a_best] + [pop_a[i] for i in _sample_partners(len(pop_a), ia, R, rng)]
            recs = [ev(a, b) for a in partners]
            for rec in recs:
                tr.offer(rec)
            new_fit_b.append(max(r.F for r in recs))
        fit_a, fit_b = new_fit_a, new_fit_b
        gen_best = max(fit_a + fit_b)
        tr.log(g, pop_a, pop_b, pdom, gen_best)
        if on_generation is not None:
            on_generation(tr.logs[-1], pop_a, pop_b, fit_a, fit_b)
        pop_a, fit_a = evolve(pop_a, fit_a, cfg, ops.pA_cx, a_cx, a_mut, rng)
        pop_b, fit_b = evolve(pop_b, fit_b, cfg, ops.pB_cx, b_cx, b_mut, rng)

    best = tr.best
    cost = trajectory_cost(tr.logs)
    summary = final_assessment(
        "ccssl", ds, plan, best.a, best.b,
        best_F=best.F, init_calls=init_calls, fitness_calls=ev.calls - init_calls, cache_hits=ev.cache_hits,
    )
    summary.gtt, summary.ttt = cost.gtt, cost.ttt
    return SearchResult((best.a, best.b), best, tr.logs, summary, init_calls, ev, [pop_a, pop_b])


@dataclass(frozen=True)
class JointGenotype:
    a: ViewGenotype
    b: PolicyGenotype

    def to_dict(self) -> dict:
        return {"a": self.a.to_dict(), "b": self.b.to_dict()}


def run_eassl(ds: Dataset, plan: SplitPlan, cfg: SearchConfig, on_generation=None) -> SearchResult:
    """Single population of concatenated (view builder, policy) genotypes."""
    rng = rng_for("eassl", cfg.seed, plan.digest())
    vdom = cfg.view_domain(ds.d)
    pdom = cfg.policy_domain
    ev = JointEvaluator(ds, plan, cfg)
    tr = _Tracker(ev)
    ops = cfg.ea_operators
    a_cx, a_mut = _view_ops(vdom, ops.pA_mut)
    b_cx, b_mut = _policy_ops(pdom, ops.pB_mut, cfg.per_gene_alpha)

    def crossover(j1, j2, rng):
        a1, a2 = a_cx(j1.a, j2.a, rng) if rng.random() < ops.pA_cx else (j1.a, j2.a)
        b1, b2 = b_cx(j1.b, j2.b, rng) if rng.random() < ops.pB_cx else (j1.b, j2.b)
        return JointGenotype(a1, b1), JointGenotype(a2, b2)

    def mutate(j, rng):
        return JointGenotype(a_mut(j.a, rng), b_mut(j.b, rng))

    pop = [JointGenotype(random_view(vdom, rng), random_policy(pdom, rng)) for _ in range(cfg.pop_mono)]

    def evaluate(pop):
        recs = [ev(j.a, j.b) for j in pop]
        for rec in recs:
            tr.offer(rec)
        return [r.F for r in recs]

    fit = evaluate(pop)
    init_calls = ev.calls
    tr.base_calls = init_calls
    tr.log(0, [j.a for j in pop], [j.b for j in pop], pdom, max(fit))
    for g in range(1, cfg.generations + 1):
        # segment-wise probabilities are applied inside `crossover`
        pop, _ = evolve(pop, fit, cfg, 1.0, crossover, mutate, rng)
        fit = evaluate(pop)
        tr.log(g, [j.a for j in pop], [j.b for j in pop], pdom, max(fit))
        if on_generation is not None:
            on_generation(tr.logs[-1], pop, fit)

    best = tr.best
    cost = trajectory_cost(tr.logs)
    summary = final_assessment(
        "eassl", ds, plan, best.a, best.b,
        best_F=best.F, init_calls=init_calls, fitness_calls=ev.calls - init_calls, cache_hits=ev.cache_hits,
    )
    summary.gtt, summary.ttt = cost.gtt, cost.ttt
    return SearchResult((best.a, best.b), best, tr.logs, summary, init_calls, ev, [pop])
