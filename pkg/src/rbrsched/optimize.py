"""Parameter synthesis: blocking tolerances, non-preemptive ending lengths
and preemption thresholds."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .model import Number, Scheme, TaskSet, as_time, ensure_valid
from .rta import (
    ZERO,
    AnalysisReport,
    TaskResult,
    blocking_pt,
    integral_copy,
    npe_task_response,
    pt_task_result,
    rta_pt,
    wcwe_pt_all,
)


@dataclass(frozen=True)
class BlockingTolerance:
    task_id: str
    beta: Optional[Fraction]  # None when unresolvable
    resolvable: bool
    probes: int = 0


def simplest_between(lo: Fraction, hi: Fraction) -> Fraction:
    """Rational with the smallest denominator in ``[lo, hi]`` (``0 <= lo <= hi``)."""
    if lo > hi or lo < 0:
        raise ValueError("need 0 <= lo <= hi")
    fl = math.floor(lo)
    if fl == lo:
        return Fraction(fl)
    if fl + 1 <= hi:
        return Fraction(fl + 1)
    return fl + 1 / simplest_between(1 / (hi - fl), 1 / (lo - fl))


def blocking_tolerance(
    ts: TaskSet,
    i: int,
    q_prefix: Optional[Sequence[Number]] = None,
    eps: Optional[Number] = None,
) -> BlockingTolerance:
    """Largest blocking task ``i`` absorbs under non-preemptive endings.

    Binary search over ``[0, T_i]`` until the bracket is narrower than
    ``eps`` (default ``T_i / 2**30``).  The low end of the bracket is always
    proven feasible and the high end infeasible.  The result is the simplest
    rational inside the final bracket when that value is itself feasible,
    otherwise the low end.  ``q_prefix`` supplies Q for tasks ``0..i``.
    """
    task = ts.tasks[i]
    if q_prefix is not None:
        if len(q_prefix) != i + 1:
            raise ValueError("q_prefix must hold one value per task 0..i")
        qs = [as_time(q) for q in q_prefix] + [t.q_end for t in ts.tasks[i + 1 :]]
        ts = ts.with_q(qs)
    if any(t.q_end is None for t in ts.tasks[: i + 1]):
        raise ValueError("Q must be known for the task and every higher priority task")
    width = task.period / 2**30 if eps is None else as_time(eps)
    if width <= 0:
        raise ValueError("search width must be positive")

    probes = 0

    def ok(b: Fraction) -> bool:
        nonlocal probes
        probes += 1
        r, conv = npe_task_response(ts, i, blocking=b)
        return conv and r <= task.deadline

    if not ok(ZERO):
        return BlockingTolerance(task.id, None, False, probes)
    lo, hi = ZERO, task.period
    if ok(hi):  # cannot happen while C > 0; kept as a guard
        return BlockingTolerance(task.id, hi, True, probes)
    while hi - lo > width:
        mid = (lo + hi) / 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    nice = simplest_between(lo, hi)
    if nice != lo and nice != hi and ok(nice):
        lo = nice
    return BlockingTolerance(task.id, Fraction(lo), True, probes)


@dataclass(frozen=True)
class QAssignment:
    q: Optional[tuple[Fraction, ...]]
    betas: tuple[BlockingTolerance, ...]
    failed_task: Optional[str] = None

    @property
    def feasible(self) -> bool:
        return self.q is not None

    def apply(self, ts: TaskSet) -> TaskSet:
        if self.q is None:
            raise ValueError("no feasible assignment to apply")
        return ts.with_q(self.q)


def optimal_q_assignment(ts: TaskSet, eps: Optional[Number] = None) -> QAssignment:
    """Non-preemptive ending lengths in decreasing priority order.

    ``Q_1 = C_1``; then ``Q_i = min(min_{j<i} beta_j, C_i)`` where ``beta_j``
    is computed with the Q values already fixed for tasks ``1..j``.  Fails
    when some task is unschedulable even without blocking.
    """
    ensure_valid(ts)
    q: list[Fraction] = []
    betas: list[BlockingTolerance] = []
    cap: Optional[Fraction] = None
    for i, task in enumerate(ts.tasks):
        qi = task.wcet if cap is None else min(cap, task.wcet)
        q.append(qi)
        bt = blocking_tolerance(ts, i, q, eps)
        betas.append(bt)
        if not bt.resolvable:
            return QAssignment(None, tuple(betas), task.id)
        cap = bt.beta if cap is None else min(cap, bt.beta)
    return QAssignment(tuple(q), tuple(betas))


# ---------------------------------------------------------------- genetic search


@dataclass(frozen=True)
class GaParams:
    population: int = 32
    generations: int = 100
    mutation_rate: float = 0.1
    crossover_rate: float = 0.8
    seed: int = 0
    elitism: int = 2
    tournament: int = 2
    stall_generations: Optional[int] = None  # stop after this many generations without progress

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        for name in ("mutation_rate", "crossover_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.elitism <= self.population:
            raise ValueError("elitism must lie in [0, population]")
        if self.generations < 0 or self.tournament < 1:
            raise ValueError("generations >= 0 and tournament >= 1 required")


@dataclass(frozen=True)
class ThresholdResult:
    levels: tuple[int, ...]  # 1-based priority levels, 1 = highest
    thresholds: tuple[int, ...]  # same, as priority values
    feasible: bool
    report: AnalysisReport
    evaluations: int
    generations: int

    def apply(self, ts: TaskSet) -> TaskSet:
        return ts.with_thresholds(self.thresholds)


def _slack(r: TaskResult) -> Fraction:
    resp = max(r.response, r.ideal_response) if r.critical else r.ideal_response
    return Fraction(r.deadline - resp) / r.deadline


class _PtEvaluator:
    """Fitness of threshold genomes with per-task memoisation.

    Gene ``i`` is the index of the task whose priority becomes ``lambda_i``
    (``0 <= g_i <= i``).  Task ``i``'s result only depends on genes ``0..i``
    and on its blocking term, which is used as part of the cache key.
    """

    def __init__(self, ts: TaskSet, blocker_waste: bool = False):
        self.ts = ts
        self.blocker_waste = blocker_waste
        self.fast, _ = integral_copy(ts)
        self.prio = [t.priority for t in ts.tasks]
        self.cache: dict[tuple, TaskResult] = {}
        self.fitness_cache: dict[tuple, tuple] = {}
        self.evaluations = 0

    def report(self, genome: tuple[int, ...], exact: bool = False) -> AnalysisReport:
        base = self.ts if exact else self.fast
        ts = base.with_thresholds([self.prio[g] for g in genome])
        if exact:
            return rta_pt(ts, blocker_waste=self.blocker_waste)
        wcwe = wcwe_pt_all(ts)
        out = []
        for i in range(len(ts)):
            key = (genome[: i + 1], blocking_pt(ts, i))
            if self.blocker_waste:
                pi = ts.tasks[i].priority
                key += (max((wcwe[j] for j in range(i + 1, len(ts)) if pi <= ts.tasks[j].threshold), default=0),)
            res = self.cache.get(key)
            if res is None:
                res = pt_task_result(ts, i, wcwe, blocker_waste=self.blocker_waste)
                self.cache[key] = res
            out.append(res)
        return AnalysisReport(Scheme.PT, tuple(out))

    def fitness(self, genome: tuple[int, ...]) -> tuple:
        f = self.fitness_cache.get(genome)
        if f is None:
            self.evaluations += 1
            rep = self.report(genome)
            ok = [r for r in rep.tasks if r.schedulable]
            f = (len(ok), sum((_slack(r) for r in ok), ZERO))
            self.fitness_cache[genome] = f
        return f


def ga_threshold_assignment(
    ts: TaskSet, params: GaParams = GaParams(), blocker_waste: bool = False
) -> ThresholdResult:
    """Search preemption thresholds with a seeded genetic algorithm.

    Fitness is the number of schedulable tasks, ties broken by the summed
    normalised slack of those tasks.  The initial population contains the
    fully preemptive (``lambda_i = pi_i``) and fully non-preemptive
    (``lambda_i = max``) assignments.  The search stops early once every
    task is schedulable.  ``blocker_waste`` selects the analysis variant
    of ``rta_pt``.
    """
    ensure_valid(ts)
    n = len(ts)
    rng = random.Random(params.seed)
    ev = _PtEvaluator(ts, blocker_waste)
    full = n

    pop: list[tuple[int, ...]] = [tuple(range(n)), tuple([0] * n)]
    while len(pop) < params.population:
        pop.append(tuple(rng.randint(0, i) for i in range(n)))
    pop = pop[: max(params.population, 2)]

    def rank(p):
        # best first; genome as deterministic tie-break
        return sorted(p, key=lambda g: (ev.fitness(g), tuple(-x for x in g)), reverse=True)

    def pick(ranked_pop):
        contenders = [rng.choice(ranked_pop) for _ in range(params.tournament)]
        return max(contenders, key=lambda g: (ev.fitness(g), tuple(-x for x in g)))

    ranked = rank(pop)
    gen = 0
    best_fit = ev.fitness(ranked[0])
    since = 0
    while gen < params.generations and ev.fitness(ranked[0])[0] < full:
        if params.stall_generations is not None and since >= params.stall_generations:
            break
        gen += 1
        nxt = ranked[: params.elitism]
        while len(nxt) < params.population:
            a, b = pick(ranked), pick(ranked)
            if n > 1 and rng.random() < params.crossover_rate:
                cut = rng.randint(1, n - 1)
                child = list(a[:cut] + b[cut:])
            else:
                child = list(a)
            for i in range(n):
                if rng.random() < params.mutation_rate:
                    child[i] = rng.randint(0, i)
            nxt.append(tuple(child))
        ranked = rank(nxt)
        if ev.fitness(ranked[0]) > best_fit:
            best_fit, since = ev.fitness(ranked[0]), 0
        else:
            since += 1

    best = ranked[0]
    rep = ev.report(best, exact=True)
    thresholds = tuple(ev.prio[g] for g in best)
    return ThresholdResult(
        levels=tuple(g + 1 for g in best),
        thresholds=thresholds,
        feasible=rep.feasible,
        report=rep,
        evaluations=ev.evaluations,
        generations=gen,
    )
