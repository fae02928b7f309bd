"""Feasibility-ratio sweeps, figure-scenario replays and soundness campaigns."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Mapping, Optional, Sequence

import yaml

from .generator import GenSpec, derive_seed, generate_taskset
from .model import Scheme, TaskSet, as_time
from .optimize import GaParams, ga_threshold_assignment, optimal_q_assignment
from .rta import analyze, rta_nonpreemptive, rta_npe, rta_preemptive
from .simulate import Restart, SearchResult, SimTrace, adversarial_restart_search, simulate

WORKERS_ENV = "RBRSCHED_WORKERS"
DIVISORS_120 = (2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 24, 30, 40, 60, 120)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SweepConfig:
    utilizations: tuple[Fraction, ...]
    task_counts: tuple[int, ...]
    trials: int = 100
    period_min: Fraction = Fraction(10)
    period_max: Fraction = Fraction(1000)
    restart_cost: Fraction = Fraction(0)
    schemes: tuple[Scheme, ...] = (Scheme.FP, Scheme.NP, Scheme.NPE, Scheme.PT)
    seed: int = 0
    npe_q: str = "optimal"  # or "wcet" (Q_i = C_i)
    pt_blocker_waste: bool = False  # see rta_pt
    ga: GaParams = GaParams(generations=50)
    log_uniform: bool = True
    granularity: Optional[Fraction] = Fraction(1)
    period_choices: Optional[tuple[Fraction, ...]] = None
    integer_wcets: bool = False
    critical_fraction: Fraction = Fraction(1)
    workers: Optional[int] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.utilizations or not self.task_counts or not self.schemes:
            raise ValueError("utilization, task-count and scheme grids must be non-empty")
        if self.npe_q not in ("optimal", "wcet"):
            raise ValueError("npe_q must be 'optimal' or 'wcet'")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SweepConfig":
        d = dict(doc)
        kw: dict[str, Any] = {
            "utilizations": tuple(as_time(u) for u in d.pop("utilizations")),
            "task_counts": tuple(int(n) for n in d.pop("task_counts")),
        }
        if "periods" in d:
            lo, hi = d.pop("periods")
            kw["period_min"], kw["period_max"] = as_time(lo), as_time(hi)
        for key in ("period_min", "period_max", "restart_cost", "critical_fraction"):
            if key in d:
                kw[key] = as_time(d.pop(key))
        if "granularity" in d:
            g = d.pop("granularity")
            kw["granularity"] = None if g is None else as_time(g)
        if "period_choices" in d:
            pc = d.pop("period_choices")
            kw["period_choices"] = None if pc is None else tuple(as_time(p) for p in pc)
        if "schemes" in d:
            kw["schemes"] = tuple(Scheme.parse(s) for s in d.pop("schemes"))
        if "ga" in d:
            kw["ga"] = GaParams(**{"generations": 50, **d.pop("ga")})
        for key in ("trials", "seed", "workers"):
            if key in d:
                kw[key] = None if d[key] is None else int(d.pop(key))
        for key in ("npe_q", "log_uniform", "integer_wcets", "pt_blocker_waste"):
            if key in d:
                kw[key] = d.pop(key)
        if d:
            raise ValueError(f"unknown sweep config keys: {', '.join(sorted(d))}")
        return cls(**kw)

    @classmethod
    def load(cls, path: str) -> "SweepConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_dict(self) -> dict:
        return {
            "utilizations": [str(u) for u in self.utilizations],
            "task_counts": list(self.task_counts),
            "trials": self.trials,
            "periods": [str(self.period_min), str(self.period_max)],
            "restart_cost": str(self.restart_cost),
            "schemes": [s.value for s in self.schemes],
            "seed": self.seed,
            "npe_q": self.npe_q,
            "pt_blocker_waste": self.pt_blocker_waste,
            "ga": {k: getattr(self.ga, k) for k in self.ga.__dataclass_fields__},
            "log_uniform": self.log_uniform,
            "granularity": None if self.granularity is None else str(self.granularity),
            "period_choices": None
            if self.period_choices is None
            else [str(p) for p in self.period_choices],
            "integer_wcets": self.integer_wcets,
            "critical_fraction": str(self.critical_fraction),
        }

    def gen_spec(self, u: Fraction, n: int, trial: int) -> GenSpec:
        return GenSpec(
            n=n,
            utilization=u,
            period_min=self.period_min,
            period_max=self.period_max,
            seed=trial_seed(self.seed, u, n, trial),
            critical_fraction=self.critical_fraction,
            log_uniform=self.log_uniform,
            granularity=self.granularity,
            period_choices=self.period_choices,
            integer_wcets=self.integer_wcets,
            restart_cost=self.restart_cost,
        )


def trial_seed(master: int, u: Fraction, n: int, trial: int) -> int:
    return derive_seed(master, u, n, trial)


class SweepError(RuntimeError):
    def __init__(self, message: str, seed: int):
        super().__init__(f"{message} (replay seed {seed})")
        self.seed = seed


def scheme_feasible(
    ts: TaskSet,
    scheme: Scheme,
    npe_q: str = "optimal",
    ga: GaParams = GaParams(),
    pt_blocker_waste: bool = False,
) -> bool:
    """Synthesise the scheme's parameters, then decide RBR-feasibility."""
    if scheme is Scheme.FP:
        return rta_preemptive(ts).feasible
    if scheme is Scheme.NP:
        return rta_nonpreemptive(ts).feasible
    if scheme is Scheme.NPE:
        if npe_q == "wcet":
            return rta_npe(ts.with_q([t.wcet for t in ts.tasks])).feasible
        qa = optimal_q_assignment(ts)
        return qa.feasible and rta_npe(qa.apply(ts)).feasible
    return ga_threshold_assignment(ts, ga, pt_blocker_waste).feasible


def _trial(args) -> tuple[Fraction, int, int, dict[str, bool]]:
    cfg, u, n, trial = args
    spec = cfg.gen_spec(u, n, trial)
    try:
        ts = generate_taskset(spec)
        verdicts = {s.value: scheme_feasible(ts, s, cfg.npe_q, cfg.ga, cfg.pt_blocker_waste) for s in cfg.schemes}
    except Exception as exc:  # noqa: BLE001 - re-raised with the replay seed
        raise SweepError(f"trial U={u} n={n} #{trial} failed: {exc}", spec.seed) from exc
    return u, n, trial, verdicts


@dataclass(frozen=True)
class SweepRow:
    utilization: Fraction
    n: int
    scheme: str
    trials: int
    feasible: int

    @property
    def ratio(self) -> float:
        return self.feasible / self.trials


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list[SweepRow]
    per_trial: dict[tuple, dict[str, bool]] = field(default_factory=dict)

    def ratio(self, u, n: int, scheme) -> float:
        u, s = as_time(u), Scheme.parse(scheme).value
        for r in self.rows:
            if r.utilization == u and r.n == n and r.scheme == s:
                return r.ratio
        raise KeyError((u, n, s))

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["U", "n", "scheme", "trials", "feasible", "ratio"])
            for r in self.rows:
                w.writerow([str(r.utilization), r.n, r.scheme, r.trials, r.feasible, f"{r.ratio:.4f}"])

    def manifest(self) -> dict:
        cfg = self.config
        seeds = {
            f"{u}:{n}": [trial_seed(cfg.seed, u, n, k) for k in range(cfg.trials)]
            for u in cfg.utilizations
            for n in cfg.task_counts
        }
        return {"config": cfg.to_dict(), "trial_seeds": seeds}

    def write_manifest(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2)


def run_sweep(cfg: SweepConfig) -> SweepResult:
    """Feasible count per (U, n, scheme); deterministic under ``cfg.seed``."""
    jobs = [(cfg, u, n, k) for u in cfg.utilizations for n in cfg.task_counts for k in range(cfg.trials)]
    workers = cfg.workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial, jobs, chunksize=4))
    else:
        results = [_trial(j) for j in jobs]
    per_trial = {(u, n, k): v for u, n, k, v in results}
    rows = []
    for u in cfg.utilizations:
        for n in cfg.task_counts:
            for s in cfg.schemes:
                ok = sum(per_trial[(u, n, k)][s.value] for k in range(cfg.trials))
                rows.append(SweepRow(u, n, s.value, cfg.trials, ok))
    return SweepResult(cfg, rows, per_trial)


# ---------------------------------------------------------------- figure replays


def example_taskset() -> TaskSet:
    """Three tasks ``(1,3), (2,8), (4,22)`` with ``C_r = 0``."""
    return TaskSet.rate_monotonic([(1, 3), (2, 8), (4, 22)])


@dataclass(frozen=True)
class FigureScenario:
    name: str
    scheme: Scheme
    taskset: TaskSet
    restart: Restart
    expect_miss: bool
    expect_miss_at: Optional[Fraction]
    description: str


def figure_scenarios() -> dict[str, FigureScenario]:
    base = example_taskset()
    npe = base.with_q([1, 1, 1])
    pt = base.with_threshold_levels([1, 1, 2])
    items = [
        FigureScenario("fig2", Scheme.FP, base, Restart.before(10), True, Fraction(22),
                       "fully preemptive, restart at 10-eps: miss at t=22"),
        FigureScenario("fig3", Scheme.NP, base, Restart.before(5), True, Fraction(9),
                       "fully non-preemptive, restart at 5-eps: miss at t=9"),
        FigureScenario("fig4", Scheme.NPE, npe, Restart.before(7), False, None,
                       "non-preemptive ending Q3=1, restart at 7-eps: no miss"),
        FigureScenario("fig5", Scheme.NPE, npe, Restart.before(9), False, None,
                       "non-preemptive ending Q3=1, restart at 9-eps: no miss"),
        FigureScenario("fig6", Scheme.PT, pt, Restart.before(9), True, None,
                       "thresholds lambda2=1, lambda3=2, restart at 9-eps: a miss"),
    ]
    return {s.name: s for s in items}


@dataclass(frozen=True)
class FigureReplay:
    scenario: FigureScenario
    trace: SimTrace
    passed: bool
    outcome: str

    def render(self) -> str:
        head = f"{self.scenario.name}: {self.scenario.description}"
        verdict = "PASS" if self.passed else "FAIL"
        return f"{head}\n{self.trace.diagram()}observed: {self.outcome}\n{verdict}\n"


def replay_figure(name: str) -> FigureReplay:
    scenarios = figure_scenarios()
    if name not in scenarios:
        raise KeyError(f"unknown figure {name!r}; choose from {', '.join(scenarios)}")
    sc = scenarios[name]
    trace = simulate(sc.taskset, sc.scheme, [sc.restart], horizon=24)
    miss = trace.first_critical_miss
    if miss is None:
        outcome = "no deadline miss"
        passed = not sc.expect_miss
    else:
        outcome = f"{miss.task} job {miss.job} misses at t={miss.deadline}"
        passed = sc.expect_miss and (sc.expect_miss_at is None or miss.deadline == sc.expect_miss_at)
    return FigureReplay(sc, trace, passed, outcome)


# ---------------------------------------------------------------- soundness


def soundness_config(
    trials: int = 200,
    task_counts: Sequence[int] = (2, 3, 4, 5, 6, 7, 8),
    utilizations: Sequence = ("0.3", "0.4", "0.5", "0.6", "0.7"),
    schemes: Sequence = ("fp", "np", "npe", "pt"),
    restart_cost=0,
    seed: int = 0,
    pt_blocker_waste: bool = False,
) -> SweepConfig:
    """Integer-parameter corpus with periods dividing 120 (short hyperperiods).

    ``trials`` is the total number of sets per scheme; they are spread over
    the grid points round-robin by the campaign.
    """
    return SweepConfig(
        utilizations=tuple(as_time(u) for u in utilizations),
        task_counts=tuple(task_counts),
        trials=trials,
        restart_cost=as_time(restart_cost),
        schemes=tuple(Scheme.parse(s) for s in schemes),
        seed=seed,
        period_choices=tuple(Fraction(p) for p in DIVISORS_120 if p >= 3),
        integer_wcets=True,
        granularity=None,
        ga=GaParams(population=16, generations=20),
        pt_blocker_waste=pt_blocker_waste,
    )


@dataclass(frozen=True)
class Disagreement:
    scheme: str
    seed: int
    utilization: Fraction
    n: int
    search: SearchResult
    taskset: TaskSet


@dataclass
class SchemeSoundness:
    scheme: str
    sets: int = 0
    analysis_feasible: int = 0
    disagreements: int = 0
    infeasible_checked: int = 0
    oracle_miss_on_infeasible: int = 0

    @property
    def pessimism_ratio(self) -> Optional[float]:
        """Share of analysis-infeasible sets on which the oracle finds no miss."""
        if self.infeasible_checked == 0:
            return None
        return 1 - self.oracle_miss_on_infeasible / self.infeasible_checked


@dataclass
class SoundnessReport:
    per_scheme: dict[str, SchemeSoundness]
    disagreements: list[Disagreement]

    @property
    def total_disagreements(self) -> int:
        return len(self.disagreements)

    def to_text(self) -> str:
        lines = ["scheme,sets,analysis_feasible,disagreements,infeasible_checked,pessimism_ratio"]
        for s in self.per_scheme.values():
            pr = "" if s.pessimism_ratio is None else f"{s.pessimism_ratio:.3f}"
            lines.append(
                f"{s.scheme},{s.sets},{s.analysis_feasible},{s.disagreements},{s.infeasible_checked},{pr}"
            )
        for d in self.disagreements:
            lines.append(f"# disagreement {d.scheme} seed={d.seed} U={d.utilization} n={d.n}: {d.search.describe()}")
        return "\n".join(lines) + "\n"


def configured_taskset(ts: TaskSet, scheme: Scheme, cfg: SweepConfig) -> Optional[TaskSet]:
    """Task set with the scheme's synthesised parameters (None if synthesis fails)."""
    if scheme is Scheme.NPE:
        if cfg.npe_q == "wcet":
            return ts.with_q([t.wcet for t in ts.tasks])
        qa = optimal_q_assignment(ts)
        return qa.apply(ts) if qa.feasible else None
    if scheme is Scheme.PT:
        return ga_threshold_assignment(ts, cfg.ga, cfg.pt_blocker_waste).apply(ts)
    return ts


def _soundness_trial(args):
    cfg, k, check_infeasible = args
    points = [(u, n) for u in cfg.utilizations for n in cfg.task_counts]
    u, n = points[k % len(points)]
    spec = cfg.gen_spec(u, n, k)
    ts = generate_taskset(spec)
    out = []
    for s in cfg.schemes:
        conf = configured_taskset(ts, s, cfg)
        opts = {"blocker_waste": True} if s is Scheme.PT and cfg.pt_blocker_waste else {}
        feasible = conf is not None and analyze(conf, s, **opts).feasible
        search = None
        if feasible or check_infeasible:
            target = conf if conf is not None else _fallback(ts, s)
            search = adversarial_restart_search(target, s)
        out.append((s.value, spec.seed, u, n, feasible, search, conf))
    return out


def _fallback(ts: TaskSet, scheme: Scheme) -> TaskSet:
    # parameters for simulating a set whose synthesis failed
    if scheme is Scheme.NPE:
        return ts.with_q([t.wcet for t in ts.tasks])
    return ts


def soundness_campaign(cfg: SweepConfig, check_infeasible: bool = True) -> SoundnessReport:
    """Compare analysis verdicts against the adversarial restart search.

    ``cfg.trials`` task sets are drawn per scheme (shared across schemes).
    A disagreement is an analysis-feasible set on which the search finds a
    critical miss.
    """
    jobs = [(cfg, k, check_infeasible) for k in range(cfg.trials)]
    workers = cfg.workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_soundness_trial, jobs, chunksize=2))
    else:
        results = [_soundness_trial(j) for j in jobs]
    per = {s.value: SchemeSoundness(s.value) for s in cfg.schemes}
    dis: list[Disagreement] = []
    for trial in results:
        for scheme, seed, u, n, feasible, search, conf in trial:
            row = per[scheme]
            row.sets += 1
            if feasible:
                row.analysis_feasible += 1
                if search.miss_found:
                    row.disagreements += 1
                    dis.append(Disagreement(scheme, seed, u, n, search, conf))
            elif search is not None:
                row.infeasible_checked += 1
                row.oracle_miss_on_infeasible += int(search.miss_found)
    return SoundnessReport(per, dis)


def with_workers(cfg: SweepConfig, workers: Optional[int]) -> SweepConfig:
    return cfg if workers is None else replace(cfg, workers=workers)
