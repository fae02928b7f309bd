"""Restart-aware worst-case response-time analysis.

Four fixed-priority disciplines are covered: fully preemptive, fully
non-preemptive, preemptive with a non-preemptive ending interval, and
preemption thresholds.  Every analysis accounts for one system restart
(cost ``C_r``) plus the execution it wastes, for critical tasks only.

Indices are 0-based positions in ``TaskSet.tasks`` (decreasing priority).
Fixed-point iterations stop as soon as the response implied by the current
iterate exceeds the task's deadline; the task is then reported with
``converged=False`` and the offending iterate as its response bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import reduce
from typing import Callable, Mapping, Optional, Sequence

from .model import (
    Scheme,
    TaskSet,
    ceil_div,
    ensure_valid,
    floor_div,
    hyperperiod,
)

# Integer zero: integer-valued inputs then stay on fast int arithmetic.
ZERO = 0


@dataclass(frozen=True)
class JobTiming:
    k: int  # 1-based job index inside the level-i active period
    start: Fraction
    finish: Fraction
    response: Fraction


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    critical: bool
    deadline: Fraction
    response: Fraction
    converged: bool
    ideal_response: Fraction
    ideal_converged: bool
    overhead: Fraction
    blocking: Fraction
    jobs: int
    timings: tuple[JobTiming, ...] = ()
    overheads: Mapping[str, Fraction] = field(default_factory=dict)
    wcwe: Optional[Fraction] = None

    @property
    def restart_ok(self) -> bool:
        return self.converged and self.response <= self.deadline

    @property
    def ideal_ok(self) -> bool:
        return self.ideal_converged and self.ideal_response <= self.deadline

    @property
    def bound(self) -> Optional[Fraction]:
        """Response bound with restart, or None when the iteration diverged past D."""
        return self.response if self.converged else None

    @property
    def ideal_bound(self) -> Optional[Fraction]:
        return self.ideal_response if self.ideal_converged else None

    @property
    def schedulable(self) -> bool:
        if self.critical:
            return self.restart_ok and self.ideal_ok
        return self.ideal_ok

    def comparable(self) -> tuple:
        """Scheme-independent content, for cross-engine equality checks."""
        return (
            self.task_id,
            self.response,
            self.converged,
            self.ideal_response,
            self.ideal_converged,
            self.overhead,
            self.blocking,
            self.jobs,
            self.timings,
            self.schedulable,
        )


@dataclass(frozen=True)
class AnalysisReport:
    scheme: Scheme
    tasks: tuple[TaskResult, ...]

    @property
    def feasible(self) -> bool:
        return all(t.schedulable for t in self.tasks)

    @property
    def restart_feasible(self) -> bool:
        """Condition (i): critical tasks meet deadlines in spite of a restart."""
        return all(t.restart_ok for t in self.tasks if t.critical)

    @property
    def ideal_feasible(self) -> bool:
        """Condition (ii): every task meets its deadline without restarts."""
        return all(t.ideal_ok for t in self.tasks)

    @property
    def first_violation(self) -> Optional[str]:
        for t in self.tasks:
            if not t.schedulable:
                return t.task_id
        return None

    @property
    def responses(self) -> list[Optional[Fraction]]:
        """Per-task bounds; None marks an iteration abandoned past its limit."""
        return [t.bound for t in self.tasks]

    @property
    def ideal_responses(self) -> list[Optional[Fraction]]:
        return [t.ideal_bound for t in self.tasks]

    def comparable(self) -> tuple:
        return tuple(t.comparable() for t in self.tasks)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "feasible": self.feasible,
            "first_violation": self.first_violation,
            "tasks": [
                {
                    "id": t.task_id,
                    "critical": t.critical,
                    "R": None if t.bound is None else str(t.bound),
                    "R_ideal": None if t.ideal_bound is None else str(t.ideal_bound),
                    "O": str(t.overhead),
                    "B": str(t.blocking),
                    "K": t.jobs,
                    "D": str(t.deadline),
                    "overheads": {k: str(v) for k, v in t.overheads.items()},
                    "schedulable": t.schedulable,
                }
                for t in self.tasks
            ],
        }

    def to_text(self) -> str:
        lines = [f"# scheme: {self.scheme.value} ({self.scheme.title})"]
        lines.append("id\tR\tR_ideal\tO\tK\tD\tverdict")
        for t in self.tasks:
            r = "unbounded" if t.bound is None else str(t.bound)
            ri = "unbounded" if t.ideal_bound is None else str(t.ideal_bound)
            verdict = "ok" if t.schedulable else "MISS"
            lines.append(f"{t.task_id}\t{r}\t{ri}\t{t.overhead}\t{t.jobs}\t{t.deadline}\t{verdict}")
        lines.append(f"# feasible: {str(self.feasible).lower()}")
        if self.first_violation is not None:
            lines.append(f"# first violation: {self.first_violation}")
        return "\n".join(lines) + "\n"


def _fixed_point(
    f: Callable[[Fraction], Fraction],
    seed: Fraction,
    exceeded: Callable[[Fraction], bool],
) -> tuple[Fraction, bool]:
    """Iterate ``x <- f(x)`` from ``seed``; stop early once ``exceeded(x)``."""
    x = seed
    while True:
        if exceeded(x):
            return x, False
        nx = f(x)
        if nx == x:
            return x, True
        if nx < x:
            raise ArithmeticError("fixed-point iteration decreased; recurrence is not monotone")
        x = nx


def _interference_ceil(hp, t: Fraction) -> Fraction:
    return sum((ceil_div(t, j.period) * j.wcet for j in hp), ZERO)


def _interference_floor1(hp, t: Fraction) -> Fraction:
    return sum(((floor_div(t, j.period) + 1) * j.wcet for j in hp), ZERO)


# ---------------------------------------------------------------- overheads


def overhead_preemptive(ts: TaskSet, i: int) -> Fraction:
    task = ts.tasks[i]
    if not task.critical:
        return ZERO
    chain = sum((t.wcet for t in ts.hp(i)), ZERO) + task.wcet
    return ts.restart.cost + chain


def overhead_nonpreemptive(ts: TaskSet, i: int) -> Fraction:
    task = ts.tasks[i]
    if not task.critical:
        return ZERO
    return ts.restart.cost + max([t.wcet for t in ts.hp(i)] + [task.wcet])


def wcwe_npe_all(ts: TaskSet) -> list[Fraction]:
    """Worst-case wasted execution for every task under non-preemptive endings."""
    out: list[Fraction] = []
    for idx, t in enumerate(ts.tasks):
        if t.q_end is None:
            raise ValueError(f"{t.id}: non-preemptive ending length Q is required")
        if idx == 0:
            out.append(t.wcet)
        else:
            out.append(t.wcet + max(ZERO, out[-1] - t.q_end))
    return out


def wcwe_npe(ts: TaskSet, upto: int) -> Fraction:
    """WCWE of task ``upto`` (0-based) under non-preemptive endings."""
    return wcwe_npe_all(ts)[upto]


def wcwe_pt_all(ts: TaskSet) -> list[Fraction]:
    """Worst-case wasted execution for every task under preemption thresholds.

    A started job can only be preempted by tasks above its threshold, so the
    longest chain ending in task ``i`` is ``C_i`` plus the longest chain of
    any such task.  The maximum over an empty set is 0.
    """
    out: list[Fraction] = []
    for idx, t in enumerate(ts.tasks):
        if t.threshold is None:
            raise ValueError(f"{t.id}: preemption threshold is required")
        above = [out[j] for j in range(idx) if ts.tasks[j].priority > t.threshold]
        out.append(t.wcet + max(above, default=ZERO))
    return out


def wcwe_pt(ts: TaskSet, i: int) -> Fraction:
    return wcwe_pt_all(ts)[i]


def blocking_nonpreemptive(ts: TaskSet, i: int) -> Fraction:
    return max((t.wcet for t in ts.lp(i)), default=ZERO)


def blocking_npe(ts: TaskSet, i: int) -> Fraction:
    return max((t.q_end for t in ts.lp(i)), default=ZERO)


def blocking_pt(ts: TaskSet, i: int) -> Fraction:
    pi = ts.tasks[i].priority
    return max((t.wcet for t in ts.lp(i) if pi <= t.threshold), default=ZERO)


# ------------------------------------------------------- level-i active period


@dataclass(frozen=True)
class ActivePeriod:
    length: Fraction
    jobs: int
    converged: bool


def level_i_active_period(
    ts: TaskSet,
    i: int,
    overhead: Fraction,
    blocking: Fraction,
    bound: Optional[Fraction] = None,
) -> ActivePeriod:
    """Length of the level-i active period and the number of jobs it holds.

    Solves ``L = B + C_i + sum_hp ceil(L/T_j) C_j + O``.  The iteration is
    abandoned when ``L`` passes ``bound`` (default: hyperperiod plus the
    largest period) or when higher-priority utilisation makes it diverge.
    """
    task = ts.tasks[i]
    hp = ts.hp(i)
    if sum((Fraction(t.wcet) / t.period for t in hp), ZERO) >= 1:
        return ActivePeriod(task.wcet + blocking + overhead, 1, False)
    if bound is None:
        bound = hyperperiod(ts) + max(t.period for t in ts.tasks)
    base = blocking + task.wcet + overhead
    length, ok = _fixed_point(
        lambda x: base + _interference_ceil(hp, x),
        base + sum((t.wcet for t in hp), ZERO),
        lambda x: x > bound,
    )
    return ActivePeriod(length, max(1, ceil_div(length, task.period)), ok)


# ---------------------------------------------------------------- analyses


@dataclass(frozen=True)
class _Partial:
    response: Fraction
    converged: bool
    jobs: int
    timings: tuple[JobTiming, ...]


def _fp_response(ts: TaskSet, i: int, overhead: Fraction, limit: Fraction) -> _Partial:
    task = ts.tasks[i]
    hp = ts.hp(i)
    r, ok = _fixed_point(
        lambda x: task.wcet + _interference_ceil(hp, x) + overhead,
        task.wcet + overhead,
        lambda x: x > limit,
    )
    return _Partial(r, ok, 1, (JobTiming(1, ZERO, r, r),))


def _multi_job(
    ts: TaskSet,
    i: int,
    job: Callable[[int, Fraction], tuple[Fraction, Fraction, bool]],
    period_overhead: Fraction,
    blocking: Fraction,
    limit: Fraction,
) -> _Partial:
    """Evaluate jobs ``k = 1..K_i`` and take the worst response.

    ``job(k, limit_abs)`` returns ``(start, finish, converged)`` for job k,
    giving up once ``finish`` would exceed ``limit_abs``.
    """
    task = ts.tasks[i]
    timings: list[JobTiming] = []

    def run(k: int) -> bool:
        arrival = (k - 1) * task.period
        s, f, ok = job(k, arrival + limit)
        timings.append(JobTiming(k, s, f, f - arrival))
        return ok and f - arrival <= limit

    if not run(1):
        return _Partial(timings[0].response, False, 1, tuple(timings))
    period = level_i_active_period(ts, i, period_overhead, blocking)
    if not period.converged:
        return _Partial(timings[0].response, False, period.jobs, tuple(timings))
    for k in range(2, period.jobs + 1):
        if not run(k):
            return _Partial(max(t.response for t in timings), False, period.jobs, tuple(timings))
    return _Partial(max(t.response for t in timings), True, period.jobs, tuple(timings))


def _np_like(
    ts: TaskSet,
    i: int,
    blocking: Fraction,
    overhead: Fraction,
    q_len: Fraction,
    limit: Fraction,
) -> _Partial:
    """Start/finish recurrence shared by non-preemptive and NP-ending models.

    The non-preemptive model is the ``Q_i = C_i`` special case.
    """
    task = ts.tasks[i]
    hp = ts.hp(i)
    c = task.wcet

    def job(k: int, limit_abs: Fraction):
        base = blocking + (k - 1) * c + (c - q_len) + overhead
        s, ok = _fixed_point(
            lambda x: base + _interference_floor1(hp, x),
            base + sum((t.wcet for t in hp), ZERO),
            lambda x: x + q_len > limit_abs,
        )
        return s, s + q_len, ok

    return _multi_job(ts, i, job, overhead, blocking, limit)


def _limit(ts: TaskSet, i: int, limits: Optional[Sequence[Fraction]]) -> Fraction:
    return ts.tasks[i].deadline if limits is None else limits[i]


def _zero_restart(ts: TaskSet) -> TaskSet:
    return ts.with_restart_cost(0)


def _assemble(
    ts: TaskSet,
    scheme: Scheme,
    i: int,
    actual: _Partial,
    ideal: _Partial,
    overhead: Fraction,
    blocking: Fraction,
    overheads: Mapping[str, Fraction],
    wcwe: Optional[Fraction] = None,
) -> TaskResult:
    task = ts.tasks[i]
    return TaskResult(
        task_id=task.id,
        critical=task.critical,
        deadline=task.deadline,
        response=actual.response,
        converged=actual.converged,
        ideal_response=ideal.response,
        ideal_converged=ideal.converged,
        overhead=overhead,
        blocking=blocking,
        jobs=actual.jobs,
        timings=actual.timings,
        overheads=dict(overheads),
        wcwe=wcwe,
    )


def rta_preemptive(ts: TaskSet, limits: Optional[Sequence[Fraction]] = None) -> AnalysisReport:
    """Fully preemptive analysis: ``R = C_i + sum_hp ceil(R/T_j) C_j + O^p``.

    ``limits`` overrides the per-task abort threshold (default: deadlines).
    """
    ensure_valid(ts, Scheme.FP)
    out = []
    for i in range(len(ts)):
        o = overhead_preemptive(ts, i)
        lim = _limit(ts, i, limits)
        actual = _fp_response(ts, i, o, lim)
        ideal = _fp_response(ts, i, ZERO, lim)
        out.append(_assemble(ts, Scheme.FP, i, actual, ideal, o, ZERO, {"p": o}))
    return AnalysisReport(Scheme.FP, tuple(out))


def rta_nonpreemptive(ts: TaskSet, limits: Optional[Sequence[Fraction]] = None) -> AnalysisReport:
    """Fully non-preemptive multi-job analysis with restart overhead ``O^np``."""
    ensure_valid(ts, Scheme.NP)
    out = []
    for i in range(len(ts)):
        task = ts.tasks[i]
        b = blocking_nonpreemptive(ts, i)
        o = overhead_nonpreemptive(ts, i)
        lim = _limit(ts, i, limits)
        actual = _np_like(ts, i, b, o, task.wcet, lim)
        ideal = _np_like(ts, i, b, ZERO, task.wcet, lim)
        out.append(_assemble(ts, Scheme.NP, i, actual, ideal, o, b, {"np": o}))
    return AnalysisReport(Scheme.NP, tuple(out))


def npe_task_response(
    ts: TaskSet,
    i: int,
    blocking: Optional[Fraction] = None,
    limit: Optional[Fraction] = None,
    with_restart: bool = True,
) -> tuple[Fraction, bool]:
    """Response bound of one task under non-preemptive endings.

    ``blocking`` replaces the lower-priority blocking term when given; only
    the Q values of tasks ``0..i`` are consulted in that case.
    """
    task = ts.tasks[i]
    if blocking is None:
        blocking = blocking_npe(ts, i)
    if limit is None:
        limit = task.deadline
    if with_restart and task.critical:
        prefix = ts.tasks[: i + 1]
        wasted = ZERO
        for idx, t in enumerate(prefix):
            wasted = t.wcet if idx == 0 else t.wcet + max(ZERO, wasted - t.q_end)
        o = ts.restart.cost + wasted
    else:
        o = ZERO
    part = _np_like(ts, i, blocking, o, task.q_end, limit)
    return part.response, part.converged


def rta_npe(ts: TaskSet, limits: Optional[Sequence[Fraction]] = None) -> AnalysisReport:
    """Analysis for preemptive tasks with non-preemptive ending intervals."""
    ensure_valid(ts, Scheme.NPE)
    wcwe = wcwe_npe_all(ts)
    out = []
    for i in range(len(ts)):
        task = ts.tasks[i]
        b = blocking_npe(ts, i)
        o = ts.restart.cost + wcwe[i] if task.critical else ZERO
        lim = _limit(ts, i, limits)
        actual = _np_like(ts, i, b, o, task.q_end, lim)
        ideal = _np_like(ts, i, b, ZERO, task.q_end, lim)
        out.append(_assemble(ts, Scheme.NPE, i, actual, ideal, o, b, {"npe": o}, wcwe[i]))
    return AnalysisReport(Scheme.NPE, tuple(out))


def _pt_jobs(
    ts: TaskSet,
    i: int,
    blocking: Fraction,
    o_start: Fraction,
    o_finish: Fraction,
    limit: Fraction,
    finish_overhead_in_finish: bool,
) -> _Partial:
    task = ts.tasks[i]
    c = task.wcet
    hp = ts.hp(i)
    hp_lam = ts.above(task.threshold)

    def start(k: int, o: Fraction, limit_abs: Fraction):
        base = blocking + (k - 1) * c + o
        return _fixed_point(
            lambda x: base + _interference_floor1(hp, x),
            base + sum((t.wcet for t in hp), ZERO),
            lambda x: x + c > limit_abs,
        )

    def finish(s: Fraction, o: Fraction, limit_abs: Fraction):
        already = {id(t): floor_div(s, t.period) + 1 for t in hp_lam}
        return _fixed_point(
            lambda x: s
            + c
            + sum(((ceil_div(x, t.period) - already[id(t)]) * t.wcet for t in hp_lam), ZERO)
            + o,
            s + c + o,
            lambda x: x > limit_abs,
        )

    def scenario(k: int, o_s: Fraction, o_f: Fraction, limit_abs: Fraction):
        s, ok = start(k, o_s, limit_abs)
        if not ok:
            return s, s + c, False
        f, ok = finish(s, o_f, limit_abs)
        return s, f, ok

    def job(k: int, limit_abs: Fraction):
        # restart before the job starts
        s1, f1, ok1 = scenario(k, o_start, ZERO, limit_abs)
        # restart after the job started
        if finish_overhead_in_finish:
            s2, f2, ok2 = scenario(k, ZERO, o_finish, limit_abs)
        else:
            s2, f2, ok2 = scenario(k, o_finish, ZERO, limit_abs)
        ok = ok1 and ok2
        return (s1, f1, ok) if f1 >= f2 else (s2, f2, ok)

    return _multi_job(ts, i, job, max(o_start, o_finish), blocking, limit)


def pt_task_result(
    ts: TaskSet,
    i: int,
    wcwe: Sequence[Fraction],
    limit: Optional[Fraction] = None,
    finish_overhead_in_finish: bool = False,
    blocker_waste: bool = False,
) -> TaskResult:
    """Analyse task ``i`` under preemption thresholds given precomputed WCWE.

    ``blocker_waste`` also charges the wasted chain of a lower priority job
    that blocks task ``i`` across the restart (see ``rta_pt``).
    """
    task = ts.tasks[i]
    b = blocking_pt(ts, i)
    if task.critical:
        o_f = ts.restart.cost + wcwe[i]
        wasted = [wcwe[j] for j in range(i)]
        if blocker_waste:
            wasted += [wcwe[j] for j in range(i + 1, len(ts)) if task.priority <= ts.tasks[j].threshold]
        o_s = ts.restart.cost + max(wasted, default=ZERO)
    else:
        o_f = o_s = ZERO
    lim = task.deadline if limit is None else limit
    actual = _pt_jobs(ts, i, b, o_s, o_f, lim, finish_overhead_in_finish)
    ideal = _pt_jobs(ts, i, b, ZERO, ZERO, lim, finish_overhead_in_finish)
    return _assemble(
        ts, Scheme.PT, i, actual, ideal, max(o_s, o_f), b, {"pt_s": o_s, "pt_f": o_f}, wcwe[i]
    )


def rta_pt(
    ts: TaskSet,
    limits: Optional[Sequence[Fraction]] = None,
    finish_overhead_in_finish: bool = False,
    blocker_waste: bool = False,
) -> AnalysisReport:
    """Analysis for fixed priorities with preemption thresholds.

    Two restart scenarios are evaluated per job: a restart before the job
    starts (overhead ``O^{pt,s}``) and one after it started (``O^{pt,f}``).
    By default the after-start overhead delays the re-executed job's start,
    so hp jobs released during the recovery are charged as start-time
    interference.  ``finish_overhead_in_finish=True`` instead adds it to the
    finish-time recurrence, where only tasks above the threshold interfere.

    A started job keeps its threshold when it is re-executed after a
    restart, so a lower priority job can block task ``i`` both before and
    after the restart.  The default overheads only charge waste of higher
    priority chains and miss this case.  ``blocker_waste=True`` adds the
    wasted chain of every potential blocker to the before-start overhead,
    which is sound for that behaviour but no longer reduces to the
    non-preemptive analysis when all thresholds are maximal.
    """
    ensure_valid(ts, Scheme.PT)
    wcwe = wcwe_pt_all(ts)
    out = tuple(
        pt_task_result(ts, i, wcwe, _limit(ts, i, limits), finish_overhead_in_finish, blocker_waste)
        for i in range(len(ts))
    )
    return AnalysisReport(Scheme.PT, out)


def integral_copy(ts: TaskSet) -> tuple[TaskSet, int]:
    """Copy of ``ts`` with every time scaled to a plain ``int``.

    Analyses run much faster on ints and verdicts are scale-invariant;
    divide reported times by the returned scale to map them back.
    """
    dens = [ts.restart.cost.denominator]
    for t in ts.tasks:
        dens += [t.wcet.denominator, t.period.denominator, t.deadline.denominator, t.phase.denominator]
        if t.q_end is not None:
            dens.append(t.q_end.denominator)
    scale = reduce(math.lcm, dens, 1)

    def sc(x):
        return None if x is None else int(x * scale)

    tasks = tuple(
        replace(
            t,
            wcet=sc(t.wcet),
            period=sc(t.period),
            deadline=sc(t.deadline),
            phase=sc(t.phase),
            q_end=sc(t.q_end),
        )
        for t in ts.tasks
    )
    restart = replace(ts.restart, cost=sc(ts.restart.cost), min_interarrival=None)
    return replace(ts, tasks=tasks, restart=restart), scale


_ANALYSES = {
    Scheme.FP: rta_preemptive,
    Scheme.NP: rta_nonpreemptive,
    Scheme.NPE: rta_npe,
    Scheme.PT: rta_pt,
}


def analyze(ts: TaskSet, scheme, **kwargs) -> AnalysisReport:
    return _ANALYSES[Scheme.parse(scheme)](ts, **kwargs)


def ideal_response_times(ts: TaskSet, scheme) -> list[Optional[Fraction]]:
    """Response bounds with no restart (``C_r = 0``, all overhead terms 0).

    None marks a task whose bound exceeds its deadline.
    """
    report = analyze(_zero_restart(ts), scheme)
    return report.ideal_responses


def rbr_feasible(ts: TaskSet, scheme) -> AnalysisReport:
    """Decide feasibility under restart-based recovery.

    The verdict (``report.feasible``) needs every critical task to meet its
    deadline with the restart overhead and every task to meet it without.
    """
    return analyze(ts, scheme)
