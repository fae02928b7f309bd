"""Task model, validation and exact time arithmetic.

All time quantities are :class:`fractions.Fraction`.  Priorities are plain
integers where a larger value means a higher priority; task sets keep their
tasks sorted by decreasing priority so that ``tasks[0]`` is the highest
priority task.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import reduce
from typing import Iterable, Optional, Sequence, Union

Number = Union[int, str, float, Fraction]


def as_time(value: Number) -> Fraction:
    """Convert ``value`` to an exact rational time.

    Strings are parsed as decimals or ``p/q`` fractions; floats go through
    their shortest decimal repr so that ``0.1`` becomes ``1/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not time values")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite time value {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a time value")


def ceil_div(a: Fraction, b: Fraction) -> int:
    return -((-a) // b)


def floor_div(a: Fraction, b: Fraction) -> int:
    return a // b


def lcm_rational(values: Iterable[Fraction]) -> Fraction:
    """Least common multiple of positive rationals.

    The LCM of ``p1/q1, ..., pk/qk`` (reduced) is ``lcm(p) / gcd(q)``.
    """
    values = list(values)
    if not values:
        raise ValueError("lcm of an empty collection")
    if any(v <= 0 for v in values):
        raise ValueError("lcm requires positive values")
    num = reduce(math.lcm, (v.numerator for v in values))
    den = reduce(math.gcd, (v.denominator for v in values))
    return Fraction(num, den)


class Scheme(enum.Enum):
    """Preemption discipline analysed or simulated."""

    FP = "fp"  # fully preemptive
    NP = "np"  # fully non-preemptive
    NPE = "npe"  # preemptive with non-preemptive ending interval Q
    PT = "pt"  # preemption thresholds

    @classmethod
    def parse(cls, value: Union[str, "Scheme"]) -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown scheme {value!r} (expected one of {names})") from None

    @property
    def title(self) -> str:
        return _SCHEME_TITLES[self]


_SCHEME_TITLES = {
    Scheme.FP: "fully preemptive",
    Scheme.NP: "fully non-preemptive",
    Scheme.NPE: "non-preemptive ending",
    Scheme.PT: "preemption thresholds",
}


@dataclass(frozen=True)
class Task:
    """One periodic task.

    ``q_end`` is the length of the non-preemptive ending interval and
    ``threshold`` the preemption threshold, expressed on the same integer
    scale as ``priority``.
    """

    id: str
    wcet: Fraction
    period: Fraction
    deadline: Fraction
    priority: int
    phase: Fraction = Fraction(0)
    critical: bool = True
    q_end: Optional[Fraction] = None
    threshold: Optional[int] = None

    @classmethod
    def make(
        cls,
        id: str,
        wcet: Number,
        period: Number,
        priority: int,
        deadline: Optional[Number] = None,
        phase: Number = 0,
        critical: bool = True,
        q_end: Optional[Number] = None,
        threshold: Optional[int] = None,
    ) -> "Task":
        period_t = as_time(period)
        return cls(
            id=str(id),
            wcet=as_time(wcet),
            period=period_t,
            deadline=period_t if deadline is None else as_time(deadline),
            priority=int(priority),
            phase=as_time(phase),
            critical=bool(critical),
            q_end=None if q_end is None else as_time(q_end),
            threshold=None if threshold is None else int(threshold),
        )

    @property
    def utilization(self) -> Fraction:
        return self.wcet / self.period

    def latest_release(self, t: Fraction, strict: bool = False) -> Optional[Fraction]:
        """Most recent release at or before ``t`` (strictly before if ``strict``)."""
        if t < self.phase or (strict and t == self.phase):
            return None
        k = floor_div(t - self.phase, self.period)
        release = self.phase + k * self.period
        if strict and release == t:
            release -= self.period
        return release


@dataclass(frozen=True)
class RestartModel:
    """Restart cost ``C_r`` and minimum fault inter-arrival ``T_r`` (None = unbounded)."""

    cost: Fraction = Fraction(0)
    min_interarrival: Optional[Fraction] = None


@dataclass(frozen=True)
class TaskSet:
    tasks: tuple[Task, ...]
    restart: RestartModel = field(default_factory=RestartModel)

    @classmethod
    def build(
        cls,
        tasks: Sequence[Task],
        restart_cost: Number = 0,
        min_interarrival: Optional[Number] = None,
    ) -> "TaskSet":
        """Build a task set, sorting ``tasks`` by decreasing priority."""
        ordered = sorted(tasks, key=lambda t: -t.priority)
        restart = RestartModel(
            as_time(restart_cost),
            None if min_interarrival is None else as_time(min_interarrival),
        )
        return cls(tuple(ordered), restart)

    @classmethod
    def rate_monotonic(
        cls,
        params: Sequence[tuple],
        restart_cost: Number = 0,
        min_interarrival: Optional[Number] = None,
        critical: Optional[int] = None,
    ) -> "TaskSet":
        """Quick constructor from ``(C, T)`` or ``(C, T, D)`` tuples.

        Tuples must already be listed from highest to lowest priority;
        ``critical`` is the number of leading critical tasks (default: all).
        """
        n = len(params)
        n_c = n if critical is None else critical
        tasks = []
        for idx, p in enumerate(params):
            c, t, *rest = p
            d = rest[0] if rest else None
            tasks.append(
                Task.make(f"tau{idx + 1}", c, t, priority=n - idx, deadline=d, critical=idx < n_c)
            )
        return cls.build(tasks, restart_cost, min_interarrival)

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, idx: int) -> Task:
        return self.tasks[idx]

    @property
    def n_critical(self) -> int:
        return sum(1 for t in self.tasks if t.critical)

    @property
    def max_priority(self) -> int:
        return max(t.priority for t in self.tasks)

    def index_of(self, task_id: str) -> int:
        for idx, t in enumerate(self.tasks):
            if t.id == task_id:
                return idx
        raise KeyError(task_id)

    def hp(self, i: int) -> list[Task]:
        """Tasks with priority strictly above task ``i``'s."""
        pi = self.tasks[i].priority
        return [t for t in self.tasks if t.priority > pi]

    def lp(self, i: int) -> list[Task]:
        pi = self.tasks[i].priority
        return [t for t in self.tasks if t.priority < pi]

    def above(self, level: int) -> list[Task]:
        """Tasks whose nominal priority is strictly greater than ``level``."""
        return [t for t in self.tasks if t.priority > level]

    def level_to_priority(self, level: int) -> int:
        """Map a 1-based priority level (1 = highest) to a priority value."""
        if not 1 <= level <= len(self.tasks):
            raise ValueError(f"priority level {level} out of range 1..{len(self.tasks)}")
        return self.tasks[level - 1].priority

    def priority_to_level(self, priority: int) -> int:
        for idx, t in enumerate(self.tasks):
            if t.priority == priority:
                return idx + 1
        raise ValueError(f"no task has priority {priority}")

    def with_restart_cost(self, cost: Number) -> "TaskSet":
        return replace(self, restart=replace(self.restart, cost=as_time(cost)))

    def with_q(self, q_values: Sequence[Optional[Number]]) -> "TaskSet":
        if len(q_values) != len(self.tasks):
            raise ValueError("one Q value per task required")
        tasks = tuple(
            replace(t, q_end=None if q is None else as_time(q)) for t, q in zip(self.tasks, q_values)
        )
        return replace(self, tasks=tasks)

    def with_thresholds(self, thresholds: Sequence[Optional[int]]) -> "TaskSet":
        if len(thresholds) != len(self.tasks):
            raise ValueError("one threshold per task required")
        tasks = tuple(replace(t, threshold=lam) for t, lam in zip(self.tasks, thresholds))
        return replace(self, tasks=tasks)

    def with_threshold_levels(self, levels: Sequence[int]) -> "TaskSet":
        return self.with_thresholds([self.level_to_priority(lv) for lv in levels])

    def scaled_wcets(self, factor: Number) -> "TaskSet":
        f = as_time(factor)
        tasks = tuple(replace(t, wcet=t.wcet * f) for t in self.tasks)
        return replace(self, tasks=tasks)


class InvalidTaskSet(ValueError):
    """Raised when an analysis or simulation receives an invalid task set."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class Violation:
    task_id: Optional[str]
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        where = f"{self.task_id}: " if self.task_id is not None else ""
        extra = f" ({self.detail})" if self.detail else ""
        return f"{where}{self.rule}{extra}"


def validate_taskset(ts: TaskSet, scheme: Optional[Scheme] = None) -> list[Violation]:
    """Return every violated model invariant; an empty list means valid."""
    out: list[Violation] = []
    for t in ts.tasks:
        if t.wcet <= 0:
            out.append(Violation(t.id, "C > 0", f"C={t.wcet}"))
        if not (t.wcet <= t.deadline <= t.period):
            out.append(Violation(t.id, "C <= D <= T", f"C={t.wcet}, D={t.deadline}, T={t.period}"))
        if t.phase < 0:
            out.append(Violation(t.id, "phase >= 0", f"phi={t.phase}"))
        if t.q_end is not None and not (0 <= t.q_end <= t.wcet):
            out.append(Violation(t.id, "0 <= Q <= C", f"Q={t.q_end}, C={t.wcet}"))
        if t.threshold is not None and t.threshold < t.priority:
            out.append(Violation(t.id, "threshold >= priority", f"lambda={t.threshold}, pi={t.priority}"))

    ids = [t.id for t in ts.tasks]
    if len(set(ids)) != len(ids):
        out.append(Violation(None, "task ids distinct"))
    prios = [t.priority for t in ts.tasks]
    if len(set(prios)) != len(prios):
        out.append(Violation(None, "priorities distinct"))
    if any(a <= b for a, b in zip(prios, prios[1:])):
        out.append(Violation(None, "tasks ordered by decreasing priority"))
    seen_noncritical = False
    for t in ts.tasks:
        if not t.critical:
            seen_noncritical = True
        elif seen_noncritical:
            out.append(Violation(t.id, "critical tasks precede non-critical tasks"))

    if ts.restart.cost < 0:
        out.append(Violation(None, "C_r >= 0", f"C_r={ts.restart.cost}"))
    tr = ts.restart.min_interarrival
    crit_periods = [t.period for t in ts.tasks if t.critical and t.period > 0]
    if tr is not None and crit_periods:
        h = lcm_rational(crit_periods)
        if not tr > h:
            out.append(Violation(None, "T_r > LCM of critical periods", f"T_r={tr}, LCM={h}"))

    if scheme is Scheme.NPE:
        for t in ts.tasks:
            if t.q_end is None:
                out.append(Violation(t.id, "Q required", "non-preemptive ending scheme"))
    elif scheme is Scheme.PT:
        for t in ts.tasks:
            if t.threshold is None:
                out.append(Violation(t.id, "threshold required", "preemption threshold scheme"))
    return out


def ensure_valid(ts: TaskSet, scheme: Optional[Scheme] = None) -> None:
    violations = validate_taskset(ts, scheme)
    if violations:
        raise InvalidTaskSet(violations)


def utilization(ts: TaskSet) -> Fraction:
    return sum((t.utilization for t in ts.tasks), Fraction(0))


def hyperperiod(ts: TaskSet, critical_only: bool = False) -> Fraction:
    periods = [t.period for t in ts.tasks if t.critical or not critical_only]
    if not periods:
        return Fraction(0)
    return lcm_rational(periods)
