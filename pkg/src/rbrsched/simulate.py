"""Discrete-event simulation of fixed-priority scheduling with restarts.

The engine covers the four preemption models, single or repeated system
restarts with re-execution of unfinished jobs, the watchdog and NVM based
fault-detection protocol, and an adversarial search over restart instants
that serves as an oracle for the response-time analyses.

Internally every time value is an integer number of ticks, where one time
unit is ``scale`` ticks.  ``scale`` is a common denominator of every input
quantity, doubled so that midpoints between instants are representable.
Restart instants carry a symbolic offset ``eps`` in {-1, 0, +1}:

* ``-1`` ("t - eps"): all execution strictly before ``t`` has happened but
  nothing at ``t`` has (no completion, no release);
* ``0``: the restart follows every completion and release at ``t``;
* ``+1`` ("t + eps"): like ``0``; used for watchdog expiries.

Processing order at an instant ``t``: fault injections, ``-1`` restarts,
completions, end of an ongoing restart, releases, deadline checks,
watchdog checkpoints, ``0``/``+1`` restarts, dispatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Callable, Iterable, Optional, Sequence, Union

from .model import Number, Scheme, Task, TaskSet, as_time, ensure_valid, hyperperiod
from .rta import ideal_response_times

EPS_BEFORE = -1
EPS_AT = 0
EPS_AFTER = 1

EVENT_KINDS = (
    "Release",
    "Dispatch",
    "Preempt",
    "Complete",
    "RestartBegin",
    "RestartEnd",
    "DeadlineMiss",
    "WdCheckpoint",
    "WdExpire",
)


def _stamp(time: Fraction, eps: int) -> str:
    return f"{time}" + {EPS_BEFORE: "-eps", EPS_AT: "", EPS_AFTER: "+eps"}[eps]


@dataclass(frozen=True)
class SimEvent:
    time: Fraction
    kind: str
    task: Optional[str] = None
    job: Optional[int] = None  # 1-based release index of the task
    eps: int = EPS_AT

    def to_line(self) -> str:
        task = self.task if self.task is not None else "-"
        job = str(self.job) if self.job is not None else "-"
        return f"{_stamp(self.time, self.eps)} {self.kind} {task} {job}"


@dataclass(frozen=True)
class Segment:
    task: str
    job: int
    start: Fraction
    end: Fraction
    completed: bool


@dataclass(frozen=True)
class Miss:
    task: str
    job: int
    deadline: Fraction
    critical: bool


@dataclass(frozen=True)
class Restart:
    time: Fraction
    eps: int = EPS_AT

    @classmethod
    def before(cls, time: Number) -> "Restart":
        return cls(as_time(time), EPS_BEFORE)

    @classmethod
    def at(cls, time: Number) -> "Restart":
        return cls(as_time(time), EPS_AT)

    def __str__(self) -> str:
        return _stamp(self.time, self.eps)


@dataclass(frozen=True)
class RestartSchedule:
    """Restart instants to inject.

    With ``enforce_separation`` consecutive restarts must be more than one
    hyperperiod of the critical tasks apart (and at least ``T_r`` when the
    task set states one); otherwise overlapping restarts are coalesced.
    """

    restarts: tuple[Restart, ...] = ()
    enforce_separation: bool = True

    @classmethod
    def of(cls, *items: Union[Restart, Number], enforce_separation: bool = True) -> "RestartSchedule":
        rs = tuple(r if isinstance(r, Restart) else Restart.at(r) for r in items)
        return cls(tuple(sorted(rs, key=lambda r: (r.time, r.eps))), enforce_separation)


@dataclass(frozen=True)
class FaultInjection:
    """A silent failure of ``task`` starting at ``time``."""

    time: Fraction
    task: str


@dataclass
class NvmState:
    """Last completion instant per task, as persisted across restarts."""

    completions: dict[str, Optional[Fraction]] = field(default_factory=dict)

    def get(self, task_id: str) -> Optional[Fraction]:
        return self.completions.get(task_id)

    def record(self, task_id: str, t: Fraction) -> None:
        prev = self.completions.get(task_id)
        if prev is not None and t < prev:
            raise ValueError(f"{task_id}: completion timestamps must not decrease")
        self.completions[task_id] = t


def needs_reexecution(last_completion, latest_release) -> bool:
    """NVM rule: re-run a task whose latest release has no later completion.

    A completion exactly at the latest release belongs to the previous job,
    so it does not count.
    """
    if latest_release is None:
        return False
    return last_completion is None or last_completion <= latest_release


def post_restart_ready_set(
    ts: TaskSet, nvm: NvmState, t: Number, strict: bool = False
) -> frozenset[str]:
    """Ids of the tasks whose pending job must be re-executed after a restart at ``t``.

    ``strict`` excludes a release exactly at ``t`` (restart just before it).
    """
    t = as_time(t)
    return frozenset(
        task.id
        for task in ts.tasks
        if needs_reexecution(nvm.get(task.id), task.latest_release(t, strict))
    )


def _checkpoint_after(task: Task, rhat: Fraction, t: Fraction) -> Fraction:
    r = task.latest_release(t)
    c = (task.phase if r is None else r) + rhat
    while c <= t:
        c += task.period
    return c


def watchdog_next_checkpoint(
    ts: TaskSet, ideal: Sequence[Fraction], t: Number
) -> tuple[Fraction, str]:
    """Earliest checkpoint ``r + R^_i`` strictly after ``t`` over the critical tasks.

    A task whose current-period checkpoint is already past is advanced to
    its next period.  Ties go to the highest priority task.
    """
    t = as_time(t)
    best: Optional[tuple[Fraction, str]] = None
    for task, rhat in zip(ts.tasks, ideal):
        if not task.critical:
            continue
        c = _checkpoint_after(task, as_time(rhat), t)
        if best is None or c < best[0]:
            best = (c, task.id)
    if best is None:
        raise ValueError("no critical task to watch")
    return best


# ------------------------------------------------------------------ traces


@dataclass
class SimTrace:
    scheme: Scheme
    horizon: Fraction
    events: list[SimEvent]
    segments: list[Segment]
    misses: list[Miss]
    restarts: list[Restart]
    task_ids: tuple[str, ...]

    @property
    def critical_misses(self) -> list[Miss]:
        return [m for m in self.misses if m.critical]

    @property
    def counted_misses(self) -> list[Miss]:
        """Critical misses, plus non-critical ones when no restart occurred."""
        if self.restarts:
            return self.critical_misses
        return list(self.misses)

    @property
    def first_critical_miss(self) -> Optional[Miss]:
        cm = self.critical_misses
        return cm[0] if cm else None

    def of_kind(self, kind: str) -> list[SimEvent]:
        return [e for e in self.events if e.kind == kind]

    def to_text(self) -> str:
        lines = [f"# scheme {self.scheme.value} horizon {self.horizon}"]
        lines.extend(e.to_line() for e in self.events)
        return "\n".join(lines) + "\n"

    def diagram(self, resolution: Optional[int] = None) -> str:
        """One text row per task; ``#`` marks execution.

        The ``restart`` row marks restart instants with ``!`` and restart
        downtime with ``r``; the ``miss`` row marks deadline misses with ``X``.
        ``resolution`` is the number of columns per time unit.
        """
        if resolution is None:
            times = [s.start for s in self.segments] + [s.end for s in self.segments]
            times += [e.time for e in self.events]
            resolution = reduce(math.lcm, (x.denominator for x in times), 1)
        width = math.ceil(self.horizon * resolution)

        def col(x: Fraction) -> int:
            return min(width - 1, max(0, math.floor(x * resolution)))

        name_w = max([len(i) for i in self.task_ids] + [7])
        rows = []
        ruler = [" "] * width
        for c in range(0, width, resolution):
            label = str(c // resolution)
            if c % (5 * resolution) == 0 and c + len(label) <= width:
                ruler[c : c + len(label)] = list(label)
            elif ruler[c] == " ":
                ruler[c] = "'"
        rows.append(" " * name_w + " " + "".join(ruler))
        for tid in self.task_ids:
            row = ["."] * width
            for s in self.segments:
                if s.task == tid:
                    for c in range(math.floor(s.start * resolution), math.ceil(s.end * resolution)):
                        if 0 <= c < width:
                            row[c] = "#"
            rows.append(f"{tid:<{name_w}} " + "".join(row))
        row = [" "] * width
        begin = None
        for e in self.events:
            if e.kind == "RestartBegin":
                begin = e.time
                row[col(e.time)] = "!"
            elif e.kind == "RestartEnd" and begin is not None:
                for c in range(math.floor(begin * resolution) + 1, math.floor(e.time * resolution)):
                    if 0 <= c < width:
                        row[c] = "r"
                begin = None
        rows.append(f"{'restart':<{name_w}} " + "".join(row))
        row = [" "] * width
        for m in self.misses:
            row[col(m.deadline - Fraction(1, resolution))] = "X"
        rows.append(f"{'miss':<{name_w}} " + "".join(row))
        return "\n".join(r.rstrip() for r in rows) + "\n"


# ------------------------------------------------------------------ engine


class _Job:
    __slots__ = ("task", "k", "release", "deadline", "executed", "started", "ready", "missed", "hung")

    def __init__(self, task: int, k: int, release: int, deadline: int):
        self.task = task
        self.k = k
        self.release = release
        self.deadline = deadline
        self.executed = 0
        self.started = False
        self.ready = True
        self.missed = False
        self.hung = False

    def clone(self) -> "_Job":
        j = _Job.__new__(_Job)
        for s in _Job.__slots__:
            setattr(j, s, getattr(self, s))
        return j


class _Checkpoint:
    __slots__ = ("time", "task", "release", "k", "deferred")

    def __init__(self, time, task, release, k, deferred=False):
        self.time = time
        self.task = task
        self.release = release
        self.k = k
        self.deferred = deferred


def _ticks(x: Fraction, scale: int) -> int:
    v = x * scale
    if v.denominator != 1:
        raise ValueError(f"time {x} is not representable at scale {scale}")
    return v.numerator


def time_scale(values: Iterable[Fraction]) -> int:
    """Ticks per time unit: common denominator of ``values``, doubled."""
    return 2 * reduce(math.lcm, (as_time(v).denominator for v in values), 1)


class _Engine:
    """Mutable simulation state; cloned for the adversarial search."""

    def __init__(
        self,
        ts: TaskSet,
        scheme: Scheme,
        scale: int,
        horizon: int,
        restarts: Sequence[tuple[int, int]] = (),
        faults: Sequence[tuple[int, int]] = (),
        watch: Optional[Sequence[Optional[tuple[int, int]]]] = None,
        record: bool = True,
    ):
        self.ts = ts
        self.scheme = scheme
        self.scale = scale
        self.horizon = horizon
        tk = lambda x: _ticks(x, scale)  # noqa: E731
        n = len(ts)
        self.n = n
        self.C = [tk(t.wcet) for t in ts.tasks]
        self.T = [tk(t.period) for t in ts.tasks]
        self.D = [tk(t.deadline) for t in ts.tasks]
        self.PHI = [tk(t.phase) for t in ts.tasks]
        self.PRIO = [t.priority for t in ts.tasks]
        self.CRIT = [t.critical for t in ts.tasks]
        self.INF = max(self.PRIO) + 1
        if scheme is Scheme.NPE:
            self.NP_AFTER = [c - tk(t.q_end) for c, t in zip(self.C, ts.tasks)]
        if scheme is Scheme.PT:
            self.LAM = [t.threshold for t in ts.tasks]
        self.cr = tk(ts.restart.cost)
        self.watch = watch
        self.record = record

        self.t = 0
        self.jobs: list[_Job] = []
        self.running: Optional[_Job] = None
        self.next_k = [0] * n
        self.nvm: list[Optional[int]] = [None] * n
        self.down_until: Optional[int] = None
        self.recovering = False
        self.hung: set[int] = set()
        self.restarts = sorted(restarts)
        self.faults = sorted(faults)
        self.checkpoints: list[_Checkpoint] = []
        self.restart_log: list[tuple[int, int]] = []
        self.events: list[tuple] = []
        self.segments: list[tuple] = []
        self.seg_start: Optional[int] = None
        self.misses: list[tuple[int, int, int]] = []
        self.stop_on_critical_miss = False
        self.halted = False

    # -- cloning ----------------------------------------------------------

    def clone(self) -> "_Engine":
        e = _Engine.__new__(_Engine)
        e.__dict__.update(self.__dict__)
        mapping = {id(j): j.clone() for j in self.jobs}
        e.jobs = [mapping[id(j)] for j in self.jobs]
        e.running = None if self.running is None else mapping[id(self.running)]
        e.next_k = list(self.next_k)
        e.nvm = list(self.nvm)
        e.hung = set(self.hung)
        e.restarts = list(self.restarts)
        e.faults = list(self.faults)
        e.checkpoints = [
            _Checkpoint(c.time, c.task, c.release, c.k, c.deferred) for c in self.checkpoints
        ]
        e.restart_log = list(self.restart_log)
        e.events = list(self.events)
        e.segments = list(self.segments)
        e.misses = list(self.misses)
        return e

    def signature(self) -> tuple:
        jobs = tuple(
            sorted((j.task, j.k, j.executed, j.started, j.ready, j.hung) for j in self.jobs)
        )
        run = None if self.running is None else (self.running.task, self.running.k)
        return (jobs, run, self.down_until)

    # -- bookkeeping -------------------------------------------------------

    def _emit(self, kind: str, task: Optional[int] = None, k: Optional[int] = None, eps: int = 0):
        if self.record:
            self.events.append((self.t, kind, task, k, eps))

    def _end_segment(self, completed: bool) -> None:
        j = self.running
        if self.record and j is not None and self.seg_start is not None and self.t > self.seg_start:
            self.segments.append((j.task, j.k, self.seg_start, self.t, completed))
        self.seg_start = None

    def level(self, j: _Job) -> int:
        s = self.scheme
        if s is Scheme.FP:
            return self.PRIO[j.task]
        if s is Scheme.NP:
            return self.INF if j.started else self.PRIO[j.task]
        if s is Scheme.NPE:
            # non-preemptive once C - Q has been executed
            if j.started and j.executed >= self.NP_AFTER[j.task]:
                return self.INF
            return self.PRIO[j.task]
        return self.LAM[j.task] if j.started else self.PRIO[j.task]

    def _key(self, j: _Job):
        return (self.level(j), j.started, self.PRIO[j.task], -j.release)

    def _latest_release(self, i: int, t: int, strict: bool) -> Optional[int]:
        if t < self.PHI[i] or (strict and t == self.PHI[i]):
            return None
        k = (t - self.PHI[i]) // self.T[i]
        r = self.PHI[i] + k * self.T[i]
        if strict and r == t:
            r -= self.T[i]
        return r

    # -- transitions -------------------------------------------------------

    def _restart_begin(self, eps: int) -> None:
        if self.down_until is not None:
            return  # coalesced into the ongoing restart
        self._emit("RestartBegin", eps=eps)
        self.restart_log.append((self.t, eps))
        if self.running is not None:
            self._end_segment(False)
            self.running = None
        keep_started = self.scheme is Scheme.PT
        for j in self.jobs:
            j.executed = 0
            j.ready = False
            if not keep_started:
                j.started = False
        self.hung.clear()
        self.recovering = True
        if self.cr == 0:
            self._restart_end(strict=eps < 0, eps=eps)
        else:
            self.down_until = self.t + self.cr

    def _restart_end(self, strict: bool, eps: int = 0) -> None:
        self.down_until = None
        include = {
            i
            for i in range(self.n)
            if needs_reexecution(self.nvm[i], self._latest_release(i, self.t, strict))
        }
        for j in self.jobs:
            j.hung = False
            j.ready = j.task in include
        self._emit("RestartEnd", eps=eps)

    def _complete(self) -> None:
        j = self.running
        self._end_segment(True)
        self.running = None
        if j.task in self.hung:
            j.hung = True
            j.ready = False
            return
        self._emit("Complete", j.task, j.k)
        self.nvm[j.task] = self.t
        self.jobs.remove(j)

    def _release(self) -> None:
        t = self.t
        for i in range(self.n):
            while self.PHI[i] + self.next_k[i] * self.T[i] == t:
                k = self.next_k[i]
                self.next_k[i] += 1
                j = _Job(i, k, t, t + self.D[i])
                j.ready = self.down_until is None
                self.jobs.append(j)
                self._emit("Release", i, k)
                if self.watch is not None and self.watch[i] is not None:
                    self.checkpoints.append(_Checkpoint(t + self.watch[i][0], i, t, k))

    def _deadlines(self) -> None:
        for j in self.jobs:
            if not j.missed and j.deadline == self.t:
                j.missed = True
                self.misses.append((j.task, j.k, j.deadline))
                self._emit("DeadlineMiss", j.task, j.k)
                if self.stop_on_critical_miss and self.CRIT[j.task]:
                    self.halted = True

    def _watchdog(self) -> bool:
        due = sorted((c for c in self.checkpoints if c.time == self.t), key=lambda c: c.task)
        if not due:
            return False
        self.checkpoints = [c for c in self.checkpoints if c.time != self.t]
        expired = False
        for c in due:
            rhat, dl = self.watch[c.task]
            if self.recovering and not c.deferred and dl > rhat:
                # re-executions are only bounded by the deadline
                self.checkpoints.append(_Checkpoint(c.release + dl, c.task, c.release, c.k, True))
                continue
            self._emit("WdCheckpoint", c.task, c.k)
            last = self.nvm[c.task]
            if last is None or last <= c.release:
                self._emit("WdExpire", c.task, c.k, eps=EPS_AFTER)
                expired = True
        return expired

    def _dispatch(self) -> None:
        if self.down_until is not None:
            return
        ready = [j for j in self.jobs if j.ready]
        if not ready:
            self.recovering = False
            return
        best = max(ready, key=self._key)
        r = self.running
        if r is None:
            self._start(best)
        elif best is not r and self.level(best) > self.level(r):
            self._emit("Preempt", r.task, r.k)
            self._end_segment(False)
            self._start(best)

    def _start(self, j: _Job) -> None:
        j.started = True
        self.running = j
        self.seg_start = self.t
        self._emit("Dispatch", j.task, j.k)

    # -- main loop -------------------------------------------------------

    def instant(self) -> None:
        t = self.t
        while self.faults and self.faults[0][0] == t:
            self.hung.add(self.faults.pop(0)[1])
        while self.restarts and self.restarts[0] == (t, EPS_BEFORE):
            self.restarts.pop(0)
            self._restart_begin(EPS_BEFORE)
        r = self.running
        if r is not None and self.down_until is None and r.executed == self.C[r.task]:
            self._complete()
        if self.down_until == t:
            self._restart_end(strict=True)
        self._release()
        self._deadlines()
        if self.watch is not None and self._watchdog():
            self._restart_begin(EPS_AFTER)
        while self.restarts and self.restarts[0][0] == t:
            self._restart_begin(self.restarts.pop(0)[1])
        self._dispatch()

    def next_time(self) -> Optional[int]:
        t = self.t
        cands = [self.PHI[i] + self.next_k[i] * self.T[i] for i in range(self.n)]
        r = self.running
        if r is not None and self.down_until is None:
            cands.append(t + self.C[r.task] - r.executed)
        if self.restarts:
            cands.append(self.restarts[0][0])
        if self.faults:
            cands.append(self.faults[0][0])
        if self.down_until is not None:
            cands.append(self.down_until)
        cands.extend(j.deadline for j in self.jobs if not j.missed and j.deadline > t)
        cands.extend(c.time for c in self.checkpoints)
        nt = min(c for c in cands if c > t)
        return nt

    def advance(self, nt: int) -> None:
        r = self.running
        if r is not None and self.down_until is None:
            r.executed += nt - self.t
            if r.executed > self.C[r.task]:
                raise AssertionError("job executed beyond its WCET")
        self.t = nt

    def run(self, hook: Optional[Callable[["_Engine"], bool]] = None) -> None:
        while True:
            if hook is not None and hook(self):
                return
            self.instant()
            if self.halted:
                return
            nt = self.next_time()
            if nt > self.horizon:
                return
            self.advance(nt)

    # -- export ----------------------------------------------------------

    def trace(self) -> SimTrace:
        ids = [t.id for t in self.ts.tasks]
        fr = lambda x: Fraction(x, self.scale)  # noqa: E731
        events = [
            SimEvent(fr(t), kind, None if i is None else ids[i], None if k is None else k + 1, eps)
            for (t, kind, i, k, eps) in self.events
        ]
        segments = [Segment(ids[i], k + 1, fr(a), fr(b), done) for (i, k, a, b, done) in self.segments]
        misses = [Miss(ids[i], k + 1, fr(d), self.CRIT[i]) for (i, k, d) in self.misses]
        restarts = [Restart(fr(t), eps) for (t, eps) in self.restart_log]
        return SimTrace(self.scheme, fr(self.horizon), events, segments, misses, restarts, tuple(ids))


# ------------------------------------------------------------------ public API


def default_horizon(ts: TaskSet) -> Fraction:
    """Largest phase plus two hyperperiods."""
    return max(t.phase for t in ts.tasks) + 2 * hyperperiod(ts)


def _as_schedule(restarts) -> RestartSchedule:
    if restarts is None:
        return RestartSchedule()
    if isinstance(restarts, RestartSchedule):
        return restarts
    return RestartSchedule.of(*restarts)


def _check_separation(ts: TaskSet, sched: RestartSchedule) -> None:
    if not sched.enforce_separation or len(sched.restarts) < 2:
        return
    gap = hyperperiod(ts, critical_only=True)
    tr = ts.restart.min_interarrival
    for a, b in zip(sched.restarts, sched.restarts[1:]):
        sep = b.time - a.time
        if sep <= gap or (tr is not None and sep < tr):
            raise ValueError(
                f"restarts at {a} and {b} are too close (separation must exceed {gap})"
            )


def _watch_table(ts: TaskSet, scheme: Scheme, scale_hint=None):
    ideal = ideal_response_times(ts, scheme)
    out = []
    for task, rhat in zip(ts.tasks, ideal):
        if not task.critical:
            out.append(None)
        else:
            out.append((task.deadline if rhat is None else min(rhat, task.deadline), task.deadline))
    return out


def _build(
    ts: TaskSet,
    scheme,
    restarts=None,
    horizon: Optional[Number] = None,
    faults: Sequence[FaultInjection] = (),
    watchdog: bool = False,
    record: bool = True,
) -> _Engine:
    scheme = Scheme.parse(scheme)
    ensure_valid(ts, scheme)
    sched = _as_schedule(restarts)
    _check_separation(ts, sched)
    hz = default_horizon(ts) if horizon is None else as_time(horizon)
    watch = _watch_table(ts, scheme) if watchdog else None
    values = [ts.restart.cost, hz]
    for t in ts.tasks:
        values += [t.wcet, t.period, t.deadline, t.phase]
        if t.q_end is not None:
            values.append(t.q_end)
    values += [r.time for r in sched.restarts]
    values += [as_time(f.time) for f in faults]
    if watch is not None:
        values += [w[0] for w in watch if w is not None]
    scale = time_scale(values)
    tk = lambda x: _ticks(as_time(x), scale)  # noqa: E731
    return _Engine(
        ts,
        scheme,
        scale,
        tk(hz),
        restarts=[(tk(r.time), r.eps) for r in sched.restarts],
        faults=[(tk(f.time), ts.index_of(f.task)) for f in faults],
        watch=None if watch is None else [None if w is None else (tk(w[0]), tk(w[1])) for w in watch],
        record=record,
    )


def simulate(
    ts: TaskSet,
    scheme,
    restarts: Union[RestartSchedule, Iterable[Union[Restart, Number]], None] = None,
    horizon: Optional[Number] = None,
) -> SimTrace:
    """Simulate ``ts`` under ``scheme`` with the given restarts injected."""
    eng = _build(ts, scheme, restarts, horizon)
    eng.run()
    return eng.trace()


def simulate_with_watchdog(
    ts: TaskSet,
    scheme,
    fault_injections: Iterable[Union[FaultInjection, tuple]] = (),
    horizon: Optional[Number] = None,
) -> SimTrace:
    """Simulate with watchdog monitoring of the critical tasks.

    Each checkpoint ``r + R^_i`` verifies that task ``i`` completed after its
    release ``r``; a failed check restarts the system ``eps`` later.  While
    recovering from a restart the check is moved to ``r + D_i``.  A silent
    failure keeps the target task's jobs from completing (and from writing
    NVM) until the next restart.
    """
    faults = [
        f if isinstance(f, FaultInjection) else FaultInjection(as_time(f[0]), str(f[1]))
        for f in fault_injections
    ]
    eng = _build(ts, scheme, None, horizon, faults=faults, watchdog=True)
    eng.run()
    return eng.trace()


def restart_before_event(ts: TaskSet, scheme, index: int, horizon: Optional[Number] = None) -> Restart:
    """Restart just before the ``index``-th (1-based) event of the restart-free trace."""
    events = simulate(ts, scheme, None, horizon).events
    if not 1 <= index <= len(events):
        raise ValueError(f"event index {index} out of range 1..{len(events)}")
    return Restart.before(events[index - 1].time)


@dataclass(frozen=True)
class SearchResult:
    miss_found: bool
    restart: Optional[Restart] = None
    miss: Optional[Miss] = None
    candidates: int = 0

    def describe(self) -> str:
        if not self.miss_found:
            return f"none ({self.candidates} restart instants tried)"
        where = "without restart" if self.restart is None else f"restart at {self.restart}"
        m = self.miss
        return f"{where}: {m.task} job {m.job} misses deadline {m.deadline}"


def adversarial_restart_search(
    ts: TaskSet,
    scheme,
    horizon: Optional[Number] = None,
    window: Optional[Number] = None,
    midpoints: bool = True,
) -> SearchResult:
    """Look for a single restart instant that makes a critical job miss.

    Candidates are every instant of the restart-free run inside ``window``
    (default: largest phase plus one hyperperiod), each taken just before
    and exactly at the instant, plus midpoints between consecutive instants.
    Each candidate resumes from a snapshot of the restart-free run and stops
    once its state rejoins that run.
    """
    scheme = Scheme.parse(scheme)
    hz = default_horizon(ts) if horizon is None else as_time(horizon)
    win = (
        max(t.phase for t in ts.tasks) + hyperperiod(ts) if window is None else as_time(window)
    )
    base = _build(ts, scheme, None, hz, record=False)
    base.stop_on_critical_miss = True
    snaps: dict[int, _Engine] = {}
    sigs: dict[int, tuple] = {}

    def keep(e: _Engine) -> bool:
        snaps[e.t] = e.clone()
        sigs[e.t] = e.signature()
        return False

    base.run(keep)
    ids = [t.id for t in ts.tasks]
    scale = base.scale
    fr = lambda x: Fraction(x, scale)  # noqa: E731
    for i, k, d in base.misses:
        if base.CRIT[i]:
            return SearchResult(True, None, Miss(ids[i], k + 1, fr(d), True), 0)

    limit = _ticks(win, scale) if (win * scale).denominator == 1 else math.floor(win * scale)
    instants = sorted(t for t in snaps if t <= limit)
    cands: list[tuple[int, int, int]] = []  # (restart tick, eps, snapshot tick)
    for a, b in zip(instants, instants[1:] + [None]):
        cands.append((a, EPS_BEFORE, a))
        cands.append((a, EPS_AT, a))
        if midpoints and b is not None and b - a >= 2:
            cands.append(((a + b) // 2, EPS_AT, a))

    def rejoined(e: _Engine) -> bool:
        if not e.restart_log or e.down_until is not None or e.t not in sigs:
            return False
        return e.signature() == sigs[e.t]

    for tried, (rt, eps, snap_t) in enumerate(cands, start=1):
        eng = snaps[snap_t].clone()
        eng.restarts = [(rt, eps)]
        eng.stop_on_critical_miss = True
        eng.run(rejoined)
        for i, k, d in eng.misses:
            if eng.CRIT[i] and (i, k, d) not in base.misses:
                return SearchResult(True, Restart(fr(rt), eps), Miss(ids[i], k + 1, fr(d), True), tried)
    return SearchResult(False, None, None, len(cands))
