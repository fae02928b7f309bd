import random
from collections import defaultdict
from fractions import Fraction

import pytest

from rbrsched.model import Scheme, Task, TaskSet
from rbrsched.rta import analyze
from rbrsched.simulate import (
    EPS_AFTER,
    EPS_BEFORE,
    FaultInjection,
    NvmState,
    Restart,
    RestartSchedule,
    adversarial_restart_search,
    default_horizon,
    needs_reexecution,
    post_restart_ready_set,
    restart_before_event,
    simulate,
    simulate_with_watchdog,
    watchdog_next_checkpoint,
)

FIG = [(1, 3), (2, 8), (4, 22)]


def fig_set():
    return TaskSet.rate_monotonic(FIG)


def configured(ts, scheme):
    if scheme is Scheme.NPE:
        ts = ts.with_q([min(t.wcet, 1) for t in ts.tasks])
    if scheme is Scheme.PT:
        ts = ts.with_threshold_levels([max(1, i) for i in range(1, len(ts) + 1)])
    return ts


# ---------------------------------------------------------------- NVM and watchdog helpers


def test_needs_reexecution_rule():
    assert needs_reexecution(None, Fraction(0))
    assert needs_reexecution(Fraction(9), Fraction(9))
    assert not needs_reexecution(Fraction(19, 2), Fraction(9))
    assert not needs_reexecution(None, None)


def test_post_restart_ready_set_examples():
    ts = TaskSet.rate_monotonic([(1, 3)])
    nvm = NvmState()
    assert post_restart_ready_set(ts, nvm, 10) == {"tau1"}
    nvm.record("tau1", Fraction(8))
    assert post_restart_ready_set(ts, nvm, 10) == {"tau1"}
    nvm.record("tau1", Fraction(19, 2))
    assert post_restart_ready_set(ts, nvm, 10) == frozenset()
    # restart just before the release at 12 still owes nothing
    assert post_restart_ready_set(ts, nvm, 12, strict=True) == frozenset()
    assert post_restart_ready_set(ts, nvm, 12) == {"tau1"}


def test_nvm_timestamps_monotone():
    nvm = NvmState()
    nvm.record("a", Fraction(3))
    with pytest.raises(ValueError):
        nvm.record("a", Fraction(2))


def test_watchdog_next_checkpoint_examples():
    one = TaskSet.rate_monotonic([(1, 3)])
    assert watchdog_next_checkpoint(one, [1], Fraction(1, 2)) == (1, "tau1")
    assert watchdog_next_checkpoint(one, [1], 1) == (4, "tau1")
    two = TaskSet.rate_monotonic([(1, 3), (2, 8)])
    assert watchdog_next_checkpoint(two, [1, 3], Fraction(5, 2)) == (3, "tau2")


def test_watchdog_ignores_noncritical():
    ts = TaskSet.build([Task.make("a", 1, 5, 2), Task.make("b", 1, 2, 1, critical=False)])
    assert watchdog_next_checkpoint(ts, [1, 1], 0)[1] == "a"


# ---------------------------------------------------------------- reference scenarios


def test_fig2_fp_restart_before_10():
    tr = simulate(fig_set(), "fp", [Restart.before(10)], horizon=24)
    miss = tr.first_critical_miss
    assert (miss.task, miss.deadline) == ("tau3", 22)


def test_fig3_np_restart_before_5():
    tr = simulate(fig_set(), "np", [Restart.before(5)], horizon=24)
    assert tr.first_critical_miss.deadline == 9


@pytest.mark.parametrize("t", [7, 9])
def test_fig4_fig5_npe_survive(t):
    ts = fig_set().with_q([1, 1, 1])
    tr = simulate(ts, "npe", [Restart.before(t)], horizon=24)
    assert tr.critical_misses == []


def test_fig6_pt_misses():
    ts = fig_set().with_threshold_levels([1, 1, 2])
    tr = simulate(ts, "pt", [Restart.before(9)], horizon=24)
    assert tr.critical_misses


def test_restart_free_fp_meets_all_deadlines():
    tr = simulate(fig_set(), "fp", None, horizon=264)
    assert tr.misses == []
    completes = defaultdict(list)
    for e in tr.of_kind("Complete"):
        completes[e.task].append(e.time)
    assert completes["tau3"][0] == 12


def test_restart_before_event_helper():
    r = restart_before_event(fig_set(), "fp", 1, horizon=10)
    assert r == Restart(Fraction(0), EPS_BEFORE)
    with pytest.raises(ValueError):
        restart_before_event(fig_set(), "fp", 10_000, horizon=10)


def test_restart_separation_enforced():
    ts = TaskSet.rate_monotonic([(1, 3), (1, 4)])
    with pytest.raises(ValueError):
        simulate(ts, "fp", [Restart.at(1), Restart.at(10)], horizon=40)
    simulate(ts, "fp", [Restart.at(1), Restart.at(14)], horizon=40)
    loose = RestartSchedule.of(1, 3, enforce_separation=False)
    tr = simulate(ts, "fp", loose, horizon=20)
    assert len(tr.of_kind("RestartBegin")) == 2


def test_restart_cost_delays_execution():
    ts = TaskSet.rate_monotonic([(2, 10)], restart_cost=3)
    tr = simulate(ts, "fp", [Restart.at(1)], horizon=10)
    segs = [(s.start, s.end, s.completed) for s in tr.segments]
    assert segs == [(0, 1, False), (4, 6, True)]
    assert tr.of_kind("RestartEnd")[0].time == 4


def test_trace_rendering():
    tr = simulate(fig_set(), "fp", [Restart.before(10)], horizon=24)
    text = tr.to_text()
    assert "10-eps RestartBegin" in text
    assert "22 DeadlineMiss tau3 1" in text
    diagram = tr.diagram()
    assert "tau3" in diagram and "!" in diagram


# ---------------------------------------------------------------- invariants


def _random_set(rng, n):
    periods = sorted(rng.sample(range(3, 25), n))
    return TaskSet.rate_monotonic(
        [(rng.randint(1, max(1, p // (n + 1))), p) for p in periods],
        restart_cost=rng.choice([0, Fraction(1, 2), 1]),
    )


@pytest.mark.parametrize("scheme", list(Scheme))
def test_trace_well_formed(scheme):
    rng = random.Random(list(Scheme).index(scheme))
    for _ in range(15):
        ts = configured(_random_set(rng, rng.randint(1, 4)), scheme)
        hz = int(2 * max(t.period for t in ts.tasks)) + 5
        rt = Restart(Fraction(rng.randint(0, 4 * hz)) / 4, rng.choice([-1, 0, 1]))
        tr = simulate(ts, scheme, [rt], horizon=hz)
        segs = sorted(tr.segments, key=lambda s: s.start)
        for a, b in zip(segs, segs[1:]):
            assert a.end <= b.start
        down_from = rt.time
        down_to = rt.time + ts.restart.cost
        for s in segs:
            assert s.start < s.end
            assert not (s.start < down_to and s.end > down_from and ts.restart.cost > 0)
        wcet = {t.id: t.wcet for t in ts.tasks}
        for e in tr.of_kind("Complete"):
            done = [
                s
                for s in segs
                if s.task == e.task and s.job == e.job and (s.start >= rt.time or e.time <= rt.time)
            ]
            assert sum(s.end - s.start for s in done) == wcet[e.task]
        times = [(e.time, e.eps) for e in tr.events]
        assert times == sorted(times, key=lambda x: x[0])


def test_simulation_deterministic():
    ts = fig_set().with_q([1, 1, 1])
    a = simulate(ts, "npe", [Restart.before(9)], horizon=50)
    b = simulate(ts, "npe", [Restart.before(9)], horizon=50)
    assert a.events == b.events and a.segments == b.segments


def test_default_horizon():
    assert default_horizon(fig_set()) == 528


# ---------------------------------------------------------------- watchdog


def test_watchdog_silent_failure_restarts_at_checkpoint():
    tr = simulate_with_watchdog(fig_set(), "fp", [FaultInjection(Fraction(1, 5), "tau1")], horizon=12)
    exp = tr.of_kind("WdExpire")
    begin = tr.of_kind("RestartBegin")
    assert (exp[0].time, exp[0].eps) == (1, EPS_AFTER)
    assert (begin[0].time, begin[0].eps) == (1, EPS_AFTER)
    assert tr.critical_misses == []


def test_watchdog_without_faults_matches_plain_run():
    for scheme in Scheme:
        ts = configured(TaskSet.rate_monotonic([(1, 4), (2, 10), (3, 20)]), scheme)
        a = simulate(ts, scheme, None, horizon=60)
        b = simulate_with_watchdog(ts, scheme, [], horizon=60)
        assert a.segments == b.segments
        assert b.of_kind("WdExpire") == [] and b.misses == []


def test_noncritical_fault_is_not_watched():
    tasks = [Task.make("a", 1, 4, 2), Task.make("b", 1, 6, 1, critical=False)]
    ts = TaskSet.build(tasks)
    tr = simulate_with_watchdog(ts, "fp", [("1/2", "b")], horizon=24)
    assert tr.of_kind("RestartBegin") == []


# ---------------------------------------------------------------- adversarial search


def test_search_finds_fig2_miss():
    res = adversarial_restart_search(fig_set(), "fp")
    assert res.miss_found and res.restart is not None
    tr = simulate(fig_set(), "fp", [res.restart], horizon=default_horizon(fig_set()))
    assert tr.critical_misses


def test_search_single_task_none():
    ts = TaskSet.rate_monotonic([(1, 3)], restart_cost=Fraction(1, 2))
    res = adversarial_restart_search(ts, "fp")
    assert not res.miss_found and res.candidates > 0
    assert res.describe().startswith("none")


def test_search_reports_restart_free_miss():
    ts = TaskSet.rate_monotonic([(2, 3), (2, 5)])
    res = adversarial_restart_search(ts, "fp")
    assert res.miss_found and res.restart is None


def test_search_agrees_with_feasible_analysis():
    rng = random.Random(17)
    for scheme in Scheme:
        checked = 0
        while checked < 5:
            ts = configured(_random_set(rng, rng.randint(2, 4)), scheme)
            if analyze(ts, scheme).feasible:
                checked += 1
                assert not adversarial_restart_search(ts, scheme).miss_found


def test_pt_reexecuted_blocker_blocks_twice():
    # the started low priority job keeps its threshold after the restart
    ts = TaskSet.rate_monotonic([(1, 5), (3, 7)])
    pt = ts.with_threshold_levels([1, 1])
    tr = simulate(pt, "pt", [Restart.before(17)], horizon=21)
    assert [(m.task, m.deadline) for m in tr.critical_misses] == [("tau1", 20)]
    assert analyze(pt, "pt").feasible
    assert not analyze(pt, "pt", blocker_waste=True).feasible
    # without thresholds the restarted job loses its start and no miss occurs
    assert not adversarial_restart_search(ts, "np").miss_found
    assert adversarial_restart_search(pt, "pt").miss_found


def test_blocker_waste_variant_survives_search():
    rng = random.Random(23)
    checked = 0
    while checked < 15:
        ts = _random_set(rng, rng.randint(2, 4))
        pt = ts.with_threshold_levels([rng.randint(1, i + 1) for i in range(len(ts))])
        if analyze(pt, "pt", blocker_waste=True).feasible:
            checked += 1
            assert not adversarial_restart_search(pt, "pt").miss_found
