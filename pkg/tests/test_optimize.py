import itertools
import random
from fractions import Fraction

import pytest

from oracles import all_threshold_levels, beta_grid, exhaustive_pt_feasible, grid_q_feasible
from rbrsched.model import TaskSet
from rbrsched.optimize import (
    GaParams,
    blocking_tolerance,
    ga_threshold_assignment,
    optimal_q_assignment,
    simplest_between,
)
from rbrsched.rta import npe_task_response, rta_npe, rta_preemptive, rta_pt

FIG = [(1, 3), (2, 8), (4, 22)]


def test_simplest_between():
    assert simplest_between(Fraction(9, 10), Fraction(11, 10)) == 1
    assert simplest_between(Fraction(1, 3), Fraction(1, 2)) == Fraction(1, 2)
    assert simplest_between(Fraction(3, 10), Fraction(34, 100)) == Fraction(1, 3)
    assert simplest_between(Fraction(2), Fraction(2)) == 2
    with pytest.raises(ValueError):
        simplest_between(Fraction(2), Fraction(1))


def test_beta_single_task():
    bt = blocking_tolerance(TaskSet.rate_monotonic([(1, 3)]), 0, [1])
    assert bt.resolvable and bt.beta == 1


def test_beta_unresolvable():
    ts = TaskSet.rate_monotonic([(2, 3)], restart_cost=1)
    bt = blocking_tolerance(ts, 0, [2])
    assert not bt.resolvable and bt.beta is None


def test_beta_requires_prefix():
    with pytest.raises(ValueError):
        blocking_tolerance(TaskSet.rate_monotonic(FIG), 1)
    with pytest.raises(ValueError):
        blocking_tolerance(TaskSet.rate_monotonic(FIG), 1, [1])


def test_beta_matches_fine_grid():
    rng = random.Random(3)
    step = Fraction(1, 8)
    for _ in range(25):
        n = rng.randint(1, 3)
        periods = sorted(rng.sample(range(4, 30), n))
        pairs = [(Fraction(rng.randint(2, 2 * p // n), 8), p) for p in periods]
        ts = TaskSet.rate_monotonic(pairs, restart_cost=Fraction(rng.randint(0, 4), 4))
        qs = [min(t.wcet, Fraction(1)) for t in ts.tasks]
        ts = ts.with_q(qs)
        i = n - 1
        bt = blocking_tolerance(ts, i, qs)
        grid = beta_grid(ts, i, step, ts.tasks[i].period)
        if grid is None:
            assert not bt.resolvable
            continue
        assert bt.resolvable
        # search result is feasible and within one grid step of the grid optimum
        r, ok = npe_task_response(ts, i, blocking=bt.beta)
        assert ok and r <= ts.tasks[i].deadline
        assert grid <= bt.beta < grid + step


def test_q_assignment_examples():
    qa = optimal_q_assignment(TaskSet.rate_monotonic([(1, 3), (2, 8)]))
    assert qa.feasible and qa.q == (1, 1)
    assert qa.betas[0].beta == 1
    single = optimal_q_assignment(TaskSet.rate_monotonic([(3, 10)]))
    assert single.q == (3,)


def test_q_assignment_reports_failure():
    ts = TaskSet.rate_monotonic([(1, 3), (3, 5)], restart_cost=1)
    qa = optimal_q_assignment(ts)
    assert not qa.feasible and qa.failed_task == "tau2"
    with pytest.raises(ValueError):
        qa.apply(ts)


def test_fig_set_has_no_q_assignment():
    # the three-task reference set fails here even before Q is optimised
    ts = TaskSet.rate_monotonic(FIG)
    qa = optimal_q_assignment(ts)
    assert qa.failed_task == "tau3"
    assert grid_q_feasible(ts) is None


def test_grid_search_matches_plain_enumeration():
    rng = random.Random(12)
    step = Fraction(1, 2)
    for _ in range(60):
        n = rng.randint(2, 3)
        periods = sorted(rng.sample(range(4, 16), n))
        ts = TaskSet.rate_monotonic(
            [(Fraction(rng.randint(1, 3 * p // (n + 1)), 2), p) for p in periods],
            restart_cost=Fraction(rng.randint(0, 2), 2),
        )
        grids = [[step * k for k in range(1, int(t.wcet / step) + 1)] for t in ts.tasks]
        plain = any(rta_npe(ts.with_q(list(qs))).feasible for qs in itertools.product(*grids))
        found = grid_q_feasible(ts, step)
        assert (found is not None) == plain
        if found is not None:
            assert rta_npe(ts.with_q(list(found))).feasible


def test_q_assignment_is_feasible_when_found():
    rng = random.Random(11)
    for _ in range(20):
        n = rng.randint(2, 5)
        periods = sorted(rng.sample(range(5, 60), n))
        ts = TaskSet.rate_monotonic([(rng.randint(1, max(1, p // (2 * n))), p) for p in periods])
        qa = optimal_q_assignment(ts)
        if qa.feasible:
            qs = qa.apply(ts)
            assert rta_npe(qs).feasible
            assert qa.q[0] == ts.tasks[0].wcet
            assert all(0 <= q <= t.wcet for q, t in zip(qa.q, ts.tasks))


def test_ga_single_task():
    ok = ga_threshold_assignment(TaskSet.rate_monotonic([(2, 10)], restart_cost=1))
    assert ok.levels == (1,) and ok.feasible
    bad = ga_threshold_assignment(TaskSet.rate_monotonic([(2, 4)], restart_cost=1))
    assert bad.levels == (1,) and not bad.feasible


def test_ga_fig_set_never_feasible():
    ts = TaskSet.rate_monotonic(FIG)
    assert not exhaustive_pt_feasible(ts)
    res = ga_threshold_assignment(ts, GaParams(population=8, generations=5))
    assert not res.feasible


def test_ga_thresholds_respect_priorities():
    rng = random.Random(5)
    for _ in range(10):
        n = rng.randint(2, 6)
        periods = sorted(rng.sample(range(5, 80), n))
        ts = TaskSet.rate_monotonic([(rng.randint(1, max(1, p // n)), p) for p in periods])
        res = ga_threshold_assignment(ts, GaParams(population=8, generations=5))
        assert all(lv <= i + 1 for i, lv in enumerate(res.levels))
        assert all(th >= t.priority for th, t in zip(res.thresholds, ts.tasks))
        assert res.report.feasible == res.feasible
        assert rta_pt(res.apply(ts)).feasible == res.feasible


def test_ga_finds_seeded_solutions():
    rng = random.Random(9)
    for _ in range(15):
        n = rng.randint(2, 6)
        periods = sorted(rng.sample(range(10, 200), n))
        ts = TaskSet.rate_monotonic([(rng.randint(1, max(1, p // (3 * n))), p) for p in periods])
        fp_pt = rta_pt(ts.with_threshold_levels(range(1, n + 1))).feasible
        np_pt = rta_pt(ts.with_threshold_levels([1] * n)).feasible
        res = ga_threshold_assignment(ts, GaParams(population=4, generations=0))
        if fp_pt or np_pt:
            assert res.feasible


def test_ga_agrees_with_exhaustive_search_on_small_sets():
    rng = random.Random(21)
    found = 0
    for _ in range(20):
        n = rng.randint(2, 4)
        periods = sorted(rng.sample(range(3, 25), n))
        ts = TaskSet.rate_monotonic(
            [(rng.randint(1, max(1, p // 2)), p) for p in periods], restart_cost=rng.choice([0, 1])
        )
        res = ga_threshold_assignment(ts, GaParams(population=16, generations=30, seed=1))
        truth = exhaustive_pt_feasible(ts)
        assert not res.feasible or truth
        found += truth == res.feasible
    assert found >= 18


def test_ga_deterministic():
    ts = TaskSet.rate_monotonic([(3, 10), (4, 15), (5, 40), (6, 90)], restart_cost=1)
    p = GaParams(population=10, generations=8, seed=42)
    a, b = ga_threshold_assignment(ts, p), ga_threshold_assignment(ts, p)
    assert (a.levels, a.feasible, a.evaluations, a.generations) == (
        b.levels,
        b.feasible,
        b.evaluations,
        b.generations,
    )


def test_ga_params_validation():
    with pytest.raises(ValueError):
        GaParams(population=1)
    with pytest.raises(ValueError):
        GaParams(mutation_rate=1.5)
    with pytest.raises(ValueError):
        GaParams(elitism=40)


def test_level_enumeration_size():
    assert sum(1 for _ in all_threshold_levels(3)) == 6
    assert rta_preemptive(TaskSet.rate_monotonic([(1, 3)])).feasible
