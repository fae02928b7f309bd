"""Command-line interface."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import fileformat
from .experiments import (
    SweepConfig,
    figure_scenarios,
    replay_figure,
    run_sweep,
    soundness_campaign,
    soundness_config,
    with_workers,
)
from .generator import GenSpec, write_batch
from .model import InvalidTaskSet, Scheme, as_time
from .optimize import GaParams, ga_threshold_assignment, optimal_q_assignment
from .rta import analyze
from .simulate import Restart, adversarial_restart_search, restart_before_event, simulate


def _load(path: str, cr: Optional[str] = None):
    ts = fileformat.load(path)
    if cr is not None:
        ts = ts.with_restart_cost(as_time(cr))
    return ts


def cmd_analyze(args) -> int:
    ts = _load(args.file, args.cr)
    opts = {"blocker_waste": True} if args.blocker_waste else {}
    if opts and Scheme.parse(args.scheme) is not Scheme.PT:
        raise ValueError("--blocker-waste only applies to the pt scheme")
    report = analyze(ts, args.scheme, **opts)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        sys.stdout.write(report.to_text())
    return 0


def cmd_optimize_q(args) -> int:
    ts = _load(args.file, args.cr)
    qa = optimal_q_assignment(ts, eps=args.eps)
    for task, bt in zip(ts.tasks, qa.betas):
        beta = "unresolvable" if not bt.resolvable else str(bt.beta)
        print(f"beta {task.id} = {beta}")
    if not qa.feasible:
        print(f"no feasible assignment ({qa.failed_task} misses its deadline even without blocking)")
        return 1
    for task, q in zip(ts.tasks, qa.q):
        print(f"Q {task.id} = {q}")
    if args.write:
        fileformat.dump(qa.apply(ts), args.write)
    return 0


def cmd_ga(args) -> int:
    ts = _load(args.file, args.cr)
    params = GaParams(
        population=args.population,
        generations=args.generations,
        mutation_rate=args.mutation,
        crossover_rate=args.crossover,
        seed=args.seed,
        elitism=args.elitism,
        stall_generations=args.stall,
    )
    res = ga_threshold_assignment(ts, params, blocker_waste=args.blocker_waste)
    for task, lv in zip(ts.tasks, res.levels):
        print(f"lambda {task.id} = {lv}")
    print(f"feasible: {str(res.feasible).lower()}")
    print(f"# generations {res.generations}, evaluations {res.evaluations}")
    if args.write:
        fileformat.dump(res.apply(ts), args.write)
    return 0 if res.feasible else 1


def cmd_simulate(args) -> int:
    ts = _load(args.file, args.cr)
    scheme = Scheme.parse(args.scheme)
    if args.search:
        res = adversarial_restart_search(ts, scheme, horizon=args.horizon)
        print(res.describe())
        return 1 if res.miss_found else 0
    restarts = [Restart.at(t) for t in args.restart_at or []]
    restarts += [Restart.before(t) for t in args.restart_before or []]
    if args.restart_before_event is not None:
        restarts.append(restart_before_event(ts, scheme, args.restart_before_event, args.horizon))
    trace = simulate(ts, scheme, restarts, horizon=args.horizon)
    if args.diagram:
        sys.stdout.write(trace.diagram())
    else:
        sys.stdout.write(trace.to_text())
    misses = trace.counted_misses
    print(f"# misses: {len(misses)}")
    for m in misses:
        print(f"# {m.task} job {m.job} deadline {m.deadline}")
    return 1 if trace.critical_misses else 0


def cmd_sweep(args) -> int:
    cfg = with_workers(SweepConfig.load(args.config), args.workers)
    res = run_sweep(cfg)
    res.write_csv(args.out)
    manifest = args.manifest or os.path.splitext(args.out)[0] + ".manifest.json"
    res.write_manifest(manifest)
    print(f"wrote {len(res.rows)} rows to {args.out} and manifest to {manifest}")
    return 0


def cmd_soundness(args) -> int:
    cfg = SweepConfig.load(args.config) if args.config else soundness_config()
    cfg = with_workers(cfg, args.workers)
    if args.pt_blocker_waste:
        cfg = replace(cfg, pt_blocker_waste=True)
    rep = soundness_campaign(cfg, check_infeasible=not args.skip_infeasible)
    sys.stdout.write(rep.to_text())
    return 1 if rep.total_disagreements else 0


def cmd_replay(args) -> int:
    names = list(figure_scenarios()) if args.name == "all" else [args.name]
    ok = True
    for name in names:
        rep = replay_figure(name)
        sys.stdout.write(rep.render())
        ok = ok and rep.passed
    return 0 if ok else 1


def cmd_generate(args) -> int:
    spec = GenSpec.make(
        args.n,
        args.utilization,
        period_min=args.pmin,
        period_max=args.pmax,
        seed=args.seed,
        log_uniform=not args.uniform_periods,
        critical_fraction=args.critical_fraction,
    )
    paths = write_batch(spec, args.count, args.out_dir)
    print(f"wrote {len(paths)} task sets to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rbrsched",
        description="Schedulability under restart-based recovery.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    schemes = [s.value for s in Scheme]

    a = sub.add_parser("analyze", help="response-time analysis of a task-set file")
    a.add_argument("file")
    a.add_argument("--scheme", choices=schemes, required=True)
    a.add_argument("--cr", help="override the restart cost")
    a.add_argument("--json", action="store_true", help="print JSON instead of text")
    a.add_argument("--blocker-waste", action="store_true", help="pt only: charge blockers' wasted work")
    a.set_defaults(func=cmd_analyze)

    q = sub.add_parser("optimize-q", help="non-preemptive ending lengths from blocking tolerances")
    q.add_argument("file")
    q.add_argument("--cr")
    q.add_argument("--eps", help="binary-search width (default T_i/2^30)")
    q.add_argument("--write", metavar="OUT", help="write the task set with Q values")
    q.set_defaults(func=cmd_optimize_q)

    g = sub.add_parser("ga-thresholds", help="preemption thresholds by genetic search")
    g.add_argument("file")
    g.add_argument("--cr")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--population", type=int, default=32)
    g.add_argument("--generations", type=int, default=100)
    g.add_argument("--mutation", type=float, default=0.1)
    g.add_argument("--crossover", type=float, default=0.8)
    g.add_argument("--elitism", type=int, default=2)
    g.add_argument("--stall", type=int, default=None, help="stop after N generations without progress")
    g.add_argument("--blocker-waste", action="store_true", help="use the blocker-waste analysis variant")
    g.add_argument("--write", metavar="OUT")
    g.set_defaults(func=cmd_ga)

    s = sub.add_parser("simulate", help="simulate with injected restarts")
    s.add_argument("file")
    s.add_argument("--scheme", choices=schemes, required=True)
    s.add_argument("--cr")
    s.add_argument("--restart-at", action="append", metavar="T")
    s.add_argument("--restart-before", action="append", metavar="T", help="restart at T minus eps")
    s.add_argument(
        "--restart-before-event",
        type=int,
        metavar="K",
        help="restart eps before the K-th event (1-based) of the restart-free trace",
    )
    s.add_argument("--horizon", help="default: largest phase plus two hyperperiods")
    s.add_argument("--diagram", action="store_true", help="print a schedule diagram")
    s.add_argument("--search", action="store_true", help="search all single restart instants")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="feasibility ratios over random task sets")
    w.add_argument("--config", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--manifest")
    w.add_argument("--workers", type=int)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("soundness", help="analysis verdicts against adversarial simulation")
    c.add_argument("--config")
    c.add_argument("--workers", type=int)
    c.add_argument("--skip-infeasible", action="store_true")
    c.add_argument("--pt-blocker-waste", action="store_true", help="judge pt with the blocker-waste variant")
    c.set_defaults(func=cmd_soundness)

    r = sub.add_parser("replay-figure", help="replay a reference restart scenario")
    r.add_argument("name", choices=list(figure_scenarios()) + ["all"])
    r.set_defaults(func=cmd_replay)

    n = sub.add_parser("generate", help="write random task sets and a manifest")
    n.add_argument("--n", type=int, required=True)
    n.add_argument("--utilization", "-U", required=True)
    n.add_argument("--count", type=int, default=1)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--pmin", default="10")
    n.add_argument("--pmax", default="1000")
    n.add_argument("--uniform-periods", action="store_true")
    n.add_argument("--critical-fraction", default="1")
    n.add_argument("--out-dir", required=True)
    n.set_defaults(func=cmd_generate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidTaskSet, fileformat.TaskSetFormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
