import csv
import json
import time

import pytest
import yaml

from rbrsched import fileformat
from rbrsched.cli import main
from rbrsched.experiments import (
    SweepConfig,
    figure_scenarios,
    replay_figure,
    run_sweep,
    scheme_feasible,
    soundness_campaign,
    soundness_config,
)
from rbrsched.model import Scheme, TaskSet


@pytest.mark.parametrize("name", ["fig2", "fig3", "fig4", "fig5", "fig6"])
def test_replay_figures(name):
    rep = replay_figure(name)
    assert rep.passed, rep.outcome
    assert "PASS" in rep.render()


def test_replay_outcomes():
    assert replay_figure("fig2").outcome == "tau3 job 1 misses at t=22"
    assert replay_figure("fig3").trace.first_critical_miss.deadline == 9
    assert replay_figure("fig4").outcome == "no deadline miss"
    with pytest.raises(KeyError):
        replay_figure("fig9")
    assert list(figure_scenarios()) == ["fig2", "fig3", "fig4", "fig5", "fig6"]


def small_config(**kw):
    base = dict(utilizations=("0.3", "0.6"), task_counts=(3, 5), trials=4, seed=1, ga={"generations": 5})
    base.update(kw)
    return SweepConfig.from_dict(base)


def test_sweep_rows_complete_and_deterministic():
    cfg = small_config()
    a, b = run_sweep(cfg), run_sweep(cfg)
    assert len(a.rows) == 2 * 2 * 4
    assert a.rows == b.rows
    assert all(0 <= r.feasible <= r.trials == 4 for r in a.rows)


def test_sweep_overloaded_point_is_zero():
    res = run_sweep(small_config(utilizations=("1.05",), task_counts=(4,)))
    assert all(r.feasible == 0 for r in res.rows)


def test_npe_with_full_q_matches_np():
    res = run_sweep(small_config(schemes=["np", "npe"], npe_q="wcet", trials=6))
    for u in res.config.utilizations:
        for n in res.config.task_counts:
            assert res.ratio(u, n, "npe") == res.ratio(u, n, "np")


def test_sweep_csv_and_manifest(tmp_path):
    res = run_sweep(small_config(task_counts=(3,), trials=2))
    out = tmp_path / "r.csv"
    res.write_csv(str(out))
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["U", "n", "scheme", "trials", "feasible", "ratio"]
    assert len(rows) == 8
    man = res.manifest()
    assert man["config"]["trials"] == 2
    assert len(man["trial_seeds"]["3/10:3"]) == 2
    # the manifest's config reproduces the sweep
    again = run_sweep(SweepConfig.from_dict(man["config"]))
    assert again.rows == res.rows


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"utilizations": [0.5], "task_counts": [3], "bogus": 1})
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"utilizations": [], "task_counts": [3]})


def test_scheme_feasible_examples():
    ts = TaskSet.rate_monotonic([(2, 10), (3, 20)], restart_cost=1)
    for s in Scheme:
        assert scheme_feasible(ts, s)
    fig = TaskSet.rate_monotonic([(1, 3), (2, 8), (4, 22)])
    assert not any(scheme_feasible(fig, s) for s in Scheme)


def test_small_soundness_campaign():
    cfg = soundness_config(trials=12, task_counts=(2, 3, 4))
    rep = soundness_campaign(cfg)
    assert rep.total_disagreements == 0
    assert all(s.sets == 12 for s in rep.per_scheme.values())
    assert rep.to_text().startswith("scheme,sets")


# ---------------------------------------------------------------- command line


@pytest.fixture
def fig_file(tmp_path):
    path = tmp_path / "fig.yaml"
    fileformat.dump(TaskSet.rate_monotonic([(1, 3), (2, 8), (4, 22)]), str(path))
    return str(path)


@pytest.fixture
def easy_file(tmp_path):
    path = tmp_path / "easy.yaml"
    fileformat.dump(TaskSet.rate_monotonic([(2, 10), (3, 20)], restart_cost=1), str(path))
    return str(path)


def test_cli_analyze(easy_file, capsys):
    assert main(["analyze", easy_file, "--scheme", "fp"]) == 0
    assert "tau2" in capsys.readouterr().out
    assert main(["analyze", easy_file, "--scheme", "np", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [t["R"] for t in doc["tasks"]] == ["8", "9"]


def test_cli_optimize_q(easy_file, fig_file, tmp_path, capsys):
    out = tmp_path / "q.yaml"
    assert main(["optimize-q", easy_file, "--write", str(out)]) == 0
    assert all(t.q_end is not None for t in fileformat.load(str(out)).tasks)
    assert main(["optimize-q", fig_file]) == 1
    assert "no feasible assignment" in capsys.readouterr().out


def test_cli_ga(easy_file, tmp_path, capsys):
    out = tmp_path / "pt.yaml"
    assert main(["ga-thresholds", easy_file, "--generations", "3", "--write", str(out)]) == 0
    assert "feasible: true" in capsys.readouterr().out
    assert main(["analyze", str(out), "--scheme", "pt"]) == 0


def test_cli_simulate(fig_file, capsys):
    assert main(["simulate", fig_file, "--scheme", "fp", "--restart-before", "10", "--horizon", "24"]) == 1
    out = capsys.readouterr().out
    assert "22 DeadlineMiss tau3 1" in out
    assert main(["simulate", fig_file, "--scheme", "fp", "--horizon", "24", "--diagram"]) == 0
    assert main(["simulate", fig_file, "--scheme", "fp", "--search"]) == 1
    assert "misses deadline" in capsys.readouterr().out
    assert main(["simulate", fig_file, "--scheme", "fp", "--restart-before-event", "3", "--horizon", "24"]) in (0, 1)


def test_cli_replay(capsys):
    start = time.perf_counter()
    assert main(["replay-figure", "all"]) == 0
    assert time.perf_counter() - start < 1
    assert capsys.readouterr().out.count("PASS") == 5


def test_cli_sweep_and_generate(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"utilizations": ["0.4"], "task_counts": [3], "trials": 2, "schemes": ["fp", "np"]}))
    out = tmp_path / "res.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    assert (tmp_path / "res.manifest.json").exists()
    assert len(out.read_text().splitlines()) == 3
    assert main(["generate", "--n", "3", "-U", "0.5", "--count", "2", "--out-dir", str(tmp_path / "g")]) == 0
    assert (tmp_path / "g" / "manifest.json").exists()


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("tasks: [{C: 5, T: 3}]")
    assert main(["analyze", str(bad), "--scheme", "fp"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["analyze", str(tmp_path / "missing.yaml"), "--scheme", "fp"]) == 2
    assert main(["analyze", str(bad), "--scheme", "npe"]) == 2


def test_cli_blocker_waste(tmp_path, capsys):
    path = tmp_path / "two.yaml"
    fileformat.dump(TaskSet.rate_monotonic([(1, 5), (3, 7)]).with_threshold_levels([1, 1]), str(path))
    assert main(["analyze", str(path), "--scheme", "pt"]) == 0
    assert main(["analyze", str(path), "--scheme", "pt", "--blocker-waste"]) == 0
    assert "feasible: false" in capsys.readouterr().out
    assert main(["analyze", str(path), "--scheme", "fp", "--blocker-waste"]) == 2
    assert main(["ga-thresholds", str(path), "--blocker-waste", "--generations", "2"]) == 1


def test_soundness_with_blocker_waste_config():
    cfg = soundness_config(trials=8, task_counts=(2, 3), schemes=("pt",), pt_blocker_waste=True)
    assert cfg.pt_blocker_waste and cfg.to_dict()["pt_blocker_waste"] is True
    assert soundness_campaign(cfg).total_disagreements == 0
