"""Reading and writing task-set documents.

A document is YAML (JSON is accepted too, being a YAML subset)::

    tasks:
      - {id: tau1, C: "1", T: "3"}
      - {id: tau2, C: "2", T: "8", Q: "1"}
      - {id: tau3, C: "4", T: "22", D: "22", lambda: 2, critical: false}
    restart: {Cr: "0.5", Tr: "1000"}

Numbers may be decimal strings or ``p/q`` fractions.  ``priority`` is
optional; when every task omits it, priorities are rate-monotonic.
``lambda`` is a priority *level* where 1 is the highest priority task.
"""

from __future__ import annotations

import os
from typing import Any, Mapping, Union

import yaml

from .model import Task, TaskSet, as_time


class TaskSetFormatError(ValueError):
    pass


def _num(raw: Any, what: str):
    try:
        return as_time(raw)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise TaskSetFormatError(f"bad number for {what}: {raw!r}") from exc


def taskset_from_dict(doc: Mapping[str, Any]) -> TaskSet:
    if not isinstance(doc, Mapping) or "tasks" not in doc:
        raise TaskSetFormatError("document must be a mapping with a 'tasks' list")
    raw_tasks = doc["tasks"]
    if not isinstance(raw_tasks, list) or not raw_tasks:
        raise TaskSetFormatError("'tasks' must be a non-empty list")

    given = [("priority" in r) for r in raw_tasks]
    if any(given) and not all(given):
        raise TaskSetFormatError("either every task gives 'priority' or none does")

    entries = []
    for idx, r in enumerate(raw_tasks):
        if not isinstance(r, Mapping):
            raise TaskSetFormatError(f"task #{idx + 1} is not a mapping")
        try:
            c, t = r["C"], r["T"]
        except KeyError as exc:
            raise TaskSetFormatError(f"task #{idx + 1} lacks field {exc.args[0]}") from None
        entries.append(
            dict(
                id=str(r.get("id", f"tau{idx + 1}")),
                wcet=_num(c, "C"),
                period=_num(t, "T"),
                deadline=_num(r["D"], "D") if "D" in r else None,
                phase=_num(r.get("phi", 0), "phi"),
                critical=bool(r.get("critical", True)),
                q_end=_num(r["Q"], "Q") if "Q" in r else None,
                level=r.get("lambda"),
                priority=r.get("priority"),
            )
        )

    if not all(given):
        # rate-monotonic; equal periods cannot be ordered unambiguously
        periods = [e["period"] for e in entries]
        if len(set(periods)) != len(periods):
            raise TaskSetFormatError("equal periods need explicit priorities")
        order = sorted(range(len(entries)), key=lambda i: entries[i]["period"])
        for rank, i in enumerate(order):
            entries[i]["priority"] = len(entries) - rank

    tasks = []
    for e in entries:
        level = e.pop("level")
        tasks.append((Task.make(**{k: v for k, v in e.items()}), level))
    ts = TaskSet.build(
        [t for t, _ in tasks],
        restart_cost=_num(doc.get("restart", {}).get("Cr", 0), "Cr"),
        min_interarrival=(
            _num(doc["restart"]["Tr"], "Tr")
            if isinstance(doc.get("restart"), Mapping) and doc["restart"].get("Tr") is not None
            else None
        ),
    )
    levels = {t.id: lv for t, lv in tasks}
    if any(lv is not None for lv in levels.values()):
        thresholds = []
        for task in ts.tasks:
            lv = levels[task.id]
            thresholds.append(None if lv is None else ts.level_to_priority(int(lv)))
        ts = ts.with_thresholds(thresholds)
    return ts


def taskset_to_dict(ts: TaskSet) -> dict:
    tasks = []
    for t in ts.tasks:
        row: dict[str, Any] = {
            "id": t.id,
            "C": str(t.wcet),
            "T": str(t.period),
            "D": str(t.deadline),
            "phi": str(t.phase),
            "priority": t.priority,
            "critical": t.critical,
        }
        if t.q_end is not None:
            row["Q"] = str(t.q_end)
        if t.threshold is not None:
            row["lambda"] = ts.priority_to_level(t.threshold)
        tasks.append(row)
    restart: dict[str, Any] = {"Cr": str(ts.restart.cost)}
    if ts.restart.min_interarrival is not None:
        restart["Tr"] = str(ts.restart.min_interarrival)
    return {"tasks": tasks, "restart": restart}


def loads(text: str) -> TaskSet:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise TaskSetFormatError(f"unparseable task-set document: {exc}") from exc
    return taskset_from_dict(doc)


def dumps(ts: TaskSet) -> str:
    return yaml.safe_dump(taskset_to_dict(ts), sort_keys=False)


def load(path: Union[str, os.PathLike]) -> TaskSet:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dump(ts: TaskSet, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(ts))
