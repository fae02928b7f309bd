"""Random periodic task sets with a prescribed total utilisation."""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional

from .fileformat import dump
from .model import Number, Task, TaskSet, as_time, ensure_valid

UTIL_GRID = 10**6  # per-task utilisations are multiples of 1/UTIL_GRID


class GenerationError(ValueError):
    pass


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any printable parts."""
    return random.Random(":".join(str(p) for p in parts)).getrandbits(63)


@dataclass(frozen=True)
class GenSpec:
    """Parameters of one random task set.

    ``granularity`` rounds periods to a multiple of itself (``1`` gives
    integer periods).  ``period_choices`` replaces the range with a fixed
    pool of periods drawn uniformly.  ``integer_wcets`` rounds each WCET to
    an integer of at least 1, so the utilisation is only approximate.
    """

    n: int
    utilization: Fraction
    period_min: Fraction = Fraction(10)
    period_max: Fraction = Fraction(1000)
    seed: int = 0
    critical_fraction: Fraction = Fraction(1)
    log_uniform: bool = True
    granularity: Optional[Fraction] = Fraction(1)
    period_choices: Optional[tuple[Fraction, ...]] = None
    integer_wcets: bool = False
    restart_cost: Fraction = Fraction(0)
    max_attempts: int = 1000

    @classmethod
    def make(cls, n: int, utilization: Number, **kw) -> "GenSpec":
        conv = {}
        for key in ("period_min", "period_max", "critical_fraction", "restart_cost", "granularity"):
            if key in kw and kw[key] is not None:
                conv[key] = as_time(kw[key])
        if kw.get("period_choices") is not None:
            conv["period_choices"] = tuple(as_time(p) for p in kw["period_choices"])
        kw.update(conv)
        return cls(n=int(n), utilization=as_time(utilization), **kw)

    def check(self) -> None:
        if self.n < 1:
            raise GenerationError("n must be at least 1")
        if not 0 < self.utilization <= self.n:
            raise GenerationError("utilization must lie in (0, n]")
        if not 0 < self.critical_fraction <= 1:
            raise GenerationError("critical fraction must lie in (0, 1]")
        if self.period_choices is None and not 0 < self.period_min <= self.period_max:
            raise GenerationError("need 0 < P_min <= P_max")
        if self.granularity is not None and self.granularity <= 0:
            raise GenerationError("granularity must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (str(v) if isinstance(v, Fraction) else v) for k, v in d.items()} | {
            "period_choices": None
            if self.period_choices is None
            else [str(p) for p in self.period_choices]
        }


def uunifast(rng: random.Random, n: int, total: float) -> list[float]:
    """Utilisation vector uniformly distributed on the simplex summing to ``total``."""
    out = []
    remaining = total
    for i in range(1, n):
        nxt = remaining * rng.random() ** (1.0 / (n - i))
        out.append(remaining - nxt)
        remaining = nxt
    out.append(remaining)
    return out


def _utilizations(rng: random.Random, n: int, total: Fraction, attempts: int) -> list[Fraction]:
    # discard draws with a share above 1 or one that rounds to 0
    for _ in range(attempts):
        raw = uunifast(rng, n, float(total))
        us = [Fraction(round(u * UTIL_GRID), UTIL_GRID) for u in raw[:-1]]
        us.append(total - sum(us, Fraction(0)))
        if all(0 < u <= 1 for u in us):
            return us
    raise GenerationError(f"no valid utilisation vector after {attempts} draws")


def _period(rng: random.Random, spec: GenSpec) -> Fraction:
    if spec.period_choices is not None:
        return rng.choice(spec.period_choices)
    lo, hi = float(spec.period_min), float(spec.period_max)
    x = math.exp(rng.uniform(math.log(lo), math.log(hi))) if spec.log_uniform else rng.uniform(lo, hi)
    if spec.granularity is None:
        p = Fraction(x).limit_denominator(10**6)
    else:
        g = spec.granularity
        p = round(Fraction(x) / g) * g
        if p < spec.period_min:
            p += g * math.ceil((spec.period_min - p) / g)
        if p > spec.period_max:
            p -= g * math.ceil((p - spec.period_max) / g)
    return min(max(p, spec.period_min), spec.period_max)


def generate_taskset(spec: GenSpec) -> TaskSet:
    """Draw one task set: rate-monotonic priorities, ``D = T``, zero phases."""
    spec.check()
    rng = random.Random(spec.seed)
    us = _utilizations(rng, spec.n, spec.utilization, spec.max_attempts)
    periods: list[Fraction] = []
    for _ in range(spec.n):
        for _ in range(spec.max_attempts):
            p = _period(rng, spec)
            if p not in periods:
                periods.append(p)
                break
        else:
            raise GenerationError("could not draw distinct periods; widen the period range")
    rows = []
    for u, p in zip(us, periods):
        c = u * p
        if spec.integer_wcets:
            c = Fraction(min(max(1, round(c)), math.floor(p)))
        rows.append((c, p))
    rows.sort(key=lambda cp: cp[1])
    n_crit = math.ceil(spec.critical_fraction * spec.n)
    tasks = [
        Task.make(f"tau{i + 1}", c, p, priority=spec.n - i, critical=i < n_crit)
        for i, (c, p) in enumerate(rows)
    ]
    ts = TaskSet.build(tasks, restart_cost=spec.restart_cost)
    ensure_valid(ts)
    return ts


def write_batch(spec: GenSpec, count: int, out_dir: str) -> list[str]:
    """Write ``count`` task sets plus ``manifest.json`` into ``out_dir``.

    Set ``k`` uses the seed ``derive_seed(spec.seed, k)``.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    entries = []
    for k in range(count):
        seed = derive_seed(spec.seed, k)
        sub = GenSpec(**{**spec.__dict__, "seed": seed})
        ts = generate_taskset(sub)
        name = f"set_{k:04d}.yaml"
        path = os.path.join(out_dir, name)
        dump(ts, path)
        paths.append(path)
        entries.append({"file": name, "seed": seed})
    manifest = {"spec": spec.to_dict(), "count": count, "sets": entries}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return paths

