"""Empirical scaling sweep over a parameter grid."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Iterable

from .estimator import DEFAULT_MAX_ROWS, Infeasible, plan_parameters
from .merge import solve
from .zq import gen_instance

FIELDS = [
    "n", "m", "q", "nu", "count", "seed", "status", "t", "k", "s",
    "solutions", "rows_processed", "level_rows", "max_level_rows",
    "predicted_log_cost", "log_work", "wall_time",
]


@dataclass(frozen=True)
class GridPoint:
    n: int
    m: int
    q: int
    nu: float


def grid(ns: Iterable[int], ms: Iterable[int], qs: Iterable[int], nus: Iterable[float]) -> list[GridPoint]:
    return [GridPoint(n, m, q, nu) for n, m, q, nu in itertools.product(ns, ms, qs, nus) if m > n]


def bench_point(
    pt: GridPoint, count: int, seed: int, max_rows: int = DEFAULT_MAX_ROWS, threads: int = 1, timing: bool = True
) -> dict:
    row = dict(n=pt.n, m=pt.m, q=pt.q, nu=pt.nu, count=count, seed=seed)
    try:
        plan = plan_parameters(pt.n, pt.m, pt.q, pt.nu, count, max_rows=max_rows)
    except Infeasible:
        row.update(status="infeasible")
        return {f: row.get(f, "") for f in FIELDS}
    inst = gen_instance(pt.n, pt.m, pt.q, seed)
    t0 = time.perf_counter()
    res = solve(inst, pt.nu, count, seed=seed, threads=threads, plan=plan)
    wall = time.perf_counter() - t0
    per_level = [s.rows_in for s in res.stats]
    work = res.rows_processed
    row.update(
        status="ok" if res.complete else f"starved@{res.starved_at}",
        t=plan.t,
        k=plan.k,
        s=plan.s,
        solutions=len(res.solutions),
        rows_processed=work,
        level_rows=";".join(map(str, per_level)),
        max_level_rows=max(per_level, default=0),
        predicted_log_cost=f"{plan.predicted_cost:.6f}",
        log_work=f"{math.log(work):.6f}" if work else "",
        wall_time=f"{wall:.4f}" if timing else "",
    )
    return row


def run_bench(points: Iterable[GridPoint], count: int, seed: int, **kw) -> list[dict]:
    return [bench_point(pt, count, seed, **kw) for pt in points]
