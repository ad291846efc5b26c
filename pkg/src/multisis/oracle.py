"""Exhaustive enumeration of short solutions, for checking the solver and
the counting heuristics on tiny instances.

Deliberately shares no arithmetic with the solver: membership is tested
with a plain Python dot product mod q.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .zq import SisInstance

DEFAULT_BUDGET = 10**8


class BudgetExceeded(RuntimeError):
    def __init__(self, required: int, budget: int):
        super().__init__(f"enumeration needs {required} candidates, budget is {budget}")
        self.required = required
        self.budget = budget


class SoundnessError(AssertionError):
    """The solver emitted a vector the exhaustive search does not know."""


def default_budget() -> int:
    return int(os.environ.get("MULTISIS_BUDGET", DEFAULT_BUDGET))


@dataclass
class OracleReport:
    exact_count: int
    norm_bound: float
    enumerated: int
    wall_time: float


def _canon(c: Iterable[int]) -> tuple[int, ...]:
    c = tuple(c)
    for x in c:
        if x:
            return c if x > 0 else tuple(-y for y in c)
    return c


def _pm1_weight(rows: list[list[int]], q: int, r: int) -> list[tuple[int, ...]]:
    """All weight-r canonical +-1 vectors with zero product, lex order."""
    m, n = len(rows), len(rows[0])
    found = []
    support: list[tuple[int, int]] = []

    def rec(start: int, acc: list[int]):
        depth = len(support)
        if depth == r:
            if not any(acc):
                c = [0] * m
                for i, s in support:
                    c[i] = s
                found.append(tuple(c))
            return
        for i in range(start, m - (r - depth) + 1):
            for s in ((1,) if depth == 0 else (1, -1)):
                row = rows[i]
                nxt = [(acc[j] + s * row[j]) % q for j in range(n)]
                support.append((i, s))
                rec(i + 1, nxt)
                support.pop()

    rec(0, [0] * n)
    return found


def brute_force_pm1(
    inst: SisInstance, d: int, budget: int | None = None, threads: int = 1
) -> tuple[OracleReport, list[tuple[int, ...]]]:
    """Every canonical {-1,0,1} vector of weight 1..d with ``c A = 0 mod q``."""
    budget = default_budget() if budget is None else budget
    m, q = inst.m, inst.q
    d = min(d, m)
    if d < 1:
        raise ValueError("d must be >= 1")
    required = sum(math.comb(m, r) * 2 ** (r - 1) for r in range(1, d + 1))
    if required > budget:
        raise BudgetExceeded(required, budget)
    rows = [[int(x) for x in row] for row in inst.A.tolist()]
    t0 = time.perf_counter()
    weights = range(1, d + 1)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda r: _pm1_weight(rows, q, r), weights))
    else:
        parts = [_pm1_weight(rows, q, r) for r in weights]
    sols = [c for part in parts for c in part]
    rep = OracleReport(len(sols), math.sqrt(d), required, time.perf_counter() - t0)
    return rep, sols


def ball_size(m: int, nu: float) -> int:
    """Number of nonzero integer vectors of norm <= nu, up to sign."""
    R2 = math.floor(Fraction(nu) ** 2) if nu >= 0 else -1
    if R2 < 0:
        return 0
    # ways[s] = number of vectors in Z^j with squared norm exactly s
    ways = [1] + [0] * R2
    for _ in range(m):
        nxt = [0] * (R2 + 1)
        for s, w in enumerate(ways):
            if not w:
                continue
            x = 0
            while s + x * x <= R2:
                nxt[s + x * x] += w if x == 0 else 2 * w
                x += 1
        ways = nxt
    return (sum(ways) - 1) // 2


def brute_force_ball(
    inst: SisInstance, nu: float, budget: int | None = None, collect: bool = True
) -> tuple[OracleReport, list[tuple[int, ...]]]:
    """Every integer solution with ``0 < |c| <= nu``, up to sign."""
    budget = default_budget() if budget is None else budget
    m, n, q = inst.m, inst.n, inst.q
    required = ball_size(m, nu)
    if required > budget:
        raise BudgetExceeded(required, budget)
    R2 = math.floor(Fraction(nu) ** 2) if nu > 0 else -1
    rows = [[int(x) for x in row] for row in inst.A.tolist()]
    found: list[tuple[int, ...]] = []
    count = 0
    enumerated = 0
    c = [0] * m
    t0 = time.perf_counter()

    def rec(i: int, rem: int, acc: list[int], started: bool):
        nonlocal count, enumerated
        if i == m:
            if started:
                enumerated += 1
                if not any(acc):
                    count += 1
                    if collect:
                        found.append(tuple(c))
            return
        bound = math.isqrt(rem)
        row = rows[i]
        # before the first nonzero entry only non-negative values keep the sign canonical
        lo = -bound if started else 0
        for x in range(lo, bound + 1):
            c[i] = x
            nxt = acc if x == 0 else [(acc[j] + x * row[j]) % q for j in range(n)]
            rec(i + 1, rem - x * x, nxt, started or x != 0)
        c[i] = 0

    if R2 >= 1:
        rec(0, R2, [0] * n, False)
    rep = OracleReport(count, nu, enumerated, time.perf_counter() - t0)
    return rep, found


@dataclass
class CrossReport:
    solver_count: int
    oracle_in_ball: int
    recall: float
    missing: list[tuple[int, ...]]


def cross_validate(
    solver_output: Iterable, oracle_list: Iterable, oracle_nu: float, solver_nu: float
) -> CrossReport:
    """Check the solver's vectors against an exhaustive list.

    Raises ``SoundnessError`` if any solver vector is absent from the oracle
    list, and ``ValueError`` if the oracle did not search far enough.
    """
    if Fraction(oracle_nu) < Fraction(solver_nu):
        raise ValueError("oracle norm bound is below the solver's")
    R2 = Fraction(solver_nu) ** 2
    oracle = {_canon(v) for v in oracle_list}
    in_ball = {v for v in oracle if sum(x * x for x in v) <= R2}
    solver = [_canon(getattr(v, "c", v)) for v in solver_output]
    missing = [v for v in solver if v not in oracle]
    if missing:
        raise SoundnessError(f"{len(missing)} solver vectors not in oracle set, e.g. {missing[0]}")
    recall = len(set(solver)) / len(in_ball) if in_ball else 0.0
    return CrossReport(len(solver), len(in_ball), recall, missing)
