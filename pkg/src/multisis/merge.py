"""Level-by-level collision merging of tracked rows.

Each level takes the leading block of residual columns, sorts the rows by
a sign-canonical key of that block and combines rows whose blocks agree up
to sign. Combination vectors are carried along so that after the last
block every surviving row is a solution of ``c A = 0 mod q``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from .estimator import Plan, plan_parameters
from .seeds import Order, RowSet, combo_dtype, materialize_level0, seed_matrix
from .zq import SisInstance, SolutionSet, verify_solution

log = logging.getLogger(__name__)


class RecipeError(AssertionError):
    """A recipe failed to zero its block; the collision finder is broken."""


@dataclass(frozen=True)
class CanonicalKey:
    key: tuple[int, ...]
    flipped: bool


def _flip_mask(B: np.ndarray, q: int) -> np.ndarray:
    if q == 2 or B.shape[1] == 0:
        return np.zeros(len(B), dtype=bool)
    nz = B != 0
    first = nz.argmax(axis=1)
    lead = B[np.arange(len(B)), first]
    return nz.any(axis=1) & (lead > (q - 1) // 2)


def canonical_keys(B: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised sign canonicalisation of the rows of ``B``."""
    flipped = _flip_mask(B, q)
    K = np.where(flipped[:, None], (q - B) % q, B)
    return K, flipped


def canonicalize_sign(v, q: int) -> CanonicalKey:
    """Pick between ``v`` and ``-v`` so the first nonzero entry is at most (q-1)/2."""
    B = np.asarray([[int(x) % q for x in v]], dtype=np.int64).reshape(1, -1)
    K, flipped = canonical_keys(B, q)
    return CanonicalKey(tuple(int(x) for x in K[0]), bool(flipped[0]))


@dataclass(frozen=True)
class MergeRecipe:
    """One row of the next level: a zero row, or ``src_a + sign * src_b``."""

    src_a: int
    src_b: int | None = None
    sign: int = 0

    @property
    def kind(self) -> str:
        return "zero_row" if self.src_b is None else "pair"


@dataclass
class RecipeBatch:
    a: np.ndarray
    b: np.ndarray  # -1 for zero rows
    sign: np.ndarray  # 0 for zero rows

    def __len__(self):
        return len(self.a)

    def recipes(self) -> list[MergeRecipe]:
        return [
            MergeRecipe(int(a)) if b < 0 else MergeRecipe(int(a), int(b), int(s))
            for a, b, s in zip(self.a, self.b, self.sign)
        ]


@dataclass
class GroupInfo:
    groups: int = 0  # nonzero keys shared by >= 2 rows
    zeros: int = 0


def collision_batches(block: np.ndarray, q: int, info: GroupInfo | None = None) -> Iterator[RecipeBatch]:
    """Yield recipes for ``block`` in a fixed order: zero rows, then pairs by gap.

    Rows are sorted by canonical key with ties broken by row index. Within a
    group of equal keys, pairs of sorted neighbours come first (gap 1), then
    gap 2, and so on, so a truncated stream spreads over all groups. The
    union of all batches is every zero row plus every pair of nonzero rows
    whose blocks agree up to sign.
    """
    N = len(block)
    K, flipped = canonical_keys(block, q)
    order = np.lexsort(K.T[::-1]) if K.shape[1] else np.arange(N)
    Ks = K[order]
    zero = ~Ks.any(axis=1)
    if N:
        new_group = np.ones(N, dtype=bool)
        new_group[1:] = (Ks[1:] != Ks[:-1]).any(axis=1)
        gid = np.cumsum(new_group) - 1
    else:
        gid = np.zeros(0, dtype=np.int64)
    if info is not None:
        info.zeros = int(zero.sum())
        sizes = np.bincount(gid[~zero]) if (~zero).any() else np.zeros(0, dtype=np.int64)
        info.groups = int((sizes >= 2).sum())
    zrows = np.sort(order[zero])
    yield RecipeBatch(zrows, np.full(len(zrows), -1), np.zeros(len(zrows), dtype=np.int64))
    gap = 1
    while gap < N:
        same = (gid[gap:] == gid[:-gap]) & ~zero[gap:]
        j = np.nonzero(same)[0]
        if len(j) == 0:
            break
        a, b = order[j], order[j + gap]
        sign = np.where(flipped[a] == flipped[b], -1, 1)
        yield RecipeBatch(a, b, sign)
        gap += 1


def find_collisions(rows: RowSet, width: int, q: int) -> list[MergeRecipe]:
    """All recipes (full matching) zeroing the leading ``width`` residual columns."""
    if width < 1:
        raise ValueError("block width must be >= 1")
    return [r for batch in collision_batches(rows.residual[:, :width], q) for r in batch.recipes()]


def _combine(rows: RowSet, batch: RecipeBatch, width: int, q: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    a, b, sg = batch.a, batch.b, batch.sign
    pair = b >= 0
    bb = np.where(pair, b, 0)
    R = rows.residual
    Ra = R[a]
    Rb = R[bb] * sg[:, None]
    blk = (Ra[:, :width] + Rb[:, :width]) % q
    if blk.any():
        bad = int(np.nonzero(blk.any(axis=1))[0][0])
        raise RecipeError(f"recipe {bad} ({int(a[bad])}, {int(b[bad])}, {int(sg[bad])}) does not zero its block")
    res = (Ra[:, width:] + Rb[:, width:]) % q
    C = rows.combos
    combos = C[a].astype(dtype) + C[bb].astype(dtype) * sg[:, None].astype(dtype)
    return res, combos


def _canonical_rows(C: np.ndarray) -> np.ndarray:
    nz = C != 0
    lead = C[np.arange(len(C)), nz.argmax(axis=1)]
    return np.where((lead < 0)[:, None], -C, C)


def apply_recipes(
    rows: RowSet,
    batch: RecipeBatch | list[MergeRecipe],
    width: int,
    q: int,
    norm_cap_sq: int | None,
    dedup: set,
    limit: int | None = None,
    threads: int = 1,
) -> RowSet:
    """Build the next-level rows from ``batch``, dropping the zeroed block.

    Results with an all-zero combination, a combination already in
    ``dedup`` (up to sign), or a squared norm above ``norm_cap_sq`` are
    discarded. Survivors' canonical combinations are added to ``dedup``.
    """
    if isinstance(batch, list):
        batch = RecipeBatch(
            np.array([r.src_a for r in batch], dtype=np.int64),
            np.array([-1 if r.src_b is None else r.src_b for r in batch], dtype=np.int64),
            np.array([r.sign for r in batch], dtype=np.int64),
        )
    dtype = rows.combos.dtype
    if threads > 1 and len(batch) > 4096:
        parts = np.array_split(np.arange(len(batch)), threads)
        subs = [RecipeBatch(batch.a[p], batch.b[p], batch.sign[p]) for p in parts]
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(lambda s: _combine(rows, s, width, q, dtype), subs))
        res = np.vstack([o[0] for o in out])
        combos = np.vstack([o[1] for o in out])
    else:
        res, combos = _combine(rows, batch, width, q, dtype)
    c64 = combos.astype(np.int64)
    norm_sq = (c64 * c64).sum(axis=1)
    ok = norm_sq > 0
    if norm_cap_sq is not None:
        ok &= norm_sq <= norm_cap_sq
    cand = np.nonzero(ok)[0]
    canon = np.ascontiguousarray(_canonical_rows(combos[cand]))
    keep = []
    for i, row in zip(cand, canon):
        key = row.tobytes()
        if key in dedup:
            continue
        dedup.add(key)
        keep.append(i)
        if limit is not None and len(keep) >= limit:
            break
    keep = np.array(keep, dtype=np.int64)
    return RowSet(res[keep], combos[keep], norm_sq[keep], rows.col0 + width)


@dataclass
class LevelStats:
    level: int
    rows_in: int
    groups: int
    pairs: int
    zeros: int
    rows_out: int
    max_norm_sq: int

    CSV_HEADER = "level,rows_in,groups,pairs,zeros,rows_out,max_norm_sq"

    def csv_row(self) -> str:
        return f"{self.level},{self.rows_in},{self.groups},{self.pairs},{self.zeros},{self.rows_out},{self.max_norm_sq}"


@dataclass
class SolveResult:
    plan: Plan
    solutions: SolutionSet
    stats: list[LevelStats] = field(default_factory=list)
    starved_at: int | None = None  # level whose output fell short
    immediate: int = 0  # level-0 seeds that were already solutions

    @property
    def complete(self) -> bool:
        return self.starved_at is None

    @property
    def rows_processed(self) -> int:
        return sum(s.rows_in for s in self.stats)

    def norm_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for v in self.solutions:
            hist[v.norm_sq] = hist.get(v.norm_sq, 0) + 1
        return dict(sorted(hist.items()))


def run_levels(
    level0: RowSet,
    plan: Plan,
    inst: SisInstance,
    solutions: SolutionSet | None = None,
    prune: bool = True,
    check: bool = False,
    threads: int = 1,
) -> SolveResult:
    """Merge through all ``plan.t`` blocks and collect verified solutions.

    ``solutions`` may already hold level-0 zero rows. With ``check`` every
    level's residuals are recomputed from scratch against ``inst``.
    """
    if (plan.n, plan.m, plan.q) != (inst.n, inst.m, inst.q):
        raise ValueError("plan does not match instance")
    if solutions is None:
        solutions = SolutionSet(inst)
    result = SolveResult(plan, solutions, immediate=len(solutions))
    N = plan.N_targets[-1]
    cap = math.floor(Fraction(plan.nu) ** 2) if prune else None
    dtype = combo_dtype(plan.d)
    rows = RowSet(level0.residual, level0.combos.astype(dtype), level0.norm_sq, level0.col0)
    nu_check = math.sqrt(plan.norm_sq_bound)
    for i, width in enumerate(plan.block_widths):
        last = i == plan.t - 1
        rows_in = len(rows)
        target = N - len(solutions) if last else plan.N_targets[i + 1]
        dedup: set = set()
        if last:
            for v in solutions:
                dedup.add(np.asarray(v.c, dtype=dtype).tobytes())
        info = GroupInfo()
        parts: list[RowSet] = []
        got = pairs = zeros = 0
        if target > 0:
            for batch in collision_batches(rows.residual[:, :width], plan.q, info):
                new = apply_recipes(rows, batch, width, plan.q, cap, dedup, limit=target - got, threads=threads)
                n_pairs = int((batch.b >= 0).sum())
                pairs += n_pairs
                zeros += len(batch) - n_pairs
                parts.append(new)
                got += len(new)
                if got >= target:
                    break
        if parts:
            rows = RowSet(
                np.vstack([p.residual for p in parts]),
                np.vstack([p.combos for p in parts]),
                np.concatenate([p.norm_sq for p in parts]),
                rows.col0 + width,
            )
        else:
            rows = RowSet(
                np.zeros((0, rows.residual.shape[1] - width), dtype=np.int64),
                np.zeros((0, inst.m), dtype=dtype),
                np.zeros(0, dtype=np.int64),
                rows.col0 + width,
            )
        bound = plan.level_norm_sq_bound(i + 1)
        max_norm = int(rows.norm_sq.max()) if len(rows) else 0
        if max_norm > bound:
            raise AssertionError(f"level {i + 1}: norm_sq {max_norm} exceeds 4^{i + 1} k = {bound}")
        if check and not rows.check(inst):
            raise AssertionError(f"level {i + 1}: residuals disagree with recomputation")
        st = LevelStats(i, rows_in, info.groups, pairs, zeros, len(rows), max_norm)
        result.stats.append(st)
        log.debug("level %d: %s", i, st)
        if len(rows) == 0 and not last:
            result.starved_at = i + 1
            log.warning("starved at level %d", i + 1)
            return result
    for c in rows.combos:
        c = c.tolist()
        if not verify_solution(c, inst, nu_check):
            raise AssertionError(f"merge produced an invalid vector: {verify_solution(c, inst, nu_check).reason}")
        solutions.add(c)
    if len(solutions) < N:
        result.starved_at = plan.t
        log.warning("final level short: %d of %d solutions", len(solutions), N)
    return result


def solve(
    inst: SisInstance,
    nu: float,
    count: int,
    max_rows: int | None = None,
    seed: int = 0,
    order: Order = "random",
    prune: bool = True,
    check: bool = False,
    threads: int = 1,
    plan: Plan | None = None,
) -> SolveResult:
    """Plan, seed and merge: up to ``count`` distinct solutions of norm <= ``nu``.

    Raises ``estimator.Infeasible`` when no merge depth fits the instance.
    """
    if plan is None:
        kw = {} if max_rows is None else {"max_rows": max_rows}
        plan = plan_parameters(inst.n, inst.m, inst.q, nu, count, **kw)
    sols = SolutionSet(inst)
    C0 = seed_matrix(inst.m, plan.k, plan.N_targets[0], order, seed)
    level0 = materialize_level0(C0, inst, sink=sols, threads=threads)
    log.info("plan t=%d k=%d widths=%s targets=%s; %d seeds, %d immediate",
             plan.t, plan.k, plan.block_widths, plan.N_targets, len(C0), len(sols))
    return run_levels(level0, plan, inst, sols, prune=prune, check=check, threads=threads)
