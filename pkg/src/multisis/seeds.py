"""Seed combinations of small weight and the level-0 row set."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Literal

import numpy as np

from .zq import SisInstance, SolutionSet, mat_mul_mod

Order = Literal["lex", "random"]

# weight classes up to this size are enumerated in full before shuffling
_FULL_CLASS_LIMIT = 1 << 18


@dataclass(frozen=True)
class SeedVector:
    """Sparse {-1,0,1} vector; indices increasing, first sign +1."""

    support: tuple[tuple[int, int], ...]

    def __post_init__(self):
        idx = [i for i, _ in self.support]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("support indices must be strictly increasing")
        if self.support and self.support[0][1] != 1:
            raise ValueError("first sign must be +1")
        if any(s not in (1, -1) for _, s in self.support):
            raise ValueError("signs must be +-1")

    @property
    def weight(self) -> int:
        return len(self.support)

    def dense(self, m: int) -> np.ndarray:
        v = np.zeros(m, dtype=np.int64)
        for i, s in self.support:
            v[i] = s
        return v


def class_size(m: int, r: int) -> int:
    return math.comb(m, r) << (r - 1)


def _full_class(m: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    """All weight-r canonical supports in lex order: (indices, signs)."""
    combos = np.array(list(itertools.combinations(range(m), r)), dtype=np.int64).reshape(-1, r)
    tails = list(itertools.product((1, -1), repeat=r - 1))
    tails = np.array(tails, dtype=np.int64).reshape(len(tails), r - 1)
    signs = np.hstack([np.ones((len(tails), 1), dtype=np.int64), tails])
    idx = np.repeat(combos, len(signs), axis=0)
    sg = np.tile(signs, (len(combos), 1))
    return idx, sg


def _sample_class(m: int, r: int, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``count`` distinct uniform weight-r canonical supports (rejection sampling)."""
    seen: set[bytes] = set()
    out_idx, out_sg = [], []
    while len(seen) < count:
        batch = max(2 * (count - len(seen)), 64)
        idx = np.sort(rng.integers(0, m, size=(batch, r)), axis=1)
        ok = (np.diff(idx, axis=1) > 0).all(axis=1)
        sg = rng.choice(np.array([1, -1]), size=(batch, r))
        sg[:, 0] = 1
        for i in np.nonzero(ok)[0]:
            key = idx[i].tobytes() + sg[i].tobytes()
            if key in seen:
                continue
            seen.add(key)
            out_idx.append(idx[i])
            out_sg.append(sg[i])
            if len(seen) == count:
                break
    return np.array(out_idx).reshape(count, r), np.array(out_sg).reshape(count, r)


def _seed_classes(m: int, k: int, limit: int | None, order: Order, seed: int | None):
    if not 1 <= k < m:
        raise ValueError(f"need 1 <= k < m, got k={k}, m={m}")
    if limit is not None and limit < 1:
        raise ValueError("limit must be >= 1")
    rng = np.random.default_rng(seed)
    remaining = math.inf if limit is None else limit
    for r in range(1, k + 1):
        if remaining <= 0:
            return
        size = class_size(m, r)
        take = int(min(size, remaining))
        if order == "lex" and take < size:
            idx, sg = _lex_prefix(m, r, take)
        elif order == "lex" or size <= _FULL_CLASS_LIMIT or 2 * take >= size:
            idx, sg = _full_class(m, r)
            if order == "random":
                perm = rng.permutation(len(idx))[:take]
                idx, sg = idx[perm], sg[perm]
        else:
            idx, sg = _sample_class(m, r, take, rng)
        yield idx, sg
        remaining -= take


def _lex_prefix(m: int, r: int, take: int) -> tuple[np.ndarray, np.ndarray]:
    tails = list(itertools.product((1, -1), repeat=r - 1))
    idx, sg = [], []
    for comb in itertools.combinations(range(m), r):
        for tail in tails:
            idx.append(comb)
            sg.append((1,) + tail)
            if len(idx) == take:
                return np.array(idx).reshape(take, r), np.array(sg).reshape(take, r)
    return np.array(idx).reshape(len(idx), r), np.array(sg).reshape(len(sg), r)


def enumerate_seeds(
    m: int, k: int, limit: int | None = None, order: Order = "lex", seed: int | None = None
) -> Iterator[SeedVector]:
    """Distinct canonical seeds, weight ascending, at most ``limit`` of them.

    ``random`` order shuffles within each weight class (deterministic for a
    given ``seed``); a class larger than the remaining budget is sampled.
    """
    for idx, sg in _seed_classes(m, k, limit, order, seed):
        for row_i, row_s in zip(idx.tolist(), sg.tolist()):
            yield SeedVector(tuple(zip(row_i, row_s)))


def seed_matrix(m: int, k: int, limit: int | None = None, order: Order = "lex", seed: int | None = None) -> np.ndarray:
    """Dense int8 matrix with the same rows ``enumerate_seeds`` would yield."""
    blocks = []
    for idx, sg in _seed_classes(m, k, limit, order, seed):
        C = np.zeros((len(idx), m), dtype=np.int8)
        np.put_along_axis(C, idx, sg.astype(np.int8), axis=1)
        blocks.append(C)
    return np.vstack(blocks) if blocks else np.zeros((0, m), dtype=np.int8)


def combo_dtype(max_abs: int):
    for dt in (np.int8, np.int16, np.int32):
        if max_abs <= np.iinfo(dt).max:
            return dt
    return np.int64


@dataclass(frozen=True)
class TrackedRow:
    residual: np.ndarray  # over Z_q, remaining columns only
    combo: np.ndarray  # length m over Z
    norm_sq: int


class RowSet:
    """Columnar store of tracked rows at one merge level.

    ``residual[j]`` equals ``combos[j] @ A[:, col0:] mod q`` where ``col0``
    is the number of columns already zeroed.
    """

    def __init__(self, residual: np.ndarray, combos: np.ndarray, norm_sq: np.ndarray | None = None, col0: int = 0):
        self.residual = residual
        self.combos = combos
        if norm_sq is None:
            c = combos.astype(np.int64)
            norm_sq = (c * c).sum(axis=1)
        self.norm_sq = norm_sq
        self.col0 = col0

    def __len__(self):
        return len(self.residual)

    def row(self, i: int) -> TrackedRow:
        return TrackedRow(self.residual[i], self.combos[i], int(self.norm_sq[i]))

    def __iter__(self) -> Iterator[TrackedRow]:
        return (self.row(i) for i in range(len(self)))

    def take(self, sel) -> RowSet:
        return RowSet(self.residual[sel], self.combos[sel], self.norm_sq[sel], self.col0)

    @classmethod
    def from_rows(cls, rows: Iterable[TrackedRow], col0: int = 0) -> RowSet:
        rows = list(rows)
        return cls(
            np.array([r.residual for r in rows], dtype=np.int64),
            np.array([r.combo for r in rows]),
            np.array([r.norm_sq for r in rows], dtype=np.int64),
            col0,
        )

    def check(self, inst: SisInstance) -> bool:
        """Recompute every residual from its combination vector."""
        full = mat_mul_mod(self.combos, inst.A, inst.q)
        return bool((full[:, : self.col0] == 0).all() and (full[:, self.col0 :] == self.residual).all())


def materialize_level0(
    seeds: Iterable[SeedVector] | np.ndarray,
    inst: SisInstance,
    sink: SolutionSet | None = None,
    threads: int = 1,
) -> RowSet:
    """Compute seed residuals ``C0 A mod q``.

    Rows whose residual is already zero go to ``sink`` instead of the
    returned set.
    """
    if isinstance(seeds, np.ndarray):
        C0 = seeds
    else:
        C0 = np.array([s.dense(inst.m) for s in seeds], dtype=np.int8).reshape(-1, inst.m)
    if threads > 1 and len(C0) > 1024:
        chunks = np.array_split(C0, threads)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda c: mat_mul_mod(c, inst.A, inst.q), chunks))
        R = np.vstack(parts)
    else:
        R = mat_mul_mod(C0, inst.A, inst.q)
    zero = ~R.any(axis=1)
    if sink is not None:
        for c in C0[zero]:
            sink.add(c.tolist())
    keep = ~zero
    return RowSet(R[keep].astype(np.int64), C0[keep].copy())
