"""Exact arithmetic over Z_q, SIS instances and solution sets."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

MAX_Q_BITS = 62
_INT64_MAX = 2**63 - 1


class InstanceError(ValueError):
    """Raised for malformed or inadmissible SIS parameters."""


def is_prime(q: int) -> bool:
    """Deterministic Miller-Rabin, exact for all q < 3.3e24."""
    if q < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for p in small:
        if q % p == 0:
            return q == p
    d, r = q - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in small:
        x = pow(a, d, q)
        if x in (1, q - 1):
            continue
        for _ in range(r - 1):
            x = x * x % q
            if x == q - 1:
                break
        else:
            return False
    return True


def check_modulus(q: int) -> None:
    if q.bit_length() > MAX_Q_BITS:
        raise InstanceError(f"q exceeds {MAX_Q_BITS} bits")
    if not is_prime(q):
        raise InstanceError("q not prime")


def rank_mod_q(M, q: int) -> int:
    """Rank of ``M`` over the field Z_q by exact Gaussian elimination."""
    rows = [[int(x) % q for x in row] for row in M]
    if not rows:
        return 0
    ncols = len(rows[0])
    rank = 0
    for col in range(ncols):
        pivot = next((i for i in range(rank, len(rows)) if rows[i][col]), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        inv = pow(rows[rank][col], -1, q)
        prow = [x * inv % q for x in rows[rank]]
        rows[rank] = prow
        for i in range(rank + 1, len(rows)):
            f = rows[i][col]
            if f:
                rows[i] = [(x - f * y) % q for x, y in zip(rows[i], prow)]
        rank += 1
        if rank == len(rows):
            break
    return rank


@dataclass(frozen=True, eq=False)
class SisInstance:
    """An m x n matrix ``A`` over Z_q with m > n and full column rank mod q."""

    A: np.ndarray
    q: int

    def __post_init__(self):
        A = np.asarray(self.A)
        if A.ndim != 2:
            raise InstanceError("A must be a 2-d matrix")
        m, n = A.shape
        if n < 1 or m <= n:
            raise InstanceError(f"need m > n >= 1, got m={m}, n={n}")
        check_modulus(self.q)
        A = A.astype(np.int64)
        if A.min() < 0 or A.max() >= self.q:
            raise InstanceError("entries of A must lie in [0, q)")
        if rank_mod_q(A.tolist(), self.q) != n:
            raise InstanceError("A does not have rank n modulo q")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(format_instance(self).encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, SisInstance):
            return NotImplemented
        return self.q == other.q and np.array_equal(self.A, other.A)

    def __hash__(self):
        return hash(self.digest())


def gen_instance(n: int, m: int, q: int, seed: int) -> SisInstance:
    """Uniform m x n matrix over Z_q, resampled until it has rank n."""
    if m <= n or n < 1:
        raise InstanceError(f"need m > n >= 1, got m={m}, n={n}")
    check_modulus(q)
    rng = np.random.default_rng(seed)
    failures = 0
    while True:
        A = rng.integers(0, q, size=(m, n), dtype=np.int64)
        if rank_mod_q(A.tolist(), q) == n:
            break
        failures += 1
    if failures:
        log.info("gen_instance: resampled %d rank-deficient matrices", failures)
    return SisInstance(A, q)


def _fits_int64(C: np.ndarray, A: np.ndarray, q: int) -> bool:
    if C.size == 0:
        return True
    cmax = int(np.abs(C).max())
    return C.shape[-1] * cmax * (q - 1) <= _INT64_MAX


def mat_mul_mod(C, A: np.ndarray, q: int) -> np.ndarray:
    """Exact ``C @ A mod q`` for integer ``C`` (k x m) and ``A`` (m x n).

    Stays in int64 when no partial sum can overflow, otherwise falls back
    to arbitrary-precision Python integers.
    """
    C = np.asarray(C)
    if C.dtype != object and _fits_int64(C, A, q):
        return (C.astype(np.int64) @ A.astype(np.int64)) % q
    Cr = np.vectorize(lambda x: int(x) % q, otypes=[object])(C)
    out = Cr.dot(A.astype(object)) % q
    return out.astype(np.int64)


def mat_vec_mod(c: Sequence[int] | CombinationVector, inst: SisInstance) -> np.ndarray:
    """Return ``c A mod q`` as a length-n vector."""
    if isinstance(c, CombinationVector):
        c = c.c
    c = list(c)
    if len(c) != inst.m:
        raise ValueError(f"length mismatch: len(c)={len(c)}, m={inst.m}")
    arr = np.array(c, dtype=object)
    if all(-_INT64_MAX <= x <= _INT64_MAX for x in c):
        arr = np.array(c, dtype=np.int64)
    return mat_mul_mod(arr[None, :], inst.A, inst.q)[0]


def canonical_combo(c: Iterable[int]) -> tuple[int, ...]:
    """Sign representative of ``c`` whose first nonzero entry is positive."""
    c = tuple(int(x) for x in c)
    for x in c:
        if x:
            return c if x > 0 else tuple(-y for y in c)
    return c


@dataclass(frozen=True)
class CombinationVector:
    c: tuple[int, ...]
    norm_sq: int = field(init=False)

    def __post_init__(self):
        c = tuple(int(x) for x in self.c)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "norm_sq", sum(x * x for x in c))

    @classmethod
    def canonical(cls, c: Iterable[int]) -> CombinationVector:
        return cls(canonical_combo(c))

    def __len__(self):
        return len(self.c)

    def __neg__(self):
        return CombinationVector(tuple(-x for x in self.c))

    def is_zero(self) -> bool:
        return not any(self.c)


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: str

    def __bool__(self):
        return self.valid


def verify_solution(c, inst: SisInstance, nu: float) -> Verdict:
    """Check that ``c`` is a non-trivial solution of norm at most ``nu``."""
    if not isinstance(c, CombinationVector):
        c = CombinationVector(tuple(c))
    if len(c) != inst.m:
        return Verdict(False, "length mismatch")
    if c.is_zero():
        return Verdict(False, "zero vector")
    if all(x % inst.q == 0 for x in c.c):
        return Verdict(False, "trivial lattice vector")
    if not norm_within(c.norm_sq, nu):
        return Verdict(False, "norm exceeds bound")
    if mat_vec_mod(c, inst).any():
        return Verdict(False, "cA != 0 mod q")
    return Verdict(True, "ok")


def norm_within(norm_sq: int, nu: float) -> bool:
    """Exact test of sqrt(norm_sq) <= nu for a float bound."""
    from fractions import Fraction

    return Fraction(norm_sq) <= Fraction(nu) ** 2


class SolutionSet:
    """Deduplicated solutions of ``c A = 0 mod q`` bound to one instance.

    Members are stored in canonical sign form, in insertion order.
    """

    def __init__(self, instance: SisInstance):
        self.instance = instance
        self.instance_digest = instance.digest()
        self._members: dict[tuple[int, ...], CombinationVector] = {}

    def add(self, c) -> bool:
        """Insert ``c``; returns False for duplicates. Raises on non-solutions."""
        key = canonical_combo(c.c if isinstance(c, CombinationVector) else c)
        if key in self._members:
            return False
        vec = CombinationVector(key)
        if len(vec) != self.instance.m:
            raise ValueError("length mismatch")
        if vec.is_zero() or all(x % self.instance.q == 0 for x in key):
            raise ValueError("trivial vector cannot join a SolutionSet")
        if mat_vec_mod(vec, self.instance).any():
            raise ValueError("not a solution of cA = 0 mod q")
        self._members[key] = vec
        return True

    def __contains__(self, c) -> bool:
        return canonical_combo(c.c if isinstance(c, CombinationVector) else c) in self._members

    def __iter__(self) -> Iterator[CombinationVector]:
        return iter(self._members.values())

    def __len__(self):
        return len(self._members)

    def as_array(self) -> np.ndarray:
        if not self._members:
            return np.zeros((0, self.instance.m), dtype=np.int64)
        return np.array([v.c for v in self], dtype=np.int64)


def inhomogeneous_reduce(inst: SisInstance, a: Sequence[int]) -> SisInstance:
    """Stack the target ``a`` under ``A`` to get a homogeneous instance."""
    a = np.asarray([int(x) % inst.q for x in a], dtype=np.int64)
    if a.shape != (inst.n,):
        raise ValueError(f"target must have length n={inst.n}")
    if not a.any():
        raise InstanceError("target a is zero mod q")
    return SisInstance(np.vstack([inst.A, a[None, :]]), inst.q)


@dataclass(frozen=True)
class InhomogeneousSolution:
    c: CombinationVector
    ok: bool  # c A == a mod q rechecked on the original instance
    source: tuple[int, ...]  # indices into the solution set, one or two


def extract_inhomogeneous(sols: SolutionSet) -> list[InhomogeneousSolution]:
    """Recover ``c`` with ``c A = a`` from solutions of the stacked instance.

    Uses single solutions whose last entry is +-1 and pairwise sums or
    differences whose last entry comes out to +-1.
    """
    red = sols.instance
    A, a, q = red.A[:-1], red.A[-1], red.q
    members = list(sols)
    found: dict[tuple[int, ...], InhomogeneousSolution] = {}

    def emit(vec: tuple[int, ...], source: tuple[int, ...]):
        lam = vec[-1]
        # (c, lam) A_1 = 0  =>  c A = -lam a, and lam = +-1
        c = tuple(-lam * x for x in vec[:-1])
        if c in found:
            return
        ok = not ((np.array(c, dtype=object).dot(A.astype(object)) - a) % q).any()
        found[c] = InhomogeneousSolution(CombinationVector(c), bool(ok), source)

    for i, v in enumerate(members):
        if abs(v.c[-1]) == 1:
            emit(v.c, (i,))
    lasts = np.array([v.c[-1] for v in members], dtype=np.int64)
    for i, u in enumerate(members):
        for sigma in (1, -1):
            partners = np.nonzero(np.abs(u.c[-1] + sigma * lasts[i + 1:]) == 1)[0]
            for j in partners + i + 1:
                w = members[int(j)].c
                emit(tuple(x + sigma * y for x, y in zip(u.c, w)), (i, int(j)))
    return sorted(found.values(), key=lambda s: (len(s.source), s.c.norm_sq, s.c.c))


# ---- text formats -------------------------------------------------------


class ParseError(ValueError):
    def __init__(self, line: int, col: int, msg: str):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


def format_instance(inst: SisInstance) -> str:
    lines = [f"SIS {inst.n} {inst.m} {inst.q}"]
    lines += [" ".join(str(int(x)) for x in row) for row in inst.A]
    return "\n".join(lines) + "\n"


def _split_ints(text: str, lineno: int, expect: int | None) -> list[int]:
    out = []
    col = 1
    for tok in text.split(" "):
        if not tok:
            raise ParseError(lineno, col, "expected a single space between fields")
        try:
            out.append(int(tok, 10))
        except ValueError:
            raise ParseError(lineno, col, f"not an integer: {tok!r}") from None
        col += len(tok) + 1
    if expect is not None and len(out) != expect:
        raise ParseError(lineno, col, f"expected {expect} fields, got {len(out)}")
    return out


def _lines(text: str) -> list[str]:
    if "\r" in text:
        raise ParseError(text[: text.index("\r")].count("\n") + 1, 1, "CR line ending")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def parse_instance(text: str) -> SisInstance:
    lines = _lines(text)
    if not lines:
        raise ParseError(1, 1, "empty file")
    head = lines[0].split(" ")
    if head[0] != "SIS":
        raise ParseError(1, 1, "header must start with 'SIS'")
    n, m, q = _split_ints(" ".join(head[1:]), 1, 3)
    if len(lines) - 1 != m:
        raise ParseError(len(lines) + 1, 1, f"expected {m} matrix rows, got {len(lines) - 1}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        row = _split_ints(line, i, n)
        for j, x in enumerate(row):
            if not 0 <= x < q:
                raise ParseError(i, j + 1, f"entry {x} outside [0, q)")
        rows.append(row)
    try:
        return SisInstance(np.array(rows, dtype=np.int64).reshape(m, n), q)
    except InstanceError as e:
        raise ParseError(1, 1, str(e)) from None


def format_solutions(m: int, sols: Iterable) -> str:
    rows = [v.c if isinstance(v, CombinationVector) else tuple(v) for v in sols]
    lines = [f"SOL {m} {len(rows)}"] + [" ".join(str(int(x)) for x in r) for r in rows]
    return "\n".join(lines) + "\n"


def parse_solutions(text: str) -> tuple[int, list[tuple[int, ...]]]:
    lines = _lines(text)
    if not lines or not lines[0].startswith("SOL "):
        raise ParseError(1, 1, "header must start with 'SOL'")
    m, count = _split_ints(lines[0][4:], 1, 2)
    if len(lines) - 1 != count:
        raise ParseError(len(lines) + 1, 1, f"expected {count} rows, got {len(lines) - 1}")
    return m, [tuple(_split_ints(line, i, m)) for i, line in enumerate(lines[1:], start=2)]
