"""Counting heuristics and merge-depth planning."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache

DEFAULT_MAX_ROWS = 1 << 16
DEFAULT_HEADROOM = 4


class Infeasible(ValueError):
    """No merge depth satisfies the capacity inequality."""


@lru_cache(maxsize=4096)
def capacity(m: int, k: int) -> int:
    """Number of {-1,0,1}-vectors of length m and weight 1..k, up to sign."""
    if not 1 <= k < m:
        raise ValueError(f"need 1 <= k < m, got k={k}, m={m}")
    return sum(math.comb(m, i) << (i - 1) for i in range(1, k + 1))


def gaussian_count_log(m: int, nu: float, n: int, q: int) -> float:
    """ln of the ball-volume estimate pi^(m/2) nu^m / (Gamma(m/2+1) q^n)."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    if m < 1:
        raise ValueError("m must be positive")
    return 0.5 * m * math.log(math.pi) + m * math.log(nu) - math.lgamma(0.5 * m + 1) - n * math.log(q)


def pm1_count_log(m: int, d: int, n: int, q: int) -> float:
    """ln of sum_{r<=d} C(m,r) 2^(r-1) / q^n."""
    if not 1 <= d < m:
        raise ValueError(f"need 1 <= d < m, got d={d}, m={m}")
    return math.log(capacity(m, d)) - n * math.log(q)


def eta_delta(n: int, m: int, q: int, nu: float) -> tuple[float, float]:
    scale = n * math.log(q)
    return nu * nu / scale, m / scale


def asymptotic_t(n: int, m: int, q: int, nu: float) -> float:
    """Closed-form depth estimate log2 sqrt(eta ln delta). Not used by the solver."""
    eta, delta = eta_delta(n, m, q, nu)
    if delta <= 1:
        raise ValueError(f"delta = {delta:.4g} <= 1, closed form undefined")
    if eta <= 0:
        raise ValueError("eta must be positive")
    return 0.5 * math.log2(eta * math.log(delta))


def predicted_cost_log(n: int, q: int, t: int) -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    return n / t * math.log(q)


def split_blocks(n: int, t: int) -> list[int]:
    """Split n columns into t blocks as evenly as possible, wider blocks first."""
    base, extra = divmod(n, t)
    return [base + 1] * extra + [base] * (t - extra)


@dataclass(frozen=True)
class Plan:
    n: int
    m: int
    q: int
    t: int
    k: int
    s: int
    block_widths: tuple[int, ...]
    N_targets: tuple[int, ...]
    nu: float
    predicted_cost: float

    @property
    def d(self) -> int:
        return 1 << self.t

    @property
    def norm_sq_bound(self) -> int:
        """Guaranteed bound (2^t sqrt k)^2 on output squared norms."""
        return 4**self.t * self.k

    def level_norm_sq_bound(self, i: int) -> int:
        return 4**i * self.k

    def to_dict(self) -> dict:
        d = asdict(self)
        d["d"] = self.d
        return d


def _depth_ok(m: int, q: int, n: int, nu: float, t: int) -> int | None:
    """Seed budget k for depth t, or None when t is infeasible."""
    k = math.floor(Fraction(nu) ** 2 / 4**t)
    k = min(k, m - 1)
    if k < 1:
        return None
    if capacity(m, k) < q ** -(-n // t):
        return None
    return k


def plan_parameters(
    n: int,
    m: int,
    q: int,
    nu: float,
    N: int,
    max_rows: int = DEFAULT_MAX_ROWS,
    headroom: int = DEFAULT_HEADROOM,
) -> Plan:
    """Pick the deepest feasible merge depth t and fill in per-level targets.

    Depth t is feasible when k = floor(nu^2 / 4^t) >= 1 and the seed
    capacity reaches q^ceil(n/t); both tests are exact.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if nu < 2:
        raise Infeasible("infeasible: nu < 2 leaves no room for a merge level")
    best = None
    t_max = min(int(math.floor(math.log2(nu))) + 1, n)
    for t in range(1, t_max + 1):
        if Fraction(nu) < 2**t:
            break
        k = _depth_ok(m, q, n, nu, t)
        if k is not None:
            best = (t, k)
    if best is None:
        raise Infeasible(f"infeasible: no depth t satisfies capacity(m,k) >= q^ceil(n/t) for n={n}, m={m}, q={q}, nu={nu}")
    t, k = best
    widths = split_blocks(n, t)
    targets = []
    for i, w in enumerate(widths):
        want = max(N, headroom * q**w)
        if i == 0:
            want = min(want, capacity(m, k))
        targets.append(min(want, max_rows))
    targets.append(N)
    return Plan(
        n=n,
        m=m,
        q=q,
        t=t,
        k=k,
        s=-(-n // t),
        block_widths=tuple(widths),
        N_targets=tuple(targets),
        nu=float(nu),
        predicted_cost=predicted_cost_log(n, q, t),
    )


@dataclass(frozen=True)
class HeuristicCounts:
    gaussian_log: float
    pm1_log: float

    def feasible_for(self, N: int) -> bool:
        """True if the +-1 count (the one valid for short nu) reaches N."""
        return self.pm1_log >= math.log(N)


def heuristic_counts(n: int, m: int, q: int, nu: float) -> HeuristicCounts:
    d = min(math.floor(Fraction(nu) ** 2), m - 1)
    return HeuristicCounts(
        gaussian_log=gaussian_count_log(m, nu, n, q),
        pm1_log=pm1_count_log(m, d, n, q) if d >= 1 else -math.inf,
    )
