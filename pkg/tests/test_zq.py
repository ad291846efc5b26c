import itertools
import random

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from multisis.zq import (
    CombinationVector,
    InstanceError,
    ParseError,
    SisInstance,
    SolutionSet,
    canonical_combo,
    extract_inhomogeneous,
    format_instance,
    format_solutions,
    gen_instance,
    inhomogeneous_reduce,
    is_prime,
    mat_vec_mod,
    parse_instance,
    parse_solutions,
    rank_mod_q,
    verify_solution,
)

Q62 = 2**62 - 57  # largest prime below 2^62


def test_is_prime_matches_sympy():
    for q in list(range(200)) + [91, 97, 7919, Q62, Q62 - 2]:
        assert is_prime(q) == sympy.isprime(q)


@pytest.mark.parametrize(
    "M, q, r",
    [
        (np.eye(3, dtype=int), 7, 3),
        (np.zeros((4, 2), dtype=int), 5, 0),
        ([[1, 2], [2, 4]], 5, 1),
    ],
)
def test_rank_examples(M, q, r):
    assert rank_mod_q(M, q) == r


def _rank_by_minors(A, q):
    # independent rank: largest r with a nonzero r x r minor mod q
    M = sympy.Matrix(A.tolist())
    rows, cols = M.shape
    for r in range(min(rows, cols), 0, -1):
        for ri in itertools.combinations(range(rows), r):
            for ci in itertools.combinations(range(cols), r):
                if M.extract(list(ri), list(ci)).det() % q:
                    return r
    return 0


def test_gen_instance_rank_recheck():
    inst = gen_instance(4, 20, 97, seed=7)
    assert inst.A.shape == (20, 4)
    assert ((0 <= inst.A) & (inst.A < 97)).all()
    assert _rank_by_minors(inst.A, 97) == 4


def test_gen_instance_tiny_binary():
    inst = gen_instance(1, 2, 2, seed=0)
    assert inst.A.shape == (2, 1)
    assert inst.A.any()


def test_gen_instance_deterministic():
    assert gen_instance(3, 10, 5, 11) == gen_instance(3, 10, 5, 11)


@pytest.mark.parametrize("n, m, q, msg", [(2, 2, 5, "m > n"), (2, 5, 91, "not prime"), (2, 5, 2**63 + 29, "bits")])
def test_gen_instance_rejects(n, m, q, msg):
    with pytest.raises(InstanceError, match=msg):
        gen_instance(n, m, q, 0)


def test_instance_rejects_rank_deficient():
    with pytest.raises(InstanceError, match="rank"):
        SisInstance(np.array([[1, 2], [2, 4], [3, 1]]), 5)


def test_mat_vec_mod_examples():
    inst = gen_instance(3, 6, 11, 1)
    assert not mat_vec_mod([0] * 6, inst).any()
    assert not mat_vec_mod([11, 0, 0, 0, 0, 0], inst).any()
    small = SisInstance(np.array([[1], [4]]), 5)
    assert mat_vec_mod([1, 1], small).tolist() == [0]
    with pytest.raises(ValueError):
        mat_vec_mod([1, 2, 3], small)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=8, max_size=8), st.sampled_from([1, -1]))
def test_mat_vec_mod_linear_in_sign(c, s):
    inst = gen_instance(3, 8, 13, 5)
    assert ((mat_vec_mod([s * x for x in c], inst) - s * mat_vec_mod(c, inst)) % 13 == 0).all()


def test_mat_vec_mod_no_overflow_62bit():
    rng = random.Random(3)
    m, n = 10**6, 2
    A = np.array([[rng.randrange(Q62) for _ in range(n)] for _ in range(m)], dtype=np.int64)
    inst = SisInstance(A, Q62)
    c = [rng.randrange(-1000, 1000) for _ in range(m)]
    rows = A.tolist()
    ref = [sum(ci * row[j] for ci, row in zip(c, rows)) % Q62 for j in range(n)]
    assert mat_vec_mod(c, inst).tolist() == ref


def test_verify_examples():
    inst = gen_instance(2, 5, 7, 2)
    assert verify_solution([0] * 5, inst, 10).reason == "zero vector"
    assert verify_solution([0, 0, 7, 0, 0], inst, 10).reason == "trivial lattice vector"
    assert verify_solution([7, 0, 14, 0, 0], inst, 100).reason == "trivial lattice vector"
    assert verify_solution([1, 2], inst, 10).reason == "length mismatch"


def _naive_ok(c, A, q, nu):
    if not any(c) or all(x % q == 0 for x in c):
        return False
    if sum(x * x for x in c) > nu * nu:
        return False
    return all(sum(ci * row[j] for ci, row in zip(c, A)) % q == 0 for j in range(len(A[0])))


def test_verify_matches_naive_checker():
    q = 3
    inst = gen_instance(2, 6, q, 4)
    A = inst.A.tolist()
    rng = random.Random(0)
    accepted = 0
    for _ in range(10_000):
        c = [rng.choice([-3, -1, 0, 0, 0, 1, 2, 3]) for _ in range(6)]
        nu = rng.choice([2.0, 3.0, 4.5])
        got = verify_solution(c, inst, nu).valid
        assert got == _naive_ok(c, A, q, nu)
        accepted += got
    assert accepted > 0


def test_solution_set_dedups_sign_and_rejects_nonsolutions():
    inst = SisInstance(np.array([[1], [1], [2]]), 3)
    s = SolutionSet(inst)
    assert s.add([1, -1, 0])
    assert not s.add([-1, 1, 0])
    assert [-1, 1, 0] in s
    with pytest.raises(ValueError):
        s.add([1, 0, 0])
    with pytest.raises(ValueError):
        s.add([3, 0, 0])
    assert len(s) == 1
    assert s.instance_digest == inst.digest()


def test_combination_vector_norm_cached():
    v = CombinationVector((3, -4, 0))
    assert v.norm_sq == 25
    assert canonical_combo((0, -2, 1)) == (0, 2, -1)


def test_inhomogeneous_reduce_shape():
    inst = gen_instance(4, 20, 97, 1)
    a = [1, 2, 3, 4]
    red = inhomogeneous_reduce(inst, a)
    assert red.m == 21 and red.n == 4
    assert red.A[-1].tolist() == a
    with pytest.raises(InstanceError):
        inhomogeneous_reduce(inst, [0, 97, 0, 0])


def test_concatenation_algebra():
    inst = gen_instance(2, 6, 5, 3)
    c = [1, 0, -1, 0, 1, 0]
    a = (-mat_vec_mod(c, inst)) % 5
    red = inhomogeneous_reduce(inst, a)
    assert not mat_vec_mod(c + [1], red).any()
    # (c, 1) solves the stacked system, so -c solves c A = a
    assert (mat_vec_mod([-x for x in c], inst) == a).all()


def test_extract_empty():
    red = inhomogeneous_reduce(gen_instance(2, 6, 5, 3), [1, 1])
    assert extract_inhomogeneous(SolutionSet(red)) == []


def test_extract_single_and_pairs():
    A = np.array([[1, 0], [0, 1], [1, 1], [2, 3]])
    base = SisInstance(A, 5)
    a = [1, 2]
    red = inhomogeneous_reduce(base, a)
    # rows of red: A0=(1,0) A1=(0,1) A2=(1,1) A3=(2,3) a=(1,2)
    sols = SolutionSet(red)
    sols.add([1, 2, 0, 0, -1])  # A0 + 2A1 = a, last entry -1
    out = extract_inhomogeneous(sols)
    assert any(s.c.c == (1, 2, 0, 0) and s.ok for s in out)
    assert all(s.ok for s in out)


def test_extract_pair_only():
    # fixture from exhaustive search: solutions with last entries 2 and 3,
    # so only their difference has last entry -1
    A = np.array([[1, 0], [0, 1], [1, 1], [2, 3]])
    red = inhomogeneous_reduce(SisInstance(A, 5), [1, 2])
    rows = red.A.tolist()

    def first_with_last(v):
        for c in itertools.product(range(-2, 3), repeat=4):
            c = c + (v,)
            if all(sum(x * r[j] for x, r in zip(c, rows)) % 5 == 0 for j in range(2)):
                return c

    sols = SolutionSet(red)
    sols.add(first_with_last(2))
    sols.add(first_with_last(3))
    assert not any(abs(v.c[-1]) == 1 for v in sols)
    out = extract_inhomogeneous(sols)
    assert out and all(s.ok and len(s.source) == 2 for s in out)
    for s in out:
        assert [sum(x * r[j] for x, r in zip(s.c.c, A.tolist())) % 5 for j in range(2)] == [1, 2]


def test_instance_format_roundtrip():
    inst = gen_instance(4, 200, 97, 7)
    text = format_instance(inst)
    assert text.startswith("SIS 4 200 97\n")
    assert not any(line.endswith(" ") for line in text.splitlines())
    assert parse_instance(text) == inst


def test_solution_format_roundtrip():
    text = format_solutions(3, [(1, -2, 0), (0, 0, 5)])
    assert text == "SOL 3 2\n1 -2 0\n0 0 5\n"
    assert parse_solutions(text) == (3, [(1, -2, 0), (0, 0, 5)])


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("SIS 1 2 5\n1\nx\n", 3, 1),
        ("SIS 2 3 5\n1 2\n3  4\n0 1\n", 3, 3),
        ("SIS 2 3 5\n1 2\n3 4\n", 4, 1),
        ("SIS 2 3 5\n1 2\n3 9\n0 1\n", 3, 2),
        ("SIX 2 3 5\n", 1, 1),
    ],
)
def test_parse_errors_name_position(text, line, col):
    with pytest.raises(ParseError) as ei:
        parse_instance(text)
    assert (ei.value.line, ei.value.col) == (line, col)
