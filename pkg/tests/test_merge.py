import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisis.estimator import Plan
from multisis.merge import (
    MergeRecipe,
    RecipeError,
    apply_recipes,
    canonicalize_sign,
    find_collisions,
    run_levels,
    solve,
)
from multisis.seeds import RowSet, materialize_level0, seed_matrix
from multisis.zq import SisInstance, SolutionSet, gen_instance, verify_solution


def all_pairs_oracle(B: np.ndarray, q: int) -> set:
    """Quadratic reference: zero rows and every sign-matched pair of nonzero rows."""
    out = set()
    zero = ~B.any(axis=1)
    out |= {("z", int(i)) for i in np.flatnonzero(zero)}
    for i in range(len(B)):
        if zero[i]:
            continue
        rest = B[i + 1 :]
        diff = ~((B[i] - rest) % q).any(axis=1) & ~zero[i + 1 :]
        summ = ~((B[i] + rest) % q).any(axis=1) & ~zero[i + 1 :] & ~diff
        out |= {("p", i, i + 1 + int(j), -1) for j in np.flatnonzero(diff)}
        out |= {("p", i, i + 1 + int(j), 1) for j in np.flatnonzero(summ)}
    return out


def recipe_set(recipes) -> set:
    return {("z", r.src_a) if r.src_b is None else ("p", r.src_a, r.src_b, r.sign) for r in recipes}


def rows_from_block(B):
    return RowSet(np.asarray(B, dtype=np.int64), np.eye(len(B), dtype=np.int8))


def test_canonicalize_examples():
    k = canonicalize_sign([5, 0, 3], 7)
    assert k.key == (2, 0, 4) and k.flipped
    z = canonicalize_sign([0, 0], 7)
    assert z.key == (0, 0) and not z.flipped
    assert canonicalize_sign([1, 1], 2) == canonicalize_sign([1, 1], 2)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([2, 3, 5, 7, 97, 2**61 - 1]), st.data())
def test_canonicalize_sign_symmetric(q, data):
    v = data.draw(st.lists(st.integers(0, q - 1), min_size=1, max_size=5))
    neg = [(q - x) % q for x in v]
    a, b = canonicalize_sign(v, q), canonicalize_sign(neg, q)
    assert a.key == b.key
    nz = [x for x in a.key if x]
    if nz and q > 2:
        assert 1 <= nz[0] <= (q - 1) // 2
    if not nz:
        assert not a.flipped


def test_canonicalize_symmetric_bulk():
    rng = random.Random(0)
    for _ in range(10_000):
        q = rng.choice([3, 5, 11, 97])
        v = [rng.randrange(q) for _ in range(rng.randint(1, 4))]
        assert canonicalize_sign(v, q).key == canonicalize_sign([(q - x) % q for x in v], q).key


def test_collision_sum_pair():
    rec = find_collisions(rows_from_block([[2, 0, 4], [5, 0, 3]]), 3, 7)
    assert rec == [MergeRecipe(0, 1, 1)]


def test_collision_difference_pair():
    rec = find_collisions(rows_from_block([[3, 1], [3, 1]]), 2, 7)
    assert rec == [MergeRecipe(0, 1, -1)]


def test_collision_zero_rows():
    rec = find_collisions(rows_from_block([[0, 0], [1, 2], [0, 0]]), 2, 5)
    assert recipe_set(rec) == {("z", 0), ("z", 2)}


def test_sort_matches_quadratic_oracle_500():
    rng = np.random.default_rng(4)
    B = rng.integers(0, 5, size=(500, 2))
    assert recipe_set(find_collisions(rows_from_block(B), 2, 5)) == all_pairs_oracle(B, 5)


def test_apply_zero_row_and_pair():
    inst = SisInstance(np.array([[1, 2, 3], [0, 4, 1], [6, 2, 0], [1, 5, 5]]), 7)
    rows = materialize_level0(np.eye(4, dtype=np.int8), inst)
    dedup = set()
    out = apply_recipes(rows, [MergeRecipe(1)], 1, 7, None, dedup)
    assert out.combos.tolist() == [[0, 1, 0, 0]]
    assert out.residual.tolist() == [[4, 1]]
    out = apply_recipes(rows, [MergeRecipe(0, 2, 1)], 1, 7, None, dedup)
    assert out.combos.tolist() == [[1, 0, 1, 0]]
    assert out.residual.tolist() == [[4, 3]]
    assert out.check(inst)
    # the same combination again is a duplicate
    assert len(apply_recipes(rows, [MergeRecipe(2, 0, 1)], 1, 7, None, dedup)) == 0


def test_apply_rejects_bad_recipe():
    inst = SisInstance(np.array([[1, 2], [2, 4], [3, 3]]), 7)
    rows = materialize_level0(np.eye(3, dtype=np.int8), inst)
    with pytest.raises(RecipeError):
        apply_recipes(rows, [MergeRecipe(0, 1, -1)], 1, 7, None, set())


def test_apply_norm_cap():
    inst = SisInstance(np.array([[1, 2], [6, 4], [3, 3]]), 7)
    rows = materialize_level0(np.eye(3, dtype=np.int8), inst)
    assert len(apply_recipes(rows, [MergeRecipe(0, 1, 1)], 1, 7, 1, set())) == 0
    assert len(apply_recipes(rows, [MergeRecipe(0, 1, 1)], 1, 7, 2, set())) == 1


def test_single_level_equal_rows():
    A = np.array([[3], [1], [3], [4]])
    inst = SisInstance(A, 11)
    # below the planner's capacity gate, so the one-level plan is built by hand
    plan = Plan(n=1, m=4, q=11, t=1, k=1, s=1, block_widths=(1,), N_targets=(4, 3), nu=2.0, predicted_cost=0.0)
    sols = SolutionSet(inst)
    level0 = materialize_level0(seed_matrix(4, 1), inst, sols)
    res = run_levels(level0, plan, inst, sols)
    assert (1, 0, -1, 0) in {v.c for v in res.solutions}


def test_desk_instance_end_to_end():
    inst = gen_instance(4, 200, 3, 0)
    res = solve(inst, 16.0, 10, check=True)
    assert res.complete and len(res.solutions) >= 10
    for v in res.solutions:
        assert verify_solution(v, inst, 16.0)
        assert v.norm_sq <= res.plan.norm_sq_bound
    for i, st_ in enumerate(res.stats):
        assert st_.max_norm_sq <= res.plan.level_norm_sq_bound(i + 1)


@pytest.mark.parametrize("n, m, q, nu, N", [(4, 50, 97, 8.0, 50), (3, 50, 5, 6.0, 40), (6, 80, 5, 12.0, 30)])
def test_levels_recheck(n, m, q, nu, N):
    inst = gen_instance(n, m, q, 3)
    res = solve(inst, nu, N, check=True, max_rows=5000)
    assert len(res.solutions) > 0
    keys = {v.c for v in res.solutions}
    assert len(keys) == len(res.solutions)
    assert not any(tuple(-x for x in k) in keys for k in keys)


def test_deterministic_and_thread_independent():
    inst = gen_instance(4, 200, 97, 5)
    a = solve(inst, 8.0, 200, seed=1)
    b = solve(inst, 8.0, 200, seed=1)
    c = solve(inst, 8.0, 200, seed=1, threads=4)
    assert [v.c for v in a.solutions] == [v.c for v in b.solutions] == [v.c for v in c.solutions]


def test_starvation_reported():
    inst = gen_instance(2, 10, 3, 1)
    res = solve(inst, 2.0, 10_000)
    assert not res.complete
    assert res.starved_at is not None
    assert all(verify_solution(v, inst, 2.0) for v in res.solutions)


def test_no_prune_same_guarantee():
    inst = gen_instance(4, 200, 3, 2)
    res = solve(inst, 16.0, 50, prune=False, check=True)
    assert all(v.norm_sq <= res.plan.norm_sq_bound for v in res.solutions)
