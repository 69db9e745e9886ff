import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linswap.convex_opt import maximize_over_system
from linswap.efg import build_kuhn_poker, build_signaling_game, build_tree_example
from linswap.linmap import (
    CanonicalizationError,
    InequalityTarget,
    canonicalize,
    check_membership,
    compile_linmap_system,
    compile_self_map_system,
    constant_map,
    lift_affine,
    membership_report,
    trigger_deviation_matrix,
    trigger_map,
)
from linswap.reference import SIGNALING_SWAP_MATRIX, pad_with_empty_sequence
from linswap.sequence_form import (
    StandardPolytope,
    derive_sequence_index,
    enumerate_reduced_plans,
    minimize_subtree,
    random_strategy,
    sequence_form_polytope,
)

TREE = derive_sequence_index(build_tree_example(), 1)
TREE_SYSTEM = compile_self_map_system(TREE)
TREE_PLANS = enumerate_reduced_plans(TREE)
SIG = derive_sequence_index(build_signaling_game(), 1)
SIG_SYSTEM = compile_self_map_system(SIG)
SIG_PLANS = enumerate_reduced_plans(SIG)
KUHN = derive_sequence_index(build_kuhn_poker(3, 2), 2)
KUHN_SYSTEM = compile_self_map_system(KUHN)


def max_image_residual(A, index, plans):
    Q = sequence_form_polytope(index)
    return max(Q.residual(A @ x) for x in plans)


def test_tree_system_size():
    # 10 x 10 matrix entries plus one 5-vector b_j per infoset
    assert TREE_SYSTEM.num_matrix_variables == 100
    assert TREE_SYSTEM.num_variables == 120
    assert TREE_SYSTEM.k == 5 and TREE_SYSTEM.m == 4


def test_pack_unpack_round_trip(rng):
    A = canonicalize(np.eye(TREE.num_sequences), TREE_SYSTEM)
    z = TREE_SYSTEM.pack(A)
    A2, b = TREE_SYSTEM.unpack(z)
    np.testing.assert_array_equal(A, A2)
    assert b.shape == (4, 5)
    assert np.abs(TREE_SYSTEM.E @ z - TREE_SYSTEM.f).max() <= 1e-12


def test_identity_needs_canonical_form():
    I = np.eye(TREE.num_sequences)
    rep = membership_report(I, TREE_SYSTEM)
    assert not rep.ok and rep.violations
    A = canonicalize(I, TREE_SYSTEM)
    assert check_membership(A, TREE_SYSTEM)
    np.testing.assert_allclose(TREE_PLANS @ A.T, TREE_PLANS, atol=1e-12)


def test_signaling_swap_canonical_form():
    B = pad_with_empty_sequence(SIGNALING_SWAP_MATRIX)
    A = canonicalize(B, SIG_SYSTEM)
    assert membership_report(A, SIG_SYSTEM).residual <= 1e-12
    np.testing.assert_allclose(SIG_PLANS @ A.T, SIG_PLANS @ B.T, atol=1e-12)
    expected = np.array([
        [0, 0, 0, 1, 1],
        [0, 1, 0, 0, 0],
        [0, 0, 1, 0, 0],
        [0, 1, 0, 0, 0],
        [0, 0, 1, 0, 0],
    ], dtype=float)
    np.testing.assert_array_equal(A, expected)


def test_canonicalize_rejects_non_maps():
    B = np.eye(TREE.num_sequences)
    B[1, 0] = 2.0  # sends every plan outside Q
    with pytest.raises(CanonicalizationError):
        canonicalize(B, TREE_SYSTEM)


@pytest.mark.parametrize("index,system", [(TREE, TREE_SYSTEM), (SIG, SIG_SYSTEM), (KUHN, KUHN_SYSTEM)])
def test_lp_vertices_map_plans_into_q(index, system, rng):
    plans = enumerate_reduced_plans(index)
    for _ in range(5):
        A, _ = maximize_over_system(system, rng.normal(size=(index.num_sequences,) * 2))
        assert membership_report(A, system).ok
        assert max_image_residual(A, index, plans) <= 1e-7


@given(seed=st.integers(0, 2**31 - 1))
def test_trigger_maps_canonicalize(seed):
    rng = np.random.default_rng(seed)
    s = int(rng.integers(0, TREE.num_sequences))
    if s == 0:
        y = random_strategy(TREE, rng)
    else:
        j = TREE.seq_infoset[s]
        _, y = minimize_subtree(TREE, j, rng.normal(size=TREE.num_sequences))
    raw = trigger_map(TREE, s, y)
    A = trigger_deviation_matrix(TREE, s, y, TREE_SYSTEM)
    assert check_membership(A, TREE_SYSTEM)
    np.testing.assert_allclose(TREE_PLANS @ A.T, TREE_PLANS @ raw.T, atol=1e-9)


def test_trigger_semantics():
    # plans that play B:3 switch to B:4; all other plans are unchanged
    s = TREE.seq("B", "3")
    y = np.zeros(TREE.num_sequences)
    y[TREE.seq("B", "4")] = 1.0
    A = trigger_map(TREE, s, y)
    for x in TREE_PLANS:
        out = A @ x
        if x[s]:
            assert out[s] == 0 and out[TREE.seq("B", "4")] == 1
            np.testing.assert_array_equal(np.delete(out, [s, s + 1]), np.delete(x, [s, s + 1]))
        else:
            np.testing.assert_array_equal(out, x)


def test_empty_trigger_is_constant(rng):
    y = random_strategy(TREE, rng)
    np.testing.assert_allclose(TREE_PLANS @ trigger_map(TREE, 0, y).T, np.tile(y, (len(TREE_PLANS), 1)))


def test_infeasible_continuation_rejected():
    with pytest.raises(ValueError):
        trigger_map(TREE, TREE.seq("B", "3"), np.ones(TREE.num_sequences))


@given(seed=st.integers(0, 2**31 - 1), w=st.floats(0, 1))
def test_membership_is_convex(seed, w):
    rng = np.random.default_rng(seed)
    A1, _ = maximize_over_system(TREE_SYSTEM, rng.normal(size=(10, 10)))
    A2 = constant_map(TREE, TREE_PLANS[int(rng.integers(len(TREE_PLANS)))])
    A2 = canonicalize(A2, TREE_SYSTEM)
    assert check_membership(w * A1 + (1 - w) * A2, TREE_SYSTEM)


def test_affine_maps_lift_to_linear(rng):
    F, _ = maximize_over_system(TREE_SYSTEM, rng.normal(size=(10, 10)))
    F = 0.5 * F
    F[:, 0] = 0.0
    offset = 0.5 * TREE_PLANS[3]
    A = lift_affine(F, offset)
    for x in TREE_PLANS:
        np.testing.assert_allclose(A @ x, F @ x + offset)


def test_map_into_simplex(rng):
    simplex = StandardPolytope(np.ones((1, 3)), np.ones(1), 1.0)
    system = compile_linmap_system(TREE, simplex)
    assert system.d == 3 and system.num_matrix_variables == 30
    for _ in range(5):
        A, _ = maximize_over_system(system, rng.normal(size=(3, 10)))
        imgs = TREE_PLANS @ A.T
        assert np.all(imgs >= -1e-9)
        np.testing.assert_allclose(imgs.sum(axis=1), 1.0, atol=1e-9)


def test_inequality_target_round_trip(rng):
    # triangle {y in R^2 : y >= 0, y1 + y2 <= 1} written as C y <= c
    target = InequalityTarget(np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]]), np.array([0.0, 0.0, 1.0]), 1.0)
    system = compile_linmap_system(TREE, target.standard_form())
    # an affine map into the triangle: the A:1 and A:2 masses, halved, plus a shift
    F = np.zeros((2, 10))
    F[0, TREE.seq("A", "1")] = 0.5
    F[1, TREE.seq("A", "2")] = 0.5
    offset = np.array([0.25, 0.25])
    lifted = target.lift(F, offset)
    A = canonicalize(lifted, system)
    assert check_membership(A, system)
    back = target.extract(A)
    for x in TREE_PLANS:
        np.testing.assert_allclose(back @ x, F @ x + offset, atol=1e-9)
    # every member of the compiled system maps plans into the triangle
    for _ in range(5):
        B, _ = maximize_over_system(system, rng.normal(size=(system.d, 10)))
        imgs = TREE_PLANS @ target.extract(B).T
        assert np.all(imgs @ target.C.T <= target.c + 1e-7)
