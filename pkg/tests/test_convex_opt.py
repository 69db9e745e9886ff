import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linswap.convex_opt import (
    FixedPointError,
    LinearProgram,
    LPInfeasible,
    LPUnbounded,
    MatrixProjector,
    ProjectionTask,
    euclidean_project,
    fixed_point,
    maximize_over_system,
    polytope_as_box_set,
    project_box_equality,
    solve_lp,
    variational_slack,
)
from linswap.efg import build_signaling_game, build_tree_example
from linswap.linmap import compile_self_map_system, membership_report
from linswap.sequence_form import (
    StandardPolytope,
    derive_sequence_index,
    enumerate_reduced_plans,
    random_strategy,
    sequence_form_polytope,
)

TREE = derive_sequence_index(build_tree_example(), 1)
TREE_Q = sequence_form_polytope(TREE)
TREE_PLANS = enumerate_reduced_plans(TREE)
SIG = derive_sequence_index(build_signaling_game(), 1)
SIG_SYSTEM = compile_self_map_system(SIG)


# -- linear programs ---------------------------------------------------------------


def test_lp_known_optimum():
    lp = LinearProgram(np.array([1.0, 1.0]), A_ub=np.array([[1.0, 2.0], [3.0, 1.0]]),
                       b_ub=np.array([4.0, 6.0]), lower=np.zeros(2), maximize=True)
    res = solve_lp(lp)
    np.testing.assert_allclose(res.x, [1.6, 1.2], atol=1e-9)
    assert res.value == pytest.approx(2.8, abs=1e-9)
    assert res.duality_gap <= 1e-8


def test_lp_infeasible_and_unbounded():
    with pytest.raises(LPInfeasible):
        solve_lp(LinearProgram(np.zeros(1), A_eq=np.ones((1, 1)), b_eq=np.array([2.0]),
                               lower=np.zeros(1), upper=np.ones(1)))
    with pytest.raises(LPUnbounded):
        solve_lp(LinearProgram(np.array([1.0]), lower=np.zeros(1), maximize=True))


def test_maximize_over_system_attains_lp_value(rng):
    U = rng.normal(size=(5, 5))
    A, value = maximize_over_system(SIG_SYSTEM, U)
    assert membership_report(A, SIG_SYSTEM).ok
    assert float(np.sum(U * A)) == pytest.approx(value, abs=1e-8)


# -- projections -----------------------------------------------------------------------


def simplex_projection(v):
    """Closed-form Euclidean projection onto the probability simplex (sort and threshold)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.nonzero(u - css / np.arange(1, len(v) + 1) > 0)[0][-1]
    return np.maximum(v - css[k] / (k + 1), 0.0)


vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=12)


@given(v=vectors)
def test_simplex_projection_matches_closed_form(v):
    v = np.array(v)
    S = polytope_as_box_set(StandardPolytope(np.ones((1, len(v))), np.ones(1), 1.0))
    res = project_box_equality(S, v, eps=1e-14)
    np.testing.assert_allclose(res.y, simplex_projection(v), atol=1e-7)
    assert res.error_bound <= 1e-14


def cvxpy_project_q(q):
    y = cp.Variable(len(q))
    cp.Problem(cp.Minimize(cp.sum_squares(y - q)), [TREE_Q.P @ y == TREE_Q.p, y >= 0]).solve(
        solver=cp.CLARABEL)
    return y.value


def test_projection_onto_q_matches_cvxpy(rng):
    for _ in range(10):
        q = rng.normal(scale=2.0, size=TREE.num_sequences)
        y, res = euclidean_project(ProjectionTask(TREE_Q, q, 1e-14))
        np.testing.assert_allclose(y, cvxpy_project_q(q), atol=1e-6)
        assert TREE_Q.residual(y) <= 1e-9


def test_matrix_projection_matches_cvxpy(rng):
    sysm = SIG_SYSTEM
    proj = MatrixProjector(sysm)
    n = sysm.num_variables
    E = sysm.E.toarray()
    bounded = np.flatnonzero(np.isfinite(sysm.lower) & np.isfinite(sysm.upper))
    for _ in range(5):
        Q = rng.normal(size=(5, 5))
        A, res = proj.project(Q, 1e-14)
        z = cp.Variable(n)
        target = Q.T.ravel()  # column-major packing of A
        k = sysm.num_matrix_variables
        cp.Problem(cp.Minimize(cp.sum_squares(z[:k] - target)),
                   [E @ z == sysm.f, z[bounded] >= sysm.lower[bounded],
                    z[bounded] <= sysm.upper[bounded]]).solve(solver=cp.CLARABEL)
        A_ref, _ = sysm.unpack(z.value)
        np.testing.assert_allclose(A, A_ref, atol=1e-6)
        assert membership_report(A, sysm).ok


@given(seed=st.integers(0, 2**31 - 1))
def test_projection_is_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    S = polytope_as_box_set(TREE_Q)
    a, b = rng.normal(scale=3, size=(2, TREE.num_sequences))
    pa = project_box_equality(S, a, 1e-14).y
    pb = project_box_equality(S, b, 1e-14).y
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-7


@given(seed=st.integers(0, 2**31 - 1))
def test_projection_variational_inequality(seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(scale=3, size=TREE.num_sequences)
    eps = 1e-12
    y, _ = euclidean_project(ProjectionTask(TREE_Q, q, eps))
    samples = list(TREE_PLANS) + [random_strategy(TREE, rng) for _ in range(10)]
    assert variational_slack(q, y, samples, eps) <= 0.0


def test_feasible_point_is_fixed(rng):
    x = random_strategy(TREE, rng)
    y, res = euclidean_project(ProjectionTask(TREE_Q, x, 1e-14))
    np.testing.assert_allclose(y, x, atol=1e-7)


def test_projecting_unknown_targets_fails():
    with pytest.raises(TypeError):
        euclidean_project(ProjectionTask(object(), np.zeros(2)))


# -- fixed points -------------------------------------------------------------------


def test_fixed_points_of_random_members(rng):
    for _ in range(10):
        A, _ = maximize_over_system(SIG_SYSTEM, rng.normal(size=(5, 5)))
        B = 0.5 * A + 0.5 * maximize_over_system(SIG_SYSTEM, rng.normal(size=(5, 5)))[0]
        x = fixed_point(B, sequence_form_polytope(SIG))
        assert np.max(np.abs(B @ x - x)) <= 1e-8
        assert sequence_form_polytope(SIG).residual(x) <= 1e-9


def test_fixed_point_when_row_sums_are_off_by_rounding():
    # Regression: row ∅ sums to 1 - 4e-16, so the exact system is infeasible in floating point.
    A = np.array([
        [0.0, 0.99999999999999956, 0.99999999999999944, 0.99999999999999967, 0.99999999999999956],
        [0.0, 0.0, 0.99999999999999933, 0.0, 0.0],
        [0.0, 0.0, 4.7854603733322821e-17, 3.0642529712552912e-08, 3.0642529737910160e-08],
        [0.0, 0.49999999999999967, 1.4239625198325799e-16, 0.49999998467873530, 0.49999998467873502],
        [0.0, 0.49999999999999978, 1.4239625198325799e-16, 0.49999998467873530, 0.49999998467873502],
    ])
    Q = StandardPolytope(np.array([[1.0, 0, 0, 0, 0], [-1.0, 1, 1, 1, 1]]), np.array([1.0, 0.0]), 1.0)
    x = fixed_point(A, Q)
    assert np.max(np.abs(A @ x - x)) <= 1e-8
    assert Q.residual(x) <= 1e-9


def test_no_fixed_point_raises():
    Q = StandardPolytope(np.array([[1.0, 0, 0], [-1.0, 1, 1]]), np.array([1.0, 0.0]), 1.0)
    A = np.zeros((3, 3))
    A[0, 0] = 1.0  # image has no action mass, so it never lies in Q
    with pytest.raises(FixedPointError):
        fixed_point(A, Q)
