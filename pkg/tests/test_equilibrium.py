from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linswap.efg import GameBuilder, build_counterexample_game, build_sat_game, build_signaling_game
from linswap.equilibrium import (
    KINDS,
    GameContext,
    JointDistribution,
    apply_swap_gain,
    empirical_joint,
    equilibrium_gap,
    full_swap_gap,
    is_linear_swap,
    lce_gap,
    linear_swap_regret,
    maxpay_search,
    swap_gain,
)
from linswap.learners import LearnerConfig, self_play
from linswap.linmap import canonicalize, constant_map, trigger_map
from linswap.normal_form import normal_form_view
from linswap.reference import (
    COUNTEREXAMPLE_LCE,
    COUNTEREXAMPLE_SWAP,
    SIGNALING_EFCE,
    SIGNALING_SWAP,
)

SIG = GameContext(build_signaling_game())
CE = GameContext(build_counterexample_game())
SIG_MU = JointDistribution.from_table(SIG, SIGNALING_EFCE)
CE_MU = JointDistribution.from_table(CE, COUNTEREXAMPLE_LCE)


def direct_gain(mu, player, A):
    """Oracle: Σ_π μ(π) [u_i(A π_i, π_−i) − u_i(π)] from the leaf table, no LP involved."""
    ctx = mu.context
    total = 0.0
    for idx in zip(*np.nonzero(mu.probs)):
        profile = [ctx.plans[i][idx[i]] for i in range(len(idx))]
        moved = list(profile)
        moved[player - 1] = A @ profile[player - 1]
        diff = ctx.table.expected_utilities(moved) - ctx.table.expected_utilities(profile)
        total += mu.probs[idx] * diff[player - 1]
    return total


def test_signaling_efce_is_not_lce():
    assert lce_gap(SIG_MU, 1).value == pytest.approx(1.5, abs=1e-6)
    assert lce_gap(SIG_MU, 2).value == pytest.approx(0.0, abs=1e-7)


def test_counterexample_is_lce():
    for p in (1, 2):
        assert lce_gap(CE_MU, p).value == pytest.approx(0.0, abs=1e-7)


def test_signaling_swap_gain_both_routes():
    assert swap_gain(SIG_MU, 1, SIGNALING_SWAP) == pytest.approx(1.5, abs=1e-9)
    assert apply_swap_gain(SIG_MU, 1, SIGNALING_SWAP) == pytest.approx(1.5, abs=1e-9)


def test_counterexample_swap_gain_is_probability_weighted():
    # (50 + 0.5) per recommended plan, each recommended with probability 1/5
    assert swap_gain(CE_MU, 1, COUNTEREXAMPLE_SWAP) == pytest.approx(10.1, abs=1e-9)
    assert apply_swap_gain(CE_MU, 1, COUNTEREXAMPLE_SWAP) == pytest.approx(10.1, abs=1e-9)


def test_identity_swap_gains_nothing():
    ident = {nm: nm for nm in SIG.names[0]}
    assert swap_gain(SIG_MU, 1, ident) == 0.0


def test_linearity_of_swaps():
    table = {SIG.plan_id(1, a): SIG.plan_id(1, b) for a, b in SIGNALING_SWAP.items()}
    ok, A = is_linear_swap(SIG.indexes[0], SIG.plans[0], table, SIG.systems[0])
    assert ok
    np.testing.assert_allclose(SIG.plans[0] @ A.T, SIG.plans[0][[table[a] for a in range(4)]], atol=1e-8)
    table = {CE.plan_id(1, a): CE.plan_id(1, b) for a, b in COUNTEREXAMPLE_SWAP.items()}
    ok, A = is_linear_swap(CE.indexes[0], CE.plans[0], table, CE.systems[0])
    assert not ok and A is None


@pytest.mark.parametrize("mu", [SIG_MU, CE_MU], ids=["signaling", "counterexample"])
def test_witnesses_reproduce_gaps(mu):
    for p in (1, 2):
        ix, system = mu.context.indexes[p - 1], mu.context.systems[p - 1]
        cert = equilibrium_gap(mu, p, "linear-swap")
        assert direct_gain(mu, p, cert.witness) == pytest.approx(cert.value, abs=1e-6)
        cert = equilibrium_gap(mu, p, "external")
        A = canonicalize(constant_map(ix, cert.witness), system)
        assert direct_gain(mu, p, A) == pytest.approx(cert.value, abs=1e-6)
        cert = equilibrium_gap(mu, p, "trigger")
        s, y = cert.witness
        assert direct_gain(mu, p, trigger_map(ix, s, y)) == pytest.approx(cert.value, abs=1e-6)


def full_swap_oracle(ctx, mu, player):
    """Σ over recommended plans of the best conditional gain, from normal-form payoffs."""
    view = normal_form_view(ctx.game)
    u = np.moveaxis(view.utilities[..., player - 1], player - 1, 0)
    m = np.moveaxis(mu.probs, player - 1, 0)
    k = u.shape[0]
    return sum(max(float(np.sum(m[a] * (u[b] - u[a]))) for b in range(k)) for a in range(k))


@given(seed=st.integers(0, 2**31 - 1))
def test_inclusion_chain_and_brute_force(seed):
    rng = np.random.default_rng(seed)
    ctx = SIG if seed % 2 else CE
    mu = JointDistribution(ctx, rng.dirichlet(np.full(16, 0.3)).reshape(4, 4))
    for p in (1, 2):
        vals = [equilibrium_gap(mu, p, k).value for k in KINDS]
        assert all(a <= b + 1e-6 for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(full_swap_oracle(ctx, mu, p), abs=1e-9)


def dominance_game():
    # each player picks C or D without seeing the other; D strictly dominates C
    gb = GameBuilder(2)
    pay = {("C", "C"): (3, 3), ("C", "D"): (0, 4), ("D", "C"): (4, 0), ("D", "D"): (1, 1)}
    p1 = []
    for a in "CD":
        p1.append((a, gb.decision(2, "h", [(b, gb.leaf(*pay[a, b])) for b in "CD"])))
    return gb.build(gb.decision(1, "g", p1))


def test_strict_nash_point_mass_has_zero_gaps():
    ctx = GameContext(dominance_game())
    mu = JointDistribution.from_table(ctx, {("D", "D"): 1.0})
    for p in (1, 2):
        for k in KINDS:
            assert equilibrium_gap(mu, p, k).value == pytest.approx(0.0, abs=1e-9)
    mu = JointDistribution.from_table(ctx, {("C", "C"): 1.0})
    assert lce_gap(mu, 1).value == pytest.approx(1.0, abs=1e-9)


def test_full_swap_limit():
    with pytest.raises(ValueError):
        full_swap_gap(SIG_MU, 1, max_plans=3)


def test_distribution_validation():
    with pytest.raises(ValueError):
        JointDistribution(SIG, np.ones((4, 4)))
    with pytest.raises(KeyError):
        JointDistribution.from_table(SIG, {("nope", "l_X l_Y"): 1.0})


@pytest.fixture(scope="module")
def signaling_trace():
    return self_play(SIG.game, "linear-swap", 40, LearnerConfig("constant", 0.2))


def test_empirical_joint_has_average_marginals(signaling_trace):
    mu = empirical_joint(signaling_trace, SIG)
    for p in (1, 2):
        np.testing.assert_allclose(mu.marginal(p), signaling_trace.players[p - 1].strategies.mean(axis=0), atol=1e-12)


def test_sampled_joint_concentrates(signaling_trace):
    exact = empirical_joint(signaling_trace, SIG)
    rng = np.random.default_rng(5)
    reps = [empirical_joint(signaling_trace, SIG, sampled=True, rng=rng).probs for _ in range(400)]
    mean = np.mean(reps, axis=0)
    sigma = np.std(reps, axis=0) / np.sqrt(len(reps))
    assert np.all(np.abs(mean - exact.probs) <= 3 * sigma + 1e-3)


def test_empirical_gap_matches_trace_regret(signaling_trace):
    # gain matrices coincide up to the loss normalization, so the gaps agree after rescaling
    mu = empirical_joint(signaling_trace, SIG)
    for p in (1, 2):
        u = SIG.table.utilities[:, p - 1]
        scale = float(u.max() - u.min())
        regret = linear_swap_regret(signaling_trace, p).value
        assert lce_gap(mu, p).value == pytest.approx(scale * regret, abs=1e-6)


def brute_force_satisfiable(clauses, nvars):
    return any(all(any((lit > 0) == bits[abs(lit) - 1] for lit in c) for c in clauses)
               for bits in product([True, False], repeat=nvars))


@pytest.mark.parametrize("clauses", [[[1, -2], [2]], [[1], [-1]], [[1, 2], [-1], [-2, 1]]])
def test_maxpay_on_small_formulas(clauses):
    res = maxpay_search(build_sat_game(clauses))
    assert max(res.gaps) <= 1e-7
    if brute_force_satisfiable(clauses, 2):
        assert res.welfare == pytest.approx(2.0, abs=1e-7)
    else:
        assert res.welfare <= 2 * (1 - 1 / len(clauses)) + 1e-7
