"""Regret and equilibrium-gap audits over external, trigger, linear-swap and full-swap deviations.

Every audit reduces to a *gain matrix* U (|Σ| x |Σ|) for one player: the
gain of deviation A is <U, A> − tr(U).  For a play trace U = −Σ_t ℓ^t x^tᵀ;
for a joint distribution μ, U = Σ_π μ(π) g(π_−i) π_iᵀ where g is the
player's utility gradient against the others' plans.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from math import prod
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .convex_opt import LinearProgram, LPInfeasible, maximize_over_system, solve_lp
from .efg.model import GameTree
from .linmap import LinMapSystem, compile_self_map_system
from .payoffs import LeafTable, leaf_table
from .sequence_form import (
    SequenceIndex,
    best_response_values,
    derive_sequence_index,
    enumerate_reduced_plans,
    plan_mixture,
    plan_name,
    sample_plan,
)
from .tolerances import DEFAULT

KINDS = ("external", "trigger", "linear-swap", "full-swap")


@dataclass
class GapCertificate:
    player: int
    kind: str
    value: float
    witness: object = None
    detail: dict = field(default_factory=dict)


# -- gaps from a gain matrix --------------------------------------------------------


def _subtree_maxima(index: SequenceIndex, U: np.ndarray):
    """val[r, j] = max over the subtree polytope at j of <U[:, r], y>."""
    val, choice = best_response_values(index, -U.T)
    return -val, choice


def _expand(index: SequenceIndex, choice_row: np.ndarray, roots) -> np.ndarray:
    y = np.zeros(index.num_sequences)
    stack = list(roots)
    while stack:
        j = stack.pop()
        s = index.first_seq[j] + int(choice_row[j])
        y[s] = 1.0
        stack.extend(index.children[s])
    return y


def external_gap(index: SequenceIndex, U: np.ndarray, player: int = 0) -> GapCertificate:
    """Best constant deviation: max_y <U[:, ∅], y> − tr(U)."""
    val, choice = _subtree_maxima(index, U)
    roots = list(index.root_infosets)
    y = _expand(index, choice[0], roots)
    y[0] = 1.0
    value = float(U[0, 0] + val[0, roots].sum() - np.trace(U))
    return GapCertificate(player, "external", value, y)


def trigger_gap(index: SequenceIndex, U: np.ndarray, player: int = 0) -> GapCertificate:
    """Best trigger deviation, the empty trigger (a constant map) included.

    Trigger σ̂ = (j, a) with continuation y gains <U[:, σ̂], y> − Σ_{σ ⪰ σ̂} U[σ, σ].
    """
    best = external_gap(index, U, player)
    best.kind = "trigger"
    best.detail = {"trigger": 0}
    best.witness = (0, best.witness)
    val, choice = _subtree_maxima(index, U)
    diag = np.diag(U)
    for s in range(1, index.num_sequences):
        j = index.seq_infoset[s]
        value = float(val[s, j] - diag[index.seqs_from(s)].sum())
        if value > best.value:
            y = _expand(index, choice[s], [j])
            best = GapCertificate(player, "trigger", value, (s, y), {"trigger": s})
    return best


def linear_swap_gap(system: LinMapSystem, U: np.ndarray, player: int = 0) -> GapCertificate:
    A, value = maximize_over_system(system, U)
    return GapCertificate(player, "linear-swap", float(value - np.trace(U)), A)


# -- regrets of play traces ------------------------------------------------------------


def correlation_matrix(strategies: np.ndarray, losses: np.ndarray, upto: int | None = None) -> np.ndarray:
    """Σ_t ℓ^t x^tᵀ over the first `upto` iterations."""
    X = np.asarray(strategies)[:upto]
    L = np.asarray(losses)[:upto]
    return L.T @ X


def _trace_arrays(trace, player: int):
    rec = trace.players[player - 1]
    return rec.index, rec.strategies, rec.losses


def _average(cert: GapCertificate, T: int) -> GapCertificate:
    cert.value /= T
    cert.detail["iterations"] = T
    return cert


def external_regret(trace, player: int, upto: int | None = None) -> GapCertificate:
    index, X, L = _trace_arrays(trace, player)
    T = len(X) if upto is None else upto
    return _average(external_gap(index, -correlation_matrix(X, L, T), player), T)


def trigger_regret(trace, player: int, upto: int | None = None) -> GapCertificate:
    index, X, L = _trace_arrays(trace, player)
    T = len(X) if upto is None else upto
    return _average(trigger_gap(index, -correlation_matrix(X, L, T), player), T)


def linear_swap_regret(trace, player: int, upto: int | None = None,
                       system: LinMapSystem | None = None) -> GapCertificate:
    """max over A in M of (1/T) Σ_t <ℓ^t, x^t − A x^t>, with the maximizing matrix."""
    index, X, L = _trace_arrays(trace, player)
    T = len(X) if upto is None else upto
    system = system or compile_self_map_system(index)
    return _average(linear_swap_gap(system, -correlation_matrix(X, L, T), player), T)


# -- joint distributions ---------------------------------------------------------------


@dataclass
class GameContext:
    """Cached per-game structures for equilibrium audits at desk scale."""

    game: GameTree
    cap: int = 10_000

    @cached_property
    def indexes(self) -> tuple[SequenceIndex, ...]:
        return tuple(derive_sequence_index(self.game, p) for p in range(1, self.game.num_players + 1))

    @cached_property
    def plans(self) -> tuple[np.ndarray, ...]:
        return tuple(enumerate_reduced_plans(ix, self.cap) for ix in self.indexes)

    @cached_property
    def names(self) -> tuple[tuple[str, ...], ...]:
        return tuple(tuple(plan_name(ix, p) for p in ps) for ix, ps in zip(self.indexes, self.plans))

    @cached_property
    def table(self) -> LeafTable:
        return leaf_table(self.game, self.indexes)

    @cached_property
    def systems(self) -> tuple[LinMapSystem, ...]:
        return tuple(compile_self_map_system(ix) for ix in self.indexes)

    @cached_property
    def reached(self) -> tuple[np.ndarray, ...]:
        """reached[i][a, z] = 1 when plan a of player i is consistent with leaf z."""
        return tuple(self.plans[i][:, self.table.seqs[i]] for i in range(self.game.num_players))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.plans)

    def plan_id(self, player: int, name: str) -> int:
        try:
            return self.names[player - 1].index(name)
        except ValueError:
            raise KeyError(f"player {player} has no plan {name!r}") from None


@dataclass
class JointDistribution:
    """Probability tensor over reduced-plan profiles (axis i = player i+1's plans)."""

    context: GameContext
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != self.context.shape:
            raise ValueError(f"tensor shape {self.probs.shape} != plan counts {self.context.shape}")
        if np.any(self.probs < -1e-12) or abs(self.probs.sum() - 1.0) > 1e-10:
            raise ValueError("joint distribution must be nonnegative and sum to 1")

    @classmethod
    def from_table(cls, context: GameContext, entries: Mapping[tuple[str, ...], float]):
        probs = np.zeros(context.shape)
        for names, p in entries.items():
            idx = tuple(context.plan_id(i + 1, nm) for i, nm in enumerate(names))
            probs[idx] += p
        return cls(context, probs)

    def support(self) -> list[tuple[tuple[str, ...], float]]:
        out = []
        for idx in zip(*np.nonzero(self.probs > 0)):
            names = tuple(self.context.names[i][a] for i, a in enumerate(idx))
            out.append((names, float(self.probs[idx])))
        return out

    def marginal(self, player: int) -> np.ndarray:
        """Player's expected sequence-form strategy under μ."""
        axes = tuple(i for i in range(self.probs.ndim) if i != player - 1)
        return self.probs.sum(axis=axes) @ self.context.plans[player - 1]


def _einsum_others(probs: np.ndarray, reached: Sequence[np.ndarray], player: int) -> np.ndarray:
    """W[a, z] = Σ_{π_−i} μ(a, π_−i) Π_{o≠i} reached_o[π_o, z]."""
    n = probs.ndim
    letters = "abcdefghijklmnopqrstuvwxy"
    mu = letters[:n]
    ops, subs = [probs], [mu]
    for o in range(n):
        if o != player - 1:
            ops.append(reached[o])
            subs.append(letters[o] + "z")
    return np.einsum(",".join(subs) + "->" + letters[player - 1] + "z", *ops)


def gradient_by_plan(mu: JointDistribution, player: int) -> np.ndarray:
    """G[a] = Σ_{π_−i} μ(a, π_−i) g_i(π_−i), one row per plan a of the player."""
    ctx = mu.context
    W = _einsum_others(mu.probs, ctx.reached, player)
    w = W * (ctx.table.chance * ctx.table.utilities[:, player - 1])[None, :]
    n = ctx.indexes[player - 1].num_sequences
    onehot = np.zeros((len(ctx.table.chance), n))
    onehot[np.arange(len(ctx.table.chance)), ctx.table.seqs[player - 1]] = 1.0
    return w @ onehot


def gain_matrix(mu: JointDistribution, player: int) -> np.ndarray:
    """U = Σ_π μ(π) g_i(π_−i) π_iᵀ."""
    return gradient_by_plan(mu, player).T @ mu.context.plans[player - 1]


def swap_table(mu: JointDistribution, player: int) -> np.ndarray:
    """W[a, b]: expected gain from playing plan b whenever plan a is recommended."""
    G = gradient_by_plan(mu, player)
    plans = mu.context.plans[player - 1]
    vals = G @ plans.T  # vals[a, b] = Σ μ(a,·) u(b,·)
    return vals - np.diag(vals)[:, None]


def expected_utility(mu: JointDistribution, player: int) -> float:
    G = gradient_by_plan(mu, player)
    return float(np.sum(G * mu.context.plans[player - 1]))


def lce_gap(mu: JointDistribution, player: int) -> GapCertificate:
    ctx = mu.context
    return linear_swap_gap(ctx.systems[player - 1], gain_matrix(mu, player), player)


def external_eq_gap(mu: JointDistribution, player: int) -> GapCertificate:
    return external_gap(mu.context.indexes[player - 1], gain_matrix(mu, player), player)


def trigger_eq_gap(mu: JointDistribution, player: int) -> GapCertificate:
    return trigger_gap(mu.context.indexes[player - 1], gain_matrix(mu, player), player)


def full_swap_gap(mu: JointDistribution, player: int, max_plans: int = 6) -> GapCertificate:
    """Best plan-to-plan swap found by trying every table (at most max_plans plans)."""
    W = swap_table(mu, player)
    k = W.shape[0]
    if k > max_plans:
        raise ValueError(f"{k} plans exceed the brute-force limit of {max_plans}")
    best_val, best_tab = -np.inf, None
    rows = np.arange(k)
    for tab in product(range(k), repeat=k):
        val = float(W[rows, tab].sum())
        if val > best_val:
            best_val, best_tab = val, tab
    return GapCertificate(player, "full-swap", best_val, best_tab)


def equilibrium_gap(mu: JointDistribution, player: int, kind: str) -> GapCertificate:
    if kind == "external":
        return external_eq_gap(mu, player)
    if kind == "trigger":
        return trigger_eq_gap(mu, player)
    if kind == "linear-swap":
        return lce_gap(mu, player)
    if kind == "full-swap":
        return full_swap_gap(mu, player)
    raise ValueError(f"unknown deviation class {kind!r}")


def _swap_indices(ctx: GameContext, player: int, swap: Mapping) -> dict[int, int]:
    out = {}
    for a, b in swap.items():
        ia = ctx.plan_id(player, a) if isinstance(a, str) else int(a)
        ib = ctx.plan_id(player, b) if isinstance(b, str) else int(b)
        out[ia] = ib
    return out


def swap_gain(mu: JointDistribution, player: int, swap: Mapping) -> float:
    """Expected utility gain of replacing the player's plan a by swap[a] in every profile.

    Plans absent from the table are left unchanged, which requires them to
    carry no mass under μ unless they map to themselves.
    """
    ctx = mu.context
    table = _swap_indices(ctx, player, swap)
    W = swap_table(mu, player)
    return float(sum(W[a, b] for a, b in table.items()))


def apply_swap_gain(mu: JointDistribution, player: int, swap: Mapping) -> float:
    """The same gain computed profile by profile from the normal-form utilities."""
    ctx = mu.context
    table = _swap_indices(ctx, player, swap)
    n = len(ctx.plans)
    total = 0.0
    for idx in zip(*np.nonzero(mu.probs)):
        new = list(idx)
        new[player - 1] = table.get(idx[player - 1], idx[player - 1])
        profile_old = [ctx.plans[i][idx[i]] for i in range(n)]
        profile_new = [ctx.plans[i][new[i]] for i in range(n)]
        u_old = ctx.table.expected_utilities(profile_old)[player - 1]
        u_new = ctx.table.expected_utilities(profile_new)[player - 1]
        total += mu.probs[idx] * (u_new - u_old)
    return float(total)


def is_linear_swap(index: SequenceIndex, plans: np.ndarray, swap: Mapping[int, int],
                   system: LinMapSystem | None = None, tol: float = 1e-8):
    """Feasibility of A in M with A π = swap(π) for every plan π.

    Returns (True, A) or (False, None).  Plans missing from the table map to themselves.
    """
    system = system or compile_self_map_system(index)
    d, nseq = system.d, system.n
    rows, rhs = [], []
    for a, plan in enumerate(plans):
        target = plans[swap.get(a, a)]
        blk = sp.lil_matrix((d, system.num_variables))
        for s in np.flatnonzero(plan > 0.5):
            for r in range(d):
                blk[r, system.a_var(r, s)] = 1.0
        rows.append(blk.tocsr())
        rhs.append(target)
    E = sp.vstack([system.E] + rows).tocsr()
    f = np.concatenate([system.f] + rhs)
    lp = LinearProgram(np.zeros(system.num_variables), E, f, lower=system.lower, upper=system.upper)
    try:
        res = solve_lp(lp, tol=tol)
    except LPInfeasible:
        return False, None
    A, _ = system.unpack(res.x)
    err = max(float(np.max(np.abs(A @ plans[a] - plans[swap.get(a, a)]))) for a in range(len(plans)))
    if err > 10 * tol or res.primal_residual > 10 * tol:
        return False, None
    return True, A


# -- empirical play -------------------------------------------------------------------


def empirical_joint(trace, context: GameContext, upto: int | None = None,
                    sampled: bool = False, rng: np.random.Generator | None = None) -> JointDistribution:
    """Average over iterations of the product of per-player plan mixtures.

    With sampled=True each iteration contributes one profile drawn with the
    unbiased top-down sampler instead of the exact product distribution.
    """
    n = len(context.plans)
    T = len(trace.players[0].strategies) if upto is None else upto
    probs = np.zeros(context.shape)
    if sampled and rng is None:
        raise ValueError("sampling requires an rng")
    lookup = [{tuple(np.flatnonzero(p > 0.5)): k for k, p in enumerate(ps)} for ps in context.plans]
    for t in range(T):
        if sampled:
            idx = []
            for i in range(n):
                pl = sample_plan(context.indexes[i], trace.players[i].strategies[t], rng)
                idx.append(lookup[i][tuple(np.flatnonzero(pl > 0.5))])
            probs[tuple(idx)] += 1.0
        else:
            mix = [plan_mixture(context.indexes[i], trace.players[i].strategies[t], context.plans[i])[1]
                   for i in range(n)]
            outer = mix[0]
            for m in mix[1:]:
                outer = np.multiply.outer(outer, m)
            probs += outer
    probs /= T
    probs /= probs.sum()
    return JointDistribution(context, probs)


# -- welfare-maximizing linear-deviation equilibria --------------------------------------


@dataclass
class MaxPayResult:
    welfare: float
    mu: JointDistribution
    gaps: list[float]
    rounds: int


def maxpay_search(game: GameTree, weights: Sequence[float] | None = None, cap: int = 100_000,
                  tol: float = DEFAULT.audit, max_rounds: int = 500,
                  context: GameContext | None = None) -> MaxPayResult:
    """Welfare-maximizing linear-deviation correlated equilibrium by constraint generation.

    Solves max Σ_π μ(π) Σ_i w_i u_i(π) over distributions μ, adding for each
    player the cut "gain of the current best linear deviation ≤ 0" until no
    player can gain more than tol.
    """
    ctx = context or GameContext(game)
    n = game.num_players
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    shape = ctx.shape
    size = prod(shape)
    if size > cap:
        raise ValueError(f"{size} profiles exceed the cap of {cap}")

    # utilities of every profile, per player
    reached = ctx.reached
    letters = "abcdefghijklmnopqrstuvwxy"
    sub = ",".join(f"{letters[i]}z" for i in range(n)) + ",zk->" + letters[:n] + "k"
    util = np.einsum(sub, *reached, ctx.table.chance[:, None] * ctx.table.utilities)
    welfare = (util @ w).ravel()

    # deviation gain of a fixed matrix A for player i, per profile:
    # <g_i(π_−i), A π_i> − <g_i(π_−i), π_i>
    def cut(player: int, A: np.ndarray) -> np.ndarray:
        i = player - 1
        plans = ctx.plans[i]
        moved = plans @ A.T  # row a: A π_a
        # u_i when player plays an arbitrary vector v against π_−i is linear in v;
        # evaluate via the leaf table on the sequence-form image
        table = ctx.table
        lw = table.chance * table.utilities[:, i]
        own_new = moved[:, table.seqs[i]]  # (P_i, L)
        own_old = plans[:, table.seqs[i]]
        ops = []
        subs = []
        for o in range(n):
            if o == i:
                ops.append((own_new - own_old) * lw[None, :])
            else:
                ops.append(reached[o])
            subs.append(letters[o] + "z")
        return np.einsum(",".join(subs) + "->" + letters[:n], *ops).ravel()

    cuts: list[np.ndarray] = []
    rounds = 0
    while True:
        rounds += 1
        A_ub = np.array(cuts) if cuts else None
        b_ub = np.zeros(len(cuts)) if cuts else None
        lp = LinearProgram(welfare, np.ones((1, size)), np.ones(1), A_ub, b_ub,
                           lower=np.zeros(size), upper=np.ones(size), maximize=True)
        res = solve_lp(lp)
        probs = np.clip(res.x, 0.0, None)
        probs /= probs.sum()
        mu = JointDistribution(ctx, probs.reshape(shape))
        gaps, added = [], False
        for p in range(1, n + 1):
            cert = lce_gap(mu, p)
            gaps.append(cert.value)
            if cert.value > tol:
                cuts.append(cut(p, cert.witness))
                added = True
        if not added or rounds >= max_rounds:
            return MaxPayResult(float(welfare @ probs), mu, gaps, rounds)


def regret_curves(trace, player: int, checkpoints: Sequence[int],
                  kinds: Sequence[str] = ("external", "trigger", "linear-swap"),
                  system: LinMapSystem | None = None) -> dict[str, np.ndarray]:
    """Average regrets of one player at each checkpoint t (1-based), sharing one running sum."""
    index, X, L = _trace_arrays(trace, player)
    if "linear-swap" in kinds:
        system = system or compile_self_map_system(index)
    out = {k: np.zeros(len(checkpoints)) for k in kinds}
    G = np.zeros((index.num_sequences, index.num_sequences))
    done = 0
    for r, t in enumerate(checkpoints):
        if not 1 <= t <= len(X) or t < done:
            raise ValueError("checkpoints must be increasing iterations of the trace")
        G += L[done:t].T @ X[done:t]
        done = t
        for k in kinds:
            if k == "external":
                out[k][r] = external_gap(index, -G).value / t
            elif k == "trigger":
                out[k][r] = trigger_gap(index, -G).value / t
            elif k == "linear-swap":
                out[k][r] = linear_swap_gap(system, -G).value / t
            else:
                raise ValueError(f"unknown regret kind {k!r}")
    return out


def matrix_external_regret(trace, player: int, system: LinMapSystem | None = None) -> float:
    """Cumulative external regret of the matrix-level learner, from its own ledger.

    Σ_t <ℓ^t x^tᵀ, A^t> − min_{A in M} <Σ_t ℓ^t x^tᵀ, A>, using the sum the
    learner accumulated rather than the stored strategies.
    """
    rec = trace.players[player - 1]
    system = system or compile_self_map_system(rec.index)
    _, best = maximize_over_system(system, -rec.cumulative)
    return float(rec.matrix_ledger + best)
