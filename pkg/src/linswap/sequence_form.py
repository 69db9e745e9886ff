"""Sequence-form strategy spaces: indices, polytopes, reduced plans and sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import prod

import numpy as np

from .efg.model import DecisionNode, GameTree
from .tolerances import DEFAULT


class PlanCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class SequenceIndex:
    """Sequences, infosets and the parent/children maps of one player.

    Sequence 0 is the empty sequence.  Sequences of an infoset occupy a
    contiguous block, and blocks appear in depth-first discovery order, so a
    parent sequence always precedes its children.
    """

    player: int
    infosets: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    parent: tuple[int, ...]  # per infoset: index of its parent sequence
    first_seq: tuple[int, ...]  # per infoset: index of its first sequence
    seq_infoset: tuple[int, ...] = field(repr=False, default=())  # -1 for the empty sequence
    children: tuple[tuple[int, ...], ...] = field(repr=False, default=())  # per sequence

    @property
    def num_sequences(self) -> int:
        return len(self.seq_infoset)

    @property
    def num_infosets(self) -> int:
        return len(self.infosets)

    def seqs_of(self, j: int) -> range:
        return range(self.first_seq[j], self.first_seq[j] + len(self.actions[j]))

    def infoset_id(self, label: str) -> int:
        try:
            return self.infosets.index(label)
        except ValueError:
            raise KeyError(f"unknown infoset {label!r}") from None

    def seq(self, infoset: str, action: str) -> int:
        j = self.infoset_id(infoset)
        try:
            return self.first_seq[j] + self.actions[j].index(action)
        except ValueError:
            raise KeyError(f"infoset {infoset!r} has no action {action!r}") from None

    def action_of(self, s: int) -> str:
        j = self.seq_infoset[s]
        return self.actions[j][s - self.first_seq[j]]

    def seq_name(self, s: int) -> str:
        if s == 0:
            return "∅"
        return f"{self.infosets[self.seq_infoset[s]]}:{self.action_of(s)}"

    @property
    def terminal(self) -> np.ndarray:
        return np.array([len(c) == 0 for c in self.children], dtype=bool)

    @property
    def root_infosets(self) -> tuple[int, ...]:
        return self.children[0]

    def infosets_below(self, j: int) -> list[int]:
        """Infoset j and every infoset beneath it, in index order."""
        out, stack = [], [j]
        while stack:
            cur = stack.pop()
            out.append(cur)
            for s in self.seqs_of(cur):
                stack.extend(self.children[s])
        return sorted(out)

    def seqs_below_infoset(self, j: int) -> list[int]:
        """Sequences of the subtree rooted at infoset j (the set Σ_{⪰j})."""
        return [s for jj in self.infosets_below(j) for s in self.seqs_of(jj)]

    def seqs_from(self, s: int) -> list[int]:
        """Sequence s together with every sequence that extends it."""
        out = [s]
        for j in self.children[s]:
            out.extend(self.seqs_below_infoset(j))
        return sorted(out)


def derive_sequence_index(game: GameTree, player: int) -> SequenceIndex:
    infos = game.infosets(player)
    label_id = {info.label: k for k, info in enumerate(infos)}
    first_seq, seq_infoset = [], [-1]
    for k, info in enumerate(infos):
        first_seq.append(len(seq_infoset))
        seq_infoset.extend([k] * len(info.actions))

    # walk the tree carrying the player's last sequence on the root path
    parent: list[int | None] = [None] * len(infos)
    stack: list[tuple[int, int]] = [(game.root, 0)]
    while stack:
        nid, last = stack.pop()
        node = game[nid]
        if isinstance(node, DecisionNode) and node.player == player:
            j = label_id[node.infoset]
            if parent[j] is None:
                parent[j] = last
            for pos, c in enumerate(node.children):
                stack.append((c, first_seq[j] + pos))
        else:
            for c in node.children:
                stack.append((c, last))

    children: list[list[int]] = [[] for _ in seq_infoset]
    for k, p in enumerate(parent):
        children[p].append(k)
    return SequenceIndex(
        player=player,
        infosets=tuple(i.label for i in infos),
        actions=tuple(i.actions for i in infos),
        parent=tuple(parent),
        first_seq=tuple(first_seq),
        seq_infoset=tuple(seq_infoset),
        children=tuple(tuple(c) for c in children),
    )


@dataclass(frozen=True)
class StandardPolytope:
    """The set {x : P x = p, x >= 0}, known to lie inside the box [0, gamma]^d."""

    P: np.ndarray
    p: np.ndarray
    gamma: float = 1.0
    labels: tuple[str, ...] = ()
    columns: tuple[int, ...] = ()  # for subtree polytopes: global sequence ids

    @property
    def shape(self) -> tuple[int, int]:
        return self.P.shape

    def residual(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        eq = np.max(np.abs(self.P @ x - self.p), initial=0.0)
        lo = max(0.0, -float(np.min(x, initial=0.0)))
        hi = max(0.0, float(np.max(x, initial=0.0)) - self.gamma)
        return max(float(eq), lo, hi)

    def contains(self, x: np.ndarray, tol: float = DEFAULT.feasibility) -> bool:
        return self.residual(x) <= tol


def sequence_form_polytope(index: SequenceIndex) -> StandardPolytope:
    n, m = index.num_sequences, index.num_infosets
    P = np.zeros((m + 1, n))
    p = np.zeros(m + 1)
    P[0, 0] = 1.0
    p[0] = 1.0
    for j in range(m):
        P[j + 1, list(index.seqs_of(j))] = 1.0
        P[j + 1, index.parent[j]] -= 1.0
    labels = tuple(index.seq_name(s) for s in range(n))
    return StandardPolytope(P, p, 1.0, labels, tuple(range(n)))


def subtree_polytope(index: SequenceIndex, j: int | str) -> StandardPolytope:
    if isinstance(j, str):
        j = index.infoset_id(j)
    if not 0 <= j < index.num_infosets:
        raise KeyError(f"unknown infoset {j}")
    cols = index.seqs_below_infoset(j)
    pos = {s: k for k, s in enumerate(cols)}
    below = index.infosets_below(j)
    P = np.zeros((len(below), len(cols)))
    p = np.zeros(len(below))
    for r, jj in enumerate(below):
        for s in index.seqs_of(jj):
            P[r, pos[s]] = 1.0
        if jj == j:
            p[r] = 1.0
        else:
            P[r, pos[index.parent[jj]]] -= 1.0
    labels = tuple(index.seq_name(s) for s in cols)
    return StandardPolytope(P, p, 1.0, labels, tuple(cols))


# -- reduced plans ------------------------------------------------------------


def _infoset_counts(index: SequenceIndex) -> list[int]:
    counts = [0] * index.num_infosets
    for j in reversed(range(index.num_infosets)):
        counts[j] = sum(
            prod(counts[c] for c in index.children[s]) for s in index.seqs_of(j)
        )
    return counts


def plan_count(index: SequenceIndex) -> int:
    counts = _infoset_counts(index)
    return prod(counts[j] for j in index.root_infosets)


def enumerate_reduced_plans(index: SequenceIndex, cap: int = 10_000) -> np.ndarray:
    """All reduced plans as rows of a 0/1 matrix, earlier infosets varying slowest."""
    total = plan_count(index)
    if total > cap:
        raise PlanCapExceeded(f"{total} plans exceed the cap of {cap}")

    memo: dict[int, list[tuple[int, ...]]] = {}

    def under_seq(s: int) -> list[tuple[int, ...]]:
        parts = [under_infoset(j) for j in index.children[s]]
        return [tuple(x for part in combo for x in part) for combo in product(*parts)]

    def under_infoset(j: int) -> list[tuple[int, ...]]:
        if j not in memo:
            memo[j] = [(s,) + rest for s in index.seqs_of(j) for rest in under_seq(s)]
        return memo[j]

    plans = np.zeros((total, index.num_sequences))
    for r, support in enumerate(under_seq(0)):
        plans[r, 0] = 1.0
        plans[r, list(support)] = 1.0
    return plans


def plan_name(index: SequenceIndex, plan: np.ndarray) -> str:
    return " ".join(index.action_of(s) for s in np.flatnonzero(plan > 0.5) if s != 0)


def first_plan(index: SequenceIndex) -> np.ndarray:
    """The plan choosing the first action at every reached infoset."""
    x = np.zeros(index.num_sequences)
    x[0] = 1.0
    for j in range(index.num_infosets):
        if x[index.parent[j]] > 0:
            x[index.first_seq[j]] = 1.0
    return x


# -- behavior strategies, sampling, decomposition -------------------------------


def behavior_to_sequence(index: SequenceIndex, behavior: np.ndarray) -> np.ndarray:
    """Sequence-form vector from per-sequence conditional probabilities."""
    x = np.zeros(index.num_sequences)
    x[0] = 1.0
    for j in range(index.num_infosets):
        for s in index.seqs_of(j):
            x[s] = x[index.parent[j]] * behavior[s]
    return x


def uniform_strategy(index: SequenceIndex) -> np.ndarray:
    beh = np.ones(index.num_sequences)
    for j in range(index.num_infosets):
        beh[list(index.seqs_of(j))] = 1.0 / len(index.actions[j])
    return behavior_to_sequence(index, beh)


def random_strategy(index: SequenceIndex, rng: np.random.Generator, alpha: float = 1.0) -> np.ndarray:
    """Random sequence-form point from Dirichlet behavior at every infoset."""
    beh = np.ones(index.num_sequences)
    for j in range(index.num_infosets):
        beh[list(index.seqs_of(j))] = rng.dirichlet(np.full(len(index.actions[j]), alpha))
    return behavior_to_sequence(index, beh)


def conditional_behavior(index: SequenceIndex, x: np.ndarray, tiny: float = 1e-15) -> np.ndarray:
    """Per-sequence conditional probabilities x[ja]/x[p_j].

    At zero-reach infosets all mass goes to the first action.
    """
    beh = np.ones(index.num_sequences)
    for j in range(index.num_infosets):
        seqs = list(index.seqs_of(j))
        mass = x[index.parent[j]]
        if mass > tiny:
            vals = np.clip(x[seqs], 0.0, None)
            total = vals.sum()
            beh[seqs] = vals / total if total > 0 else np.eye(len(seqs))[0]
        else:
            beh[seqs] = np.eye(len(seqs))[0]
    return beh


def _require_feasible(index: SequenceIndex, x: np.ndarray, tol: float) -> None:
    res = sequence_form_polytope(index).residual(x)
    if res > tol:
        raise ValueError(f"point is not sequence-form feasible (residual {res:.3g})")


def sample_plan(
    index: SequenceIndex, x: np.ndarray, rng: np.random.Generator, tol: float = DEFAULT.feasibility
) -> np.ndarray:
    """Draw a reduced plan whose expectation is x, sampling top-down."""
    x = np.asarray(x, dtype=float)
    _require_feasible(index, x, tol)
    beh = conditional_behavior(index, x)
    plan = np.zeros(index.num_sequences)
    plan[0] = 1.0
    for j in range(index.num_infosets):
        if plan[index.parent[j]] > 0:
            seqs = list(index.seqs_of(j))
            k = rng.choice(len(seqs), p=beh[seqs])
            plan[seqs[k]] = 1.0
    return plan


def plan_mixture(
    index: SequenceIndex,
    x: np.ndarray,
    plans: np.ndarray | None = None,
    tol: float = DEFAULT.feasibility,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact decomposition of x into reduced plans: returns (plans, probabilities)."""
    x = np.asarray(x, dtype=float)
    _require_feasible(index, x, tol)
    if plans is None:
        plans = enumerate_reduced_plans(index)
    beh = conditional_behavior(index, x)
    probs = np.where(plans > 0.5, beh[None, :], 1.0).prod(axis=1)
    return plans, probs


# -- linear minimization over sequence-form sets --------------------------------


def best_response_values(index: SequenceIndex, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtree minima for a batch of objectives.

    C has shape (r, |Σ|).  Returns (val, choice) of shape (r, |J|): val[:, j]
    is min over the subtree polytope at j of the objective restricted to Σ_{⪰j},
    choice[:, j] the minimizing action position.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    r = C.shape[0]
    val = np.zeros((r, index.num_infosets))
    choice = np.zeros((r, index.num_infosets), dtype=int)
    for j in reversed(range(index.num_infosets)):
        seqs = list(index.seqs_of(j))
        cand = C[:, seqs].copy()
        for k, s in enumerate(seqs):
            for c in index.children[s]:
                cand[:, k] += val[:, c]
        choice[:, j] = np.argmin(cand, axis=1)
        val[:, j] = cand[np.arange(r), choice[:, j]]
    return val, choice


def _expand_choice(index: SequenceIndex, choice_row: np.ndarray, roots) -> np.ndarray:
    x = np.zeros(index.num_sequences)
    stack = list(roots)
    while stack:
        j = stack.pop()
        s = index.first_seq[j] + int(choice_row[j])
        x[s] = 1.0
        stack.extend(index.children[s])
    return x


def minimize_linear(index: SequenceIndex, c: np.ndarray) -> tuple[float, np.ndarray]:
    """min over Q of <c, x>, returning the value and a minimizing plan."""
    c = np.asarray(c, dtype=float)
    val, choice = best_response_values(index, c[None, :])
    roots = index.root_infosets
    plan = _expand_choice(index, choice[0], roots)
    plan[0] = 1.0
    return float(c[0] + val[0, list(roots)].sum()), plan


def minimize_subtree(index: SequenceIndex, j: int, c: np.ndarray) -> tuple[float, np.ndarray]:
    """min over the subtree polytope at j of <c, y>, with y embedded in R^|Σ|."""
    c = np.asarray(c, dtype=float)
    val, choice = best_response_values(index, c[None, :])
    return float(val[0, j]), _expand_choice(index, choice[0], [j])
