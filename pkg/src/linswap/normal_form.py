"""Normal-form (reduced-plan) view of a small game."""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .payoffs import leaf_table
from .sequence_form import (
    SequenceIndex,
    derive_sequence_index,
    enumerate_reduced_plans,
    plan_count,
    plan_name,
)
from .efg.model import GameTree

_LETTERS = "abcdefghijklmnopqrstuvw"


class ProfileCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class NormalFormView:
    indexes: tuple[SequenceIndex, ...]
    plans: tuple[np.ndarray, ...]  # per player, (count, |Σ_i|)
    names: tuple[tuple[str, ...], ...]
    utilities: np.ndarray  # shape (*plan counts, n)

    def plan_id(self, player: int, name: str) -> int:
        return self.names[player - 1].index(name)

    def payoff(self, *plan_names: str) -> np.ndarray:
        idx = tuple(self.plan_id(p + 1, nm) for p, nm in enumerate(plan_names))
        return self.utilities[idx]


def normal_form_view(game: GameTree, max_profiles: int = 1_000_000) -> NormalFormView:
    n = game.num_players
    indexes = tuple(derive_sequence_index(game, p) for p in range(1, n + 1))
    counts = [plan_count(ix) for ix in indexes]
    if prod(counts) > max_profiles:
        raise ProfileCapExceeded(f"{prod(counts)} profiles exceed the cap of {max_profiles}")
    plans = tuple(enumerate_reduced_plans(ix, cap=max_profiles) for ix in indexes)
    names = tuple(tuple(plan_name(ix, pl) for pl in ps) for ix, ps in zip(indexes, plans))
    table = leaf_table(game, indexes)
    # reached[i][a, z] = 1 when plan a of player i is consistent with leaf z
    reached = [plans[i][:, table.seqs[i]] for i in range(n)]
    sub = ",".join(f"{_LETTERS[i]}z" for i in range(n)) + ",zk->" + _LETTERS[:n] + "k"
    weighted = table.chance[:, None] * table.utilities
    utilities = np.einsum(sub, *reached, weighted)
    return NormalFormView(indexes, plans, names, utilities)
