"""Leaf-level payoff tables and the multilinear utility functions built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .efg.model import ChanceNode, DecisionNode, GameTree, LeafNode
from .sequence_form import SequenceIndex, derive_sequence_index


@dataclass(frozen=True)
class LeafTable:
    """Per leaf: chance reach, each player's last sequence, and utilities."""

    chance: np.ndarray  # (L,)
    seqs: np.ndarray  # (n, L) int
    utilities: np.ndarray  # (L, n)
    indexes: tuple[SequenceIndex, ...]

    @property
    def num_players(self) -> int:
        return len(self.indexes)

    def reach(self, player: int, strategies) -> np.ndarray:
        """Chance times every other player's reach, per leaf."""
        w = self.chance.copy()
        for o in range(self.num_players):
            if o != player - 1:
                w = w * np.asarray(strategies[o])[self.seqs[o]]
        return w

    def utility_gradient(self, player: int, strategies) -> np.ndarray:
        """g with u_player(x) = <g, x_player> when the others play `strategies`."""
        w = self.reach(player, strategies) * self.utilities[:, player - 1]
        return np.bincount(
            self.seqs[player - 1], weights=w, minlength=self.indexes[player - 1].num_sequences
        )

    def expected_utilities(self, strategies) -> np.ndarray:
        w = self.chance.copy()
        for o in range(self.num_players):
            w = w * np.asarray(strategies[o])[self.seqs[o]]
        return w @ self.utilities

    def loss_vector(self, player: int, strategies) -> np.ndarray:
        """Normalized loss: reach-weighted (u_max - u)/(u_max - u_min) per sequence."""
        u = self.utilities[:, player - 1]
        lo, hi = float(u.min()), float(u.max())
        n = self.indexes[player - 1].num_sequences
        if hi - lo <= 0:
            return np.zeros(n)
        w = self.reach(player, strategies) * (hi - u) / (hi - lo)
        return np.clip(np.bincount(self.seqs[player - 1], weights=w, minlength=n), 0.0, 1.0)


def leaf_table(game: GameTree, indexes=None) -> LeafTable:
    n = game.num_players
    if indexes is None:
        indexes = [derive_sequence_index(game, p) for p in range(1, n + 1)]
    indexes = tuple(indexes)
    seq_id = [
        {(ix.infosets[j], ix.actions[j][k]): ix.first_seq[j] + k
         for j in range(ix.num_infosets) for k in range(len(ix.actions[j]))}
        for ix in indexes
    ]
    chance, seqs, utils = [], [], []
    stack = [(game.root, 1.0, (0,) * n)]
    while stack:
        nid, prob, last = stack.pop()
        node = game[nid]
        if isinstance(node, LeafNode):
            chance.append(prob)
            seqs.append(last)
            utils.append(node.utilities)
        elif isinstance(node, ChanceNode):
            for c, q in zip(node.children, node.probs):
                stack.append((c, prob * q, last))
        else:
            assert isinstance(node, DecisionNode)
            i = node.player - 1
            for c, a in zip(node.children, node.actions):
                new = list(last)
                new[i] = seq_id[i][(node.infoset, a)]
                stack.append((c, prob, tuple(new)))
    return LeafTable(
        chance=np.array(chance),
        seqs=np.array(seqs, dtype=int).T.reshape(n, -1),
        utilities=np.array(utils, dtype=float).reshape(-1, n),
        indexes=indexes,
    )
