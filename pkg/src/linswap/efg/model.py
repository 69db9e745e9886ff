"""Extensive-form game trees: node records, validation and a small builder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union


class GameFormatError(ValueError):
    """Syntax error in a game description, carrying the line and column."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class InvalidGameError(ValueError):
    """The tree violates a structural requirement (recall, probabilities, shape)."""


@dataclass(frozen=True)
class ChanceNode:
    children: tuple[int, ...]
    probs: tuple[float, ...]


@dataclass(frozen=True)
class DecisionNode:
    player: int
    infoset: str
    children: tuple[int, ...]
    actions: tuple[str, ...]


@dataclass(frozen=True)
class LeafNode:
    utilities: tuple[float, ...]

    @property
    def children(self) -> tuple[int, ...]:
        return ()


Node = Union[ChanceNode, DecisionNode, LeafNode]


@dataclass(frozen=True)
class Infoset:
    player: int
    label: str
    actions: tuple[str, ...]
    nodes: tuple[int, ...]


class GameTree:
    """Immutable n-player game tree rooted at node 0.

    Players are numbered 1..n.  Infosets are keyed by (player, label) and kept
    in depth-first discovery order, which fixes every downstream ordering.
    """

    def __init__(self, num_players: int, nodes: dict[int, Node], root: int = 0):
        if num_players < 1:
            raise InvalidGameError("a game needs at least one player")
        if root not in nodes:
            raise InvalidGameError(f"root node {root} is missing")
        self.num_players = int(num_players)
        self.root = root
        self._nodes = dict(nodes)
        self._order: list[int] = []
        self._infosets: dict[int, dict[str, Infoset]] = {}
        self._validate()

    # -- access -------------------------------------------------------------

    def __getitem__(self, node_id: int) -> Node:
        return self._nodes[node_id]

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def node_ids(self) -> list[int]:
        """Node ids in depth-first preorder."""
        return list(self._order)

    def iter_nodes(self) -> Iterator[tuple[int, Node]]:
        for nid in self._order:
            yield nid, self._nodes[nid]

    def infosets(self, player: int) -> list[Infoset]:
        self._check_player(player)
        return list(self._infosets[player].values())

    def infoset(self, player: int, label: str) -> Infoset:
        self._check_player(player)
        try:
            return self._infosets[player][label]
        except KeyError:
            raise KeyError(f"player {player} has no infoset {label!r}") from None

    @property
    def num_infosets(self) -> int:
        return sum(len(v) for v in self._infosets.values())

    @property
    def num_sequences(self) -> int:
        """Total sequence count over all players, each including the empty sequence."""
        total = 0
        for p in range(1, self.num_players + 1):
            total += 1 + sum(len(j.actions) for j in self._infosets[p].values())
        return total

    @property
    def num_terminals(self) -> int:
        return sum(1 for n in self._nodes.values() if isinstance(n, LeafNode))

    def utility_range(self, player: int) -> tuple[float, float]:
        self._check_player(player)
        us = [n.utilities[player - 1] for n in self._nodes.values() if isinstance(n, LeafNode)]
        return min(us), max(us)

    def _check_player(self, player: int) -> None:
        if not 1 <= player <= self.num_players:
            raise ValueError(f"player must be in 1..{self.num_players}, got {player}")

    def structure(self) -> tuple:
        """Canonical nested description used for structural equality checks."""

        def walk(nid: int):
            node = self._nodes[nid]
            if isinstance(node, LeafNode):
                return ("leaf", node.utilities)
            if isinstance(node, ChanceNode):
                return ("chance", tuple((p, walk(c)) for c, p in zip(node.children, node.probs)))
            return (
                "player",
                node.player,
                node.infoset,
                tuple((a, walk(c)) for c, a in zip(node.children, node.actions)),
            )

        return (self.num_players, walk(self.root))

    # -- validation ---------------------------------------------------------

    def _validate(self) -> None:
        n = self.num_players
        seen: set[int] = set()
        members: dict[tuple[int, str], list[int]] = {}
        actions_of: dict[tuple[int, str], tuple[str, ...]] = {}
        history_of: dict[tuple[int, str], tuple] = {}
        infoset_order: dict[int, list[str]] = {p: [] for p in range(1, n + 1)}

        stack: list[tuple[int, tuple]] = [(self.root, tuple(() for _ in range(n)))]
        while stack:
            nid, hist = stack.pop()
            if nid in seen:
                raise InvalidGameError(f"node {nid} is reachable along more than one path")
            seen.add(nid)
            self._order.append(nid)
            node = self._nodes.get(nid)
            if node is None:
                raise InvalidGameError(f"node {nid} is referenced but never defined")

            if isinstance(node, LeafNode):
                if len(node.utilities) != n:
                    raise InvalidGameError(
                        f"leaf {nid} has {len(node.utilities)} utilities, expected {n}"
                    )
                if not all(math.isfinite(u) for u in node.utilities):
                    raise InvalidGameError(f"leaf {nid} has a non-finite utility")
                continue

            if not node.children:
                raise InvalidGameError(f"node {nid} has no children")

            if isinstance(node, ChanceNode):
                if len(node.probs) != len(node.children):
                    raise InvalidGameError(f"chance node {nid}: probability count mismatch")
                if any(p < 0 or not math.isfinite(p) for p in node.probs):
                    raise InvalidGameError(f"chance node {nid} has a negative probability")
                total = math.fsum(node.probs)
                if abs(total - 1.0) > 1e-12:
                    raise InvalidGameError(
                        f"chance node {nid}: probabilities sum to {total!r}, not 1"
                    )
                for c in reversed(node.children):
                    stack.append((c, hist))
                continue

            if not 1 <= node.player <= n:
                raise InvalidGameError(f"node {nid}: player {node.player} out of range 1..{n}")
            if len(node.actions) != len(node.children):
                raise InvalidGameError(f"node {nid}: action count mismatch")
            if len(set(node.actions)) != len(node.actions):
                raise InvalidGameError(f"node {nid}: duplicate action labels")
            key = (node.player, node.infoset)
            own = hist[node.player - 1]
            if key not in members:
                members[key] = []
                actions_of[key] = node.actions
                history_of[key] = own
                infoset_order[node.player].append(node.infoset)
            else:
                if actions_of[key] != node.actions:
                    raise InvalidGameError(
                        f"infoset {node.infoset!r} of player {node.player}: nodes disagree "
                        f"on actions {actions_of[key]} vs {node.actions}"
                    )
                if history_of[key] != own:
                    raise InvalidGameError(
                        f"perfect recall violated at infoset {node.infoset!r} of player "
                        f"{node.player}"
                    )
            members[key].append(nid)
            for c, a in reversed(list(zip(node.children, node.actions))):
                new = list(hist)
                new[node.player - 1] = own + ((node.infoset, a),)
                stack.append((c, tuple(new)))

        unreachable = set(self._nodes) - seen
        if unreachable:
            raise InvalidGameError(f"nodes not reachable from the root: {sorted(unreachable)[:5]}")

        for p in range(1, n + 1):
            self._infosets[p] = {
                lbl: Infoset(p, lbl, actions_of[(p, lbl)], tuple(members[(p, lbl)]))
                for lbl in infoset_order[p]
            }


@dataclass
class GameBuilder:
    """Bottom-up construction helper; `build` renumbers nodes in preorder from 0."""

    num_players: int
    _nodes: dict[int, Node] = field(default_factory=dict)

    def _add(self, node: Node) -> int:
        nid = len(self._nodes)
        self._nodes[nid] = node
        return nid

    def leaf(self, *utilities: float) -> int:
        return self._add(LeafNode(tuple(float(u) for u in utilities)))

    def chance(self, outcomes: list[tuple[int, float]]) -> int:
        return self._add(
            ChanceNode(tuple(c for c, _ in outcomes), tuple(float(p) for _, p in outcomes))
        )

    def decision(self, player: int, infoset: str, branches: list[tuple[str, int]]) -> int:
        return self._add(
            DecisionNode(
                player, infoset, tuple(c for _, c in branches), tuple(a for a, _ in branches)
            )
        )

    def build(self, root: int) -> GameTree:
        remap: dict[int, int] = {}
        stack = [root]
        while stack:
            nid = stack.pop()
            remap[nid] = len(remap)
            stack.extend(reversed(self._nodes[nid].children))
        nodes: dict[int, Node] = {}
        for old, new in remap.items():
            node = self._nodes[old]
            if isinstance(node, ChanceNode):
                node = ChanceNode(tuple(remap[c] for c in node.children), node.probs)
            elif isinstance(node, DecisionNode):
                node = DecisionNode(
                    node.player, node.infoset, tuple(remap[c] for c in node.children), node.actions
                )
            nodes[new] = node
        return GameTree(self.num_players, nodes, root=0)
