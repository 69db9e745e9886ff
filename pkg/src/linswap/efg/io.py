"""Line-oriented text format for game trees.

    players <n>
    node <id> chance <child>:<prob> ...
    node <id> player <p> infoset <label> <child>:<action> ...
    node <id> leaf <u1> ... <un>

Node 0 is the root.  Blank lines and ``#`` comments are ignored.  Numbers may
be written as decimals or fractions such as ``1/3``.
"""

from __future__ import annotations

import hashlib
from fractions import Fraction

from .model import (
    ChanceNode,
    DecisionNode,
    GameFormatError,
    GameTree,
    LeafNode,
    Node,
)


def _tokens(line: str) -> list[tuple[str, int]]:
    out = []
    i = 0
    while i < len(line):
        if line[i].isspace():
            i += 1
            continue
        j = i
        while j < len(line) and not line[j].isspace():
            j += 1
        out.append((line[i:j], i + 1))
        i = j
    return out


def _number(tok: str, lineno: int, col: int) -> float:
    try:
        return float(Fraction(tok))
    except (ValueError, ZeroDivisionError):
        raise GameFormatError(f"expected a number, got {tok!r}", lineno, col) from None


def _int(tok: str, lineno: int, col: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise GameFormatError(f"expected {what}, got {tok!r}", lineno, col) from None


def _pair(tok: str, lineno: int, col: int) -> tuple[int, str]:
    child, sep, rest = tok.partition(":")
    if not sep or not rest:
        raise GameFormatError(f"expected <child>:<value>, got {tok!r}", lineno, col)
    return _int(child, lineno, col, "a child node id"), rest


def parse_game(text: str) -> GameTree:
    """Parse and validate a game description."""
    num_players = None
    nodes: dict[int, Node] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _tokens(line)
        if not toks:
            continue
        head, col = toks[0]
        if head == "players":
            if num_players is not None:
                raise GameFormatError("duplicate players header", lineno, col)
            if len(toks) != 2:
                raise GameFormatError("players header takes one integer", lineno, col)
            num_players = _int(toks[1][0], lineno, toks[1][1], "a player count")
            if num_players < 1:
                raise GameFormatError("player count must be positive", lineno, toks[1][1])
            continue
        if head != "node":
            raise GameFormatError(f"unknown directive {head!r}", lineno, col)
        if num_players is None:
            raise GameFormatError("node line before players header", lineno, col)
        if len(toks) < 3:
            raise GameFormatError("incomplete node line", lineno, col)
        nid = _int(toks[1][0], lineno, toks[1][1], "a node id")
        if nid in nodes:
            raise GameFormatError(f"node {nid} defined twice", lineno, toks[1][1])
        kind, kcol = toks[2]
        rest = toks[3:]
        if kind == "leaf":
            if len(rest) != num_players:
                raise GameFormatError(
                    f"leaf needs {num_players} utilities, got {len(rest)}", lineno, kcol
                )
            nodes[nid] = LeafNode(tuple(_number(t, lineno, c) for t, c in rest))
        elif kind == "chance":
            if not rest:
                raise GameFormatError("chance node without outcomes", lineno, kcol)
            pairs = [_pair(t, lineno, c) for t, c in rest]
            probs = tuple(_number(v, lineno, c) for (_, v), (_, c) in zip(pairs, rest))
            nodes[nid] = ChanceNode(tuple(ch for ch, _ in pairs), probs)
        elif kind == "player":
            if len(rest) < 4 or rest[1][0] != "infoset":
                raise GameFormatError(
                    "expected: player <p> infoset <label> <child>:<action> ...", lineno, kcol
                )
            player = _int(rest[0][0], lineno, rest[0][1], "a player number")
            if not 1 <= player <= num_players:
                raise GameFormatError(f"player {player} out of range", lineno, rest[0][1])
            label = rest[2][0]
            pairs = [_pair(t, lineno, c) for t, c in rest[3:]]
            nodes[nid] = DecisionNode(
                player, label, tuple(ch for ch, _ in pairs), tuple(a for _, a in pairs)
            )
        else:
            raise GameFormatError(f"unknown node kind {kind!r}", lineno, kcol)
    if num_players is None:
        raise GameFormatError("missing players header", 1, 1)
    if 0 not in nodes:
        raise GameFormatError("missing root node 0", 1, 1)
    return GameTree(num_players, nodes, root=0)


def dump_game(game: GameTree) -> str:
    lines = [f"players {game.num_players}"]
    for nid, node in game.iter_nodes():
        if isinstance(node, LeafNode):
            body = "leaf " + " ".join(repr(u) for u in node.utilities)
        elif isinstance(node, ChanceNode):
            body = "chance " + " ".join(f"{c}:{p!r}" for c, p in zip(node.children, node.probs))
        else:
            assert isinstance(node, DecisionNode)
            body = f"player {node.player} infoset {node.infoset} " + " ".join(
                f"{c}:{a}" for c, a in zip(node.children, node.actions)
            )
        lines.append(f"node {nid} {body}")
    return "\n".join(lines) + "\n"


def load_game(path) -> GameTree:
    with open(path, encoding="utf-8") as fh:
        return parse_game(fh.read())


def game_digest(game: GameTree) -> str:
    """SHA-256 of the canonical serialization."""
    return hashlib.sha256(dump_game(game).encode("utf-8")).hexdigest()
