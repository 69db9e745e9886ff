"""Generators for the benchmark and worked-example games."""

from __future__ import annotations

from itertools import permutations

from .model import GameBuilder, GameTree, InvalidGameError

_KUHN_ACTIONS = {"open": ("k", "b"), "respond": ("f", "c")}


def build_kuhn_poker(ranks: int, players: int = 2) -> GameTree:
    """Kuhn poker with `ranks` cards and 2 or 3 players.

    Each player antes 1 and receives one distinct card.  Players act in turn:
    check (k) or bet 1 (b).  After a bet every other player, in seat order,
    folds (f) or calls 1 (c).  Among those who did not fold the highest card
    takes the pot.  Infoset labels are ``<card>|<public history>``.
    """
    if players not in (2, 3):
        raise ValueError("Kuhn poker is defined here for 2 or 3 players")
    if ranks < players:
        raise ValueError(f"cannot deal {players} distinct cards from {ranks} ranks")

    gb = GameBuilder(players)

    def payoff(cards: tuple[int, ...], history: str) -> tuple[float, ...]:
        contrib = [1.0] * players
        folded = [False] * players
        if "b" in history:
            bettor = history.index("b")
            contrib[bettor] += 1
            for r, act in enumerate(history[bettor + 1 :]):
                seat = (bettor + 1 + r) % players
                if act == "c":
                    contrib[seat] += 1
                else:
                    folded[seat] = True
        live = [p for p in range(players) if not folded[p]]
        winner = max(live, key=lambda p: cards[p])
        pot = sum(contrib)
        return tuple((pot - contrib[p]) if p == winner else -contrib[p] for p in range(players))

    def node(cards: tuple[int, ...], history: str) -> int:
        if "b" not in history:
            if len(history) == players:
                return gb.leaf(*payoff(cards, history))
            actor, acts = len(history), _KUHN_ACTIONS["open"]
        else:
            bettor = history.index("b")
            answered = len(history) - bettor - 1
            if answered == players - 1:
                return gb.leaf(*payoff(cards, history))
            actor, acts = (bettor + 1 + answered) % players, _KUHN_ACTIONS["respond"]
        branches = [(a, node(cards, history + a)) for a in acts]
        return gb.decision(actor + 1, f"{cards[actor]}|{history}", branches)

    deals = list(permutations(range(ranks), players))
    prob = 1.0 / len(deals)
    root = gb.chance([(node(d, ""), prob) for d in deals])
    return gb.build(root)


def build_signaling_game() -> GameTree:
    """Two-player signaling game with a uniformly drawn type G or B.

    Player 1 sees the type and sends X or Y; Player 2 sees only the signal and
    picks l or r.
    """
    gb = GameBuilder(2)
    payoffs = {"G": {"l": (4, 10), "r": (0, 6)}, "B": {"l": (6, 0), "r": (0, 6)}}
    branches = []
    for t in ("G", "B"):
        sends = []
        for s in ("X", "Y"):
            resp = [(f"{a}_{s}", gb.leaf(*payoffs[t][a])) for a in ("l", "r")]
            sends.append((f"{s}_{t}", gb.decision(2, s, resp)))
        branches.append((gb.decision(1, t, sends), 0.5))
    return gb.build(gb.chance(branches))


def build_counterexample_game() -> GameTree:
    """Game with a linear-deviation correlated equilibrium that is not a correlated equilibrium.

    Chance picks one of four Player-1 nodes uniformly.  Two belong to infoset
    ``a`` (actions A1, A2) and two to infoset ``b`` (actions B1, B2); each
    action leads to a Player-2 node in infoset ``q`` or ``w``.
    """
    gb = GameBuilder(2)

    def q(l, r):
        return gb.decision(2, "q", [("Ql", gb.leaf(*l)), ("Qr", gb.leaf(*r))])

    def w(l, r):
        return gb.decision(2, "w", [("Wl", gb.leaf(*l)), ("Wr", gb.leaf(*r))])

    a1 = gb.decision(1, "a", [("A1", q((0, 0), (-3, 0))), ("A2", w((0, 2), (0, 0)))])
    a2 = gb.decision(1, "a", [("A1", w((0, 0), (2, 4))), ("A2", q((-2, 0), (0, 0)))])
    b1 = gb.decision(1, "b", [("B1", q((0, 0), (-310, -315))), ("B2", w((0, 0), (0, 0)))])
    b2 = gb.decision(1, "b", [("B1", w((202, 0), (200, -3))), ("B2", q((0, 0), (0, 0)))])
    return gb.build(gb.chance([(a1, 0.25), (a2, 0.25), (b1, 0.25), (b2, 0.25)]))


def build_sat_game(clauses: list[list[int]]) -> GameTree:
    """Game encoding a CNF formula (literals as signed 1-based variable numbers).

    Chance draws a clause uniformly.  Player 2 picks one of its literals at a
    singleton infoset.  Player 1 then assigns TRUE (T) or FALSE (F) to that
    literal's variable without seeing which clause was drawn.  Both players
    receive 1 if the literal is satisfied and 0 otherwise.
    """
    if not clauses:
        raise ValueError("formula needs at least one clause")
    gb = GameBuilder(2)
    branches = []
    for i, clause in enumerate(clauses):
        if not clause:
            raise ValueError(f"clause {i + 1} is empty")
        lits = list(dict.fromkeys(int(lit) for lit in clause))
        if any(lit == 0 for lit in lits):
            raise ValueError("literal 0 is not a variable")
        picks = []
        for lit in lits:
            var = abs(lit)
            win_t = 1.0 if lit > 0 else 0.0
            win_f = 1.0 - win_t
            assign = gb.decision(
                1, f"x{var}", [("T", gb.leaf(win_t, win_t)), ("F", gb.leaf(win_f, win_f))]
            )
            picks.append((f"{'~' if lit < 0 else ''}x{var}", assign))
        branches.append((gb.decision(2, f"c{i + 1}", picks), 1.0 / len(clauses)))
    return gb.build(gb.chance(branches))


def parse_dimacs(text: str) -> list[list[int]]:
    """Read clauses from DIMACS CNF text (header optional)."""
    clauses: list[list[int]] = []
    current: list[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line[0] in "cp%":
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                if not current:
                    raise ValueError("empty clause in CNF input")
                clauses.append(current)
                current = []
            else:
                current.append(lit)
    if current:
        clauses.append(current)
    if not clauses:
        raise ValueError("CNF input has no clauses")
    return clauses


def build_tree_example() -> GameTree:
    """Small two-player game whose Player-1 decision process has infosets A, B, C, D.

    A has actions 1, 2.  After A1 the opponent moves and Player 1 lands in B
    (actions 3, 4) or C (5, 6); after A2 the opponent moves and Player 1 lands
    in D (7, 8, 9) without observing that move.  All payoffs are zero.
    """
    gb = GameBuilder(2)

    def p1(label, acts):
        return gb.decision(1, label, [(a, gb.leaf(0, 0)) for a in acts])

    left = gb.decision(2, "P", [("u", p1("B", "34")), ("v", p1("C", "56"))])
    right = gb.decision(2, "Q", [("s", p1("D", "789")), ("t", p1("D", "789"))])
    return gb.build(gb.decision(1, "A", [("1", left), ("2", right)]))


def build_trivial_game(utilities=(0.0, 0.0)) -> GameTree:
    gb = GameBuilder(len(utilities))
    return gb.build(gb.leaf(*utilities))


__all__ = [
    "InvalidGameError",
    "build_counterexample_game",
    "build_kuhn_poker",
    "build_sat_game",
    "build_signaling_game",
    "build_tree_example",
    "build_trivial_game",
    "parse_dimacs",
]
