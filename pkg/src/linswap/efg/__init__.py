"""Extensive-form game model, text format and game generators."""

from .games import (
    build_counterexample_game,
    build_kuhn_poker,
    build_sat_game,
    build_signaling_game,
    build_tree_example,
    build_trivial_game,
    parse_dimacs,
)
from .io import dump_game, game_digest, load_game, parse_game
from .model import (
    ChanceNode,
    DecisionNode,
    GameBuilder,
    GameFormatError,
    GameTree,
    Infoset,
    InvalidGameError,
    LeafNode,
)
