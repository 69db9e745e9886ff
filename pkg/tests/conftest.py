import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from linswap.efg import (
    GameBuilder,
    build_counterexample_game,
    build_kuhn_poker,
    build_signaling_game,
    build_tree_example,
)
from linswap.sequence_form import derive_sequence_index

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def single_infoset_game(actions="abcd"):
    gb = GameBuilder(2)
    return gb.build(gb.decision(1, "j", [(a, gb.leaf(0.0, 0.0)) for a in actions]))


@pytest.fixture(scope="session")
def tree_game():
    return build_tree_example()


@pytest.fixture(scope="session")
def signaling():
    return build_signaling_game()


@pytest.fixture(scope="session")
def counterexample():
    return build_counterexample_game()


@pytest.fixture(scope="session")
def kuhn3():
    return build_kuhn_poker(3, 2)


@pytest.fixture(scope="session")
def tree_index(tree_game):
    return derive_sequence_index(tree_game, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
