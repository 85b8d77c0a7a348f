import pytest

from sepctrl.scenarios import builtin_decoupled_toy, builtin_discrete_toy, builtin_lqg
from sepctrl.solver import dp_solve, to_history_strategy


@pytest.fixture(scope="session")
def toy():
    return builtin_discrete_toy()


@pytest.fixture(scope="session")
def decoupled():
    return builtin_decoupled_toy()


@pytest.fixture(scope="session")
def lqg():
    return builtin_lqg()


@pytest.fixture(scope="session")
def toy_solution(toy):
    vf, strategy = dp_solve(toy)
    return vf, strategy, to_history_strategy(toy, strategy)
