import numpy as np
import pytest

from stagepp.continuation import continue_equilibrium
from stagepp.equilibria import find, interior_equilibria
from stagepp.model import table1, table2


def e4_of(p):
    return find(interior_equilibria(p)[1], "E4")


@pytest.fixture(scope="session")
def p1():
    return table1()


@pytest.fixture(scope="session")
def p2():
    return table2()


@pytest.fixture(scope="session")
def branch_t1_b(p1):
    return continue_equilibrium(p1, "b", seed=e4_of(p1))


@pytest.fixture(scope="session")
def branch_t2_c(p2):
    return continue_equilibrium(p2, "c", seed=e4_of(p2))


@pytest.fixture(scope="session")
def branch_t2_a2(p2):
    return continue_equilibrium(p2, "a2", seed=e4_of(p2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
