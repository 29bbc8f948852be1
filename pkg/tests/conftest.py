import numpy as np
import pytest

from arhgof.grid import Grid
from arhgof.simulate import SimulationConfig, exp_kernel, exp_operator

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid():
    return Grid.uniform(71)


@pytest.fixture(scope="session")
def eps_kernel(grid):
    return exp_kernel(grid, 0.10, 0.3)


@pytest.fixture(scope="session")
def h1(grid):
    return exp_operator(grid, 0.8)


@pytest.fixture(scope="session")
def dgp():
    return SimulationConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
