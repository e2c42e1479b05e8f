import math

import numpy as np
import pytest
from hypothesis import settings

from rpfcones.metrics import FunctionalFamily
from rpfcones.function_space import DiscreteFunction, interval_grid
from rpfcones.systems import doubling_stage, full_shift_stage, gauss_stage, geometric_tower_spec, nonlinear_three_branch_stage, tower_build
from rpfcones.transfer import TransferStage

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

LN2 = math.log(2.0)


def gauss_density(x):
    return 1.0 / (LN2 * (1.0 + np.asarray(x)))


@pytest.fixture(scope="session")
def gauss():
    return gauss_stage(nodes=64, N=10_000)


@pytest.fixture(scope="session")
def gauss_small():
    return gauss_stage(nodes=64, N=1000)


@pytest.fixture(scope="session")
def gauss_op(gauss):
    return TransferStage(gauss)


@pytest.fixture(scope="session")
def doubling():
    return doubling_stage(nodes=32)


@pytest.fixture(scope="session")
def three_branch():
    return nonlinear_three_branch_stage(nodes=64)


@pytest.fixture(scope="session")
def bernoulli():
    return full_shift_stage([0.5, 0.5], depth=3)


@pytest.fixture(scope="session")
def tower():
    return tower_build(geometric_tower_spec())


@pytest.fixture(scope="session")
def quadrant():
    """The cone R^2_+ cut out by the two coordinate functionals."""
    g = interval_grid([0.25, 0.75])
    return FunctionalFamily.point_evaluations(g)


def vec(S, values):
    return DiscreteFunction(S.grid, np.asarray(values))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
