import numpy as np
import pytest

from sparsetomo.imaging import PixelGrid, simulate_stack
from sparsetomo.mixture import pyramid_fixture

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def pyramid():
    return pyramid_fixture()


@pytest.fixture(scope="session")
def small_stack(pyramid):
    """A quick 24-profile pyramid stack on a 32-pixel grid."""
    grid = PixelGrid(32, 2.2)
    return simulate_stack(pyramid, grid, 24, 1e-4, 7)
