import numpy as np
import pytest

from gmclab import kernel
from gmclab.domain import build_grid
from gmclab.rng import SeedRecord

EXAMPLE = [[1.0, 0.2], [0.2, 1.0]]


@pytest.fixture
def grid2():
    """Two cells of measure 1/2 on [0, 1]."""
    return build_grid(1, (0.0, 1.0), 2)


@pytest.fixture
def cov2(grid2):
    return kernel.eval_kernel(kernel.Explicit(EXAMPLE), grid2)


@pytest.fixture
def seed():
    return SeedRecord(7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
