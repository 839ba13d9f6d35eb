import math

import numpy as np
import pytest

from zkstrip.domain import build_grid

ACCEPTANCE_LINES = []


@pytest.fixture
def strip():
    """B = pi, L = 10 with nodes on x = 5 and y = pi/2."""
    return build_grid(math.pi, 10.0, 99, 31)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
