import numpy as np
import pytest

from qoip.mesh import build_structured_unit_square


@pytest.fixture(scope="session")
def mesh1():
    return build_structured_unit_square(1)


@pytest.fixture(scope="session")
def mesh2():
    return build_structured_unit_square(2)


@pytest.fixture(scope="session")
def mesh4():
    return build_structured_unit_square(4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
