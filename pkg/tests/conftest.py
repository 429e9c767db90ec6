import numpy as np
import pytest

from qlax import build_chain, build_r

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def r13():
    return build_r(1.3)


@pytest.fixture(scope="session")
def chain2(r13):
    return build_chain(r13, 2, 3)


@pytest.fixture(scope="session")
def chain3(r13):
    return build_chain(r13, 3, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
