import numpy as np
import pytest

from dimcert.certifier import build_moment_basis
from dimcert.scenario import make_qrac_scenario

# Lines collected by the acceptance suite and printed after the run.
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def s4():
    return make_qrac_scenario(4)


@pytest.fixture(scope="session")
def s2():
    return make_qrac_scenario(2)


@pytest.fixture(scope="session")
def basis4(s4):
    return build_moment_basis(s4, seed=1)


@pytest.fixture(scope="session")
def basis2(s2):
    return build_moment_basis(s2, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
