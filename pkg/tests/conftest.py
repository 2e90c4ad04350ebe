import numpy as np
import pytest

from skm_lab import catalog


@pytest.fixture(scope="session")
def sgd1d():
    return catalog.sgd1d()


@pytest.fixture(scope="session")
def translation():
    return catalog.translation()


@pytest.fixture(scope="session")
def negation():
    return catalog.negation()


@pytest.fixture(scope="session")
def fixed_line():
    return catalog.fixed_line2d()


@pytest.fixture(scope="session")
def stos_instance():
    return catalog.constrained_least_squares()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
