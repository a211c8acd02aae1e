import numpy as np
import pytest

from pinet.data import SyntheticSpec, assign_roles, gen_synthetic

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synthetic():
    spec = SyntheticSpec(d=4, signal=2, seed=7)
    data = assign_roles(gen_synthetic(spec, 600), (300, 150, 150), seed=3)
    return spec, data


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
