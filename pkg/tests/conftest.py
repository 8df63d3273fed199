import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from semmhd.mesh import build_box_mesh
from semmhd.operators import Discretization

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


def make_disc(counts=(2, 2, 2), N=3, L=2.0, delta=0.0, layers=1, ha=None):
    return Discretization.from_mesh(build_box_mesh(counts, L=L, delta=delta, N=N,
                                                   wall_element_layers=layers, ha=ha))


@pytest.fixture(scope="session")
def disc_small():
    return make_disc()


@pytest.fixture(scope="session")
def disc_wall():
    return make_disc((2, 2, 2), N=3, delta=0.25, layers=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    """verdict(criterion, ok, detail) prints one PASS/FAIL line and asserts."""

    def report(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
