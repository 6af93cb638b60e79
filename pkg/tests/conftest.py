import numpy as np
import pytest

from nematic.grid import make_grid
from nematic.verify import Workbench

_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def bench():
    """Shared small_vortex trajectories (Picard and weak, dt and dt/2)."""
    return Workbench()


@pytest.fixture
def report():
    def add(number: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def g2p():
    return make_grid(2, 16, 1.0, "periodic")


@pytest.fixture
def g2d():
    return make_grid(2, 16, 1.0, "dirichlet")


@pytest.fixture
def g3p():
    return make_grid(3, 8, 1.0, "periodic")
