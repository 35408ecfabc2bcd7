import numpy as np
import pytest

from qoct.propagator import imaginary_time_eigenstates
from qoct.qsystem import AsymmetricDoubleWell, GridSystem, SpatialGrid
from qoct.twolevel import DOUBLE_WELL_PAIR

# acceptance verdicts, printed once at the end of the session
ACCEPTANCE = []


def record(criterion, name, ok, detail=""):
    ACCEPTANCE.append((criterion, name, bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit, name, ok, detail in sorted(ACCEPTANCE, key=lambda r: (int(str(r[0]).split(".")[0]), str(r[0]))):
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {crit:>4} {name}: {detail}")


@pytest.fixture(scope="session")
def dw_grid():
    return SpatialGrid(15.0, 256)


@pytest.fixture(scope="session")
def dw_states(dw_grid):
    E, S = imaginary_time_eigenstates(AsymmetricDoubleWell(), dw_grid, 6)
    return np.asarray(E), S


@pytest.fixture(scope="session")
def dw_system(dw_grid):
    return GridSystem(dw_grid)


@pytest.fixture(scope="session")
def two_level():
    return DOUBLE_WELL_PAIR


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
