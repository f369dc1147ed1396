import pytest

from qcubesat.geometry import GroundStation, find_passes
from qcubesat.orbit import circular_state, propagate

ACCEPTANCE = []  # (criterion, passed, detail) filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE, key=lambda r: _order(r[0])):
        terminalreporter.write_line(f"criterion {name}: {'PASS' if ok else 'FAIL'}  {detail}")


def _order(name):
    head = name.split()[0]
    return (int(head), name)


@pytest.fixture(scope="session")
def station():
    return GroundStation()


@pytest.fixture(scope="session")
def week_trajectory():
    return propagate(circular_state(400e3, 51.6), duration=7 * 86400.0, step=10.0)


@pytest.fixture(scope="session")
def week_passes(week_trajectory, station):
    """Passes culminating above 30 deg, day or night."""
    return find_passes(week_trajectory, station, require_eclipse=False)


@pytest.fixture(scope="session")
def experiment_pass(week_passes):
    return week_passes[0]
