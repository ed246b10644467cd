from pathlib import Path

import pytest

from ehl.config import load_config
from ehl.geometry import make_domain, profile_for
from ehl.verify import Experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def experiment(name):
    return Experiment(load_config(CONFIGS / f"{name}.ini"))


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS


@pytest.fixture(scope="session")
def d1_point():
    return experiment("d1-pointmass")


@pytest.fixture(scope="session")
def d1_dipole():
    return experiment("d1-dipole")


@pytest.fixture(scope="session")
def d3_shell():
    return experiment("d3-shell")


@pytest.fixture(scope="session")
def d2_shell():
    return experiment("d2-shell")


@pytest.fixture(scope="session")
def d1_full():
    return experiment("d1-fullspace")


@pytest.fixture(scope="session")
def halfline():
    return profile_for(make_domain("half_line", 1, x0=0.0))


@pytest.fixture(scope="session")
def ball2():
    return profile_for(make_domain("ball_complement", 2, R=1.0))


@pytest.fixture(scope="session")
def ball3():
    return profile_for(make_domain("ball_complement", 3, R=1.0))


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
