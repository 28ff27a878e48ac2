from importlib import resources

import pytest

from hjpath.hjanalysis import closure_loop, constraint_set
from hjpath.legendre import build_constraints
from hjpath.sysparse import parse_system


def shipped_text(name: str) -> str:
    return resources.files("hjpath.systems").joinpath(f"{name}.hjs").read_text()


def load(name: str):
    return parse_system(shipped_text(name))


@pytest.fixture(scope="session")
def first_class():
    return load("first_class")


@pytest.fixture(scope="session")
def second_class():
    return load("second_class")


@pytest.fixture(scope="session")
def radial():
    return load("radial")


@pytest.fixture(scope="session")
def second_class_report(second_class):
    return closure_loop(constraint_set(build_constraints(second_class)))


# -- acceptance summary: one line per criterion --------------------------------------------

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, title = mark.args
    passed = call.excinfo is None
    prev = _criteria.get(n, (title, True))
    _criteria[n] = (title, prev[1] and passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")
