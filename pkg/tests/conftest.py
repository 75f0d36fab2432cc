import os

import pytest

from fadealloc.constellation import builtin
from fadealloc.curve import InputModel, get_curve

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session", autouse=True)
def _curve_cache(tmp_path_factory):
    """Keep built curves in a per-session directory unless one is configured."""
    if "FADEALLOC_CACHE" not in os.environ:
        os.environ["FADEALLOC_CACHE"] = str(tmp_path_factory.mktemp("curve-cache"))
    yield


@pytest.fixture(scope="session")
def qam16():
    return builtin("qam16")


@pytest.fixture(scope="session")
def cm16(qam16):
    return get_curve(InputModel.cm(qam16))


@pytest.fixture(scope="session")
def bicm16(qam16):
    return get_curve(InputModel.bicm(qam16))


@pytest.fixture(scope="session")
def gauss_curve():
    return get_curve(InputModel.gaussian())


@pytest.fixture
def report():
    """Record one summary line; all lines are printed at the end of the run."""
    def add(criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
