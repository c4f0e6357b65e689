"""Expensive results shared by several test modules, computed once per session."""

import pytest

from drymep.annealer import solve
from drymep.oracle import GridSpec, exhaustive_solve
from drymep.process import DryingModel, ProcessConfig


class _Lazy(dict):
    def __init__(self, make):
        super().__init__()
        self._make = make

    def __missing__(self, key):
        value = self[key] = self._make(key)
        return value


@pytest.fixture(scope="session")
def oracle_reports():
    """Oracle report for the default configuration, keyed by M."""
    return _Lazy(lambda M: exhaustive_solve(DryingModel(ProcessConfig(M=M)), GridSpec()))


@pytest.fixture(scope="session")
def default_solves():
    """Annealer result for the default configuration, keyed by M."""
    return _Lazy(lambda M: solve(ProcessConfig(M=M)))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``record(number, title, passed, detail)`` adds one line to the acceptance summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, title, passed, detail=""):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}"
        if detail:
            line += f" | {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
