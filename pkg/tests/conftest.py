import time
from importlib import resources

import pytest

from noirflow.scenario import load_scenario
from noirflow.sweep import run_sweep

FIXTURES = resources.files("noirflow") / "fixtures"

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def fixture_path(name):
    return FIXTURES / f"{name}.scenario"


@pytest.fixture(scope="session")
def fig3():
    return load_scenario(fixture_path("fig3"))


@pytest.fixture(scope="session")
def fig3_run(fig3):
    """The full 20-road sweep, run once per session; returns (state, seconds)."""
    start = time.perf_counter()
    state = run_sweep(fig3.graph, fig3.routing, fig3.cost, fig3.x0, fig3.m, **fig3.solver.kwargs())
    return state, time.perf_counter() - start


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
