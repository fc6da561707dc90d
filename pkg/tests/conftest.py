from pathlib import Path

import pytest

from quic3.smt import SmtLibSolver

BENCH = Path(__file__).resolve().parents[1] / "src" / "quic3" / "benchmarks"


@pytest.fixture(scope="session")
def solver():
    s = SmtLibSolver()
    yield s
    s.close()


@pytest.fixture(scope="session")
def bench():
    return BENCH


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
