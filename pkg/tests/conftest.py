import os

import pytest

from hjm_longterm.config import load_config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIOS = os.path.join(ROOT, "scenarios")

_verdicts = []


def scenario_path(name: str) -> str:
    return os.path.join(SCENARIOS, f"{name}.ini")


@pytest.fixture
def load_scenario():
    def load(name):
        return load_config(scenario_path(name))

    return load


@pytest.fixture
def verdict(request):
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str = ""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _verdicts.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_verdicts, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
