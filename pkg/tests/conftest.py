import json
from pathlib import Path

import pytest

HERE = Path(__file__).parent

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def record_acceptance(number, ok, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.fixture(scope="session")
def frozen():
    """Reference values computed by ``tests/oracles/freeze_oracle.py``."""
    return json.loads((HERE / "oracles" / "frozen.json").read_text())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
