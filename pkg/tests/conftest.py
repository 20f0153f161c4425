import json
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def frozen():
    """High-precision reference values produced by ``tests/oracles/direct_eval.py``."""
    return {k: float(v) for k, v in json.loads((DATA / "frozen_values.json").read_text()).items()}


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
