import json
from pathlib import Path

import numpy as np
import pytest

ORACLES = Path(__file__).parent / "oracles"
DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def derived():
    return json.loads((ORACLES / "derived_frozen.json").read_text())


@pytest.fixture(scope="session")
def selector_frozen():
    return json.loads((ORACLES / "selector_frozen.json").read_text())


@pytest.fixture
def f3_fixture():
    return DATA / "f3_noiseless.csv"


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Register the one-line verdict for an acceptance criterion."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line, flush=True)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
