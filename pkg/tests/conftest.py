import numpy as np
import pytest

from rqcurve import simcodec
from rqcurve.core import GRID, RateQualityCurve


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return simcodec.synth_dataset(60, 20, seed=11)


def random_curve(rng, grid=GRID):
    """Decreasing-ish curve with positive bitrates."""
    v = 100 - np.cumsum(rng.uniform(0, 1, grid.count))
    b = 8000 * np.exp(-0.1 * np.arange(grid.count)) + rng.uniform(1, 50, grid.count)
    return RateQualityCurve(v, b, grid)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = []


def record_acceptance(number, ok, detail):
    line = f"criterion {number:>2}: {ok if isinstance(ok, str) else ('PASS' if ok else 'FAIL')}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
