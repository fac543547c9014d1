import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def random_walk(rng, n, scale=0.01, start=100.0):
    return start * np.exp(np.cumsum(rng.normal(0.0, scale, n)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sine_prices():
    t = np.arange(1000)
    return 100.0 * (1 + 0.05 * np.sin(2 * np.pi * t / 40))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
