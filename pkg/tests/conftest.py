import numpy as np
import pytest
from hypothesis import settings

from rsmdp.lottery import LotterySpec, build

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def lottery():
    return build(LotterySpec(7.0))


@pytest.fixture(scope="session")
def smoothed():
    return build(LotterySpec(7.0, eps=0.01))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one PASS/FAIL line per acceptance criterion, shown even when output is captured
CRITERIA: list[tuple[str, bool, float, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, secs, note in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name:<40} {secs:7.2f}s  {note}")
