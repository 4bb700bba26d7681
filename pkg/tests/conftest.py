import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from varsob.grid import Grid

settings.register_profile("varsob", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("varsob")


@pytest.fixture
def line8():
    return Grid.interval(8)


@pytest.fixture
def line64():
    return Grid.interval(64)


@pytest.fixture
def square16():
    return Grid.box((16, 16))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
