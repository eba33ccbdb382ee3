import pytest

from flipkljn.noise import build_environment
from flipkljn.protocol import ThresholdSet

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def env():
    return build_environment(1.38e-23, 300.0, 1e6, 1000.0, 10.0)


@pytest.fixture
def thresholds():
    return ThresholdSet(1.4, 4.0, 1.4, 4.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
