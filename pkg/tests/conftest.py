"""Shared fixtures: the long simulations are run once per session."""
import pytest

from securedoc.acceptance import RunCache

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def runs():
    return RunCache()


@pytest.fixture(scope="session")
def acceptance_lines():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
