"""Shared fixtures: the acceptance tests report one line per criterion."""

import pytest

CRITERION_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion_report():
    return CRITERION_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
