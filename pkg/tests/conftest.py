"""Shared fixtures, and a terminal summary echoing the acceptance lines."""

import math

import pytest

from eikolab.solutions import JumpSpec

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def jump_spec():
    return JumpSpec((0.5, math.sqrt(3) / 2), (0.5, -math.sqrt(3) / 2))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
