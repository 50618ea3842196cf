import numpy as np
import pytest

from collapse_lab import GridSpec, gaussian_packet, superpose

# lines collected by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def grid1():
    return GridSpec(1, 256, 40.0)


@pytest.fixture
def cat1(grid1):
    left = gaussian_packet(grid1, [-5.0], [1.0])
    right = gaussian_packet(grid1, [5.0], [1.0])
    return superpose([(np.sqrt(0.5), left), (np.sqrt(0.5), right)])
