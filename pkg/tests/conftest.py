import numpy as np
import pytest

from fkmc import Box, MCParams, Mesh, ProcessSpec

# Lines recorded by the acceptance tests, echoed in the terminal summary so they
# show up even when pytest captures stdout.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def killed_bm():
    return ProcessSpec.brownian(1, domain=Box([0.0], [1.0]))


@pytest.fixture
def mesh11():
    return Mesh.interval(0.0, 1.0, 11)


@pytest.fixture
def small_mc():
    return MCParams(n_paths=2000, dt=1e-3, workers=1)


def interior(x):
    return (x > 0) & (x < 1)
