import os

import numpy as np
import pytest

from phaseflow.core import PhaseSpaceGrid, SpatialGrid, SystemParams

ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Store one pass/fail line for the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def box_grid():
    """Periodic [-1, 1) with 64 x-nodes and 128 momenta."""
    return PhaseSpaceGrid(SpatialGrid(-1.0, 1.0, 64, "periodic"), 128, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tmp_out(tmp_path):
    d = tmp_path / "out"
    os.makedirs(d)
    return d
