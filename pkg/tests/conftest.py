from __future__ import annotations

import numpy as np
import pytest

from spqcnn.circuit import build_d4_ansatz
from spqcnn.presets import cube_demo_plan, d4_cube


@pytest.fixture(scope="session")
def cube():
    return d4_cube()


@pytest.fixture(scope="session")
def demo_plan():
    return cube_demo_plan()


@pytest.fixture(scope="session")
def ansatz(demo_plan):
    return build_d4_ansatz(demo_plan)


@pytest.fixture(scope="session")
def free_ansatz(ansatz):
    return ansatz.with_fresh_slots()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
