import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chiral_bands import SumCutoff, helix_lattice, polarization_frame, prism_lattice  # noqa: E402

A = 0.175
R0 = 0.05


@pytest.fixture(scope="session")
def helix():
    return helix_lattice(3, R0, A)


@pytest.fixture(scope="session")
def frame_z():
    return polarization_frame([0.0, 0.0, 1.0])


@pytest.fixture(scope="session")
def prism():
    return prism_lattice(R0, A)


@pytest.fixture(scope="session")
def small_cutoff():
    return SumCutoff(max_cells=200)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
