import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from catmix.data import CategoricalDataset, SimulationDesign, simulate  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_sim():
    design = SimulationDesign(n_obs=200, n_vars=80, n_relevant=80, cluster_sizes=(50, 50, 60, 40), seed=7)
    return simulate(design)


@pytest.fixture(scope="session")
def small_varsel_sim():
    design = SimulationDesign(n_obs=200, n_vars=30, n_relevant=20, cluster_sizes=(50, 50, 60, 40), seed=8)
    return simulate(design)


@pytest.fixture
def two_blocks():
    """Two perfectly separated binary blocks of five rows each."""
    values = np.vstack([np.tile([0, 0, 0, 1, 1, 1], (5, 1)), np.tile([1, 1, 1, 0, 0, 0], (5, 1))])
    return CategoricalDataset(values, np.full(6, 2))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
