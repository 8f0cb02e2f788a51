import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mcuq.simulator import SimConfig, simulate  # noqa: E402
from mcuq.tensor import MCSampleSet  # noqa: E402

DATA = Path(__file__).parent / "data"

# Scaled-down analogue of the histopathology test set used by the acceptance criteria.
FIXTURE_CONFIG = SimConfig(
    n_items=5000, n_classes=4, n_passes=50, difficulty_mix=0.3, seed=20240917
)


def random_set(rng, T, N, C, sparse=False) -> MCSampleSet:
    """Random valid sample set; ``sparse`` injects exact zeros and one-hot rows."""
    p = rng.dirichlet(np.full(C, rng.uniform(0.2, 3.0)), size=(T, N))
    if sparse:
        mask = rng.random((T, N, C)) < 0.2
        p = np.where(mask, 0.0, p)
        dead = p.sum(axis=2) == 0
        p[dead, 0] = 1.0
        p /= p.sum(axis=2, keepdims=True)
    return MCSampleSet(p)


@pytest.fixture(scope="session")
def sim_fixture():
    return simulate(FIXTURE_CONFIG)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_file(tmp_path_factory, sim_fixture):
    """The criterion fixture written as a labelled .mcs file."""
    from mcuq.tensor import save_mcs

    path = tmp_path_factory.mktemp("fixture") / "sim.mcs"
    save_mcs(*sim_fixture, path)
    return path


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
