import sys
import numpy as np
import pytest

from parentswarm.plant import DI, SI, PhysicalParams, reference_swarm
from parentswarm.sim.config import bundled_config


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture
def roster():
    return reference_swarm()


@pytest.fixture
def hetero_roster():
    return reference_swarm((SI, SI, DI, DI))


@pytest.fixture
def cfg_factory():
    return bundled_config


def random_positions(rng, n, h=0.5, min_gap=1e-3):
    """Distinct positions in [-h, h] with at least min_gap between the extremes."""
    while True:
        p = rng.uniform(-h, h, n)
        if np.ptp(p) > min_gap:
            return p


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
