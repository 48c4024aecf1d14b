import os
import sys
from pathlib import Path

from hypothesis import HealthCheck, settings
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ssmgd_lab.chains import build_two_state
from ssmgd_lab.oracle import build_random_quadratic

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


@pytest.fixture
def two_state():
    return build_two_state(0.25, 0.25)


@pytest.fixture
def quad_family():
    return build_random_quadratic(d=5, n_states=2, kappa_target=0.5, eta_target=2.0, noise_scale=1.0, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
