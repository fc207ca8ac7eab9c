import os
import sys
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from condenser_lab import DomainGeometry, KernelSpec

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture
def newton():
    return KernelSpec(2.0, 3)


@pytest.fixture
def unit_ball():
    return DomainGeometry.ball()


@pytest.fixture(autouse=True)
def _quiet_thinness_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="F is ")
        yield


def random_interior(n_points, radius=0.9, seed=0, n=3):
    """Uniform points in the ball of the given radius (test helper)."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n_points, n))
    u /= np.linalg.norm(u, axis=1)[:, None]
    r = radius * rng.uniform(0, 1, n_points) ** (1.0 / n)
    return r[:, None] * u


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
