import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ci", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_symmetric(rng, n, density=0.3, weighted=True):
    """Dense symmetric matrix in [0, 1] with zero diagonal."""
    mask = np.triu(rng.random((n, n)) < density, 1)
    vals = rng.random((n, n)) if weighted else np.ones((n, n))
    a = np.where(mask, vals, 0.0)
    return a + a.T


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
