"""Shared fixtures for the test suite."""

import numpy as np
import pytest

import iproj.kernels as kernels
from iproj.measure import GridSpec, uniform_measure


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)


@pytest.fixture
def unit_grid():
    """16-node midpoint grid on [0, 1]."""
    return GridSpec(shape=(16,), domain=((0.0, 1.0),))


@pytest.fixture
def unit_uniform(unit_grid):
    return uniform_measure(unit_grid)


@pytest.fixture
def backend_guard():
    """Restore the kernel backend after a test that rebinds it."""
    previous = kernels.backend_name()
    yield
    kernels.use_backend("py" if previous == "python" else "cy")
