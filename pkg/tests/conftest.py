import numpy as np
import pytest

from willmore.halfsphere import default_grid


@pytest.fixture(scope="session")
def grid():
    """Default resolution quoted by all tolerances: 32 x 64."""
    return default_grid(32, 64)


@pytest.fixture(scope="session")
def coarse_grid():
    return default_grid(16, 32)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
