import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nudgevisc import spectral as sp


@pytest.fixture
def grid8():
    return sp.grid_create(8)


@pytest.fixture
def grid32():
    return sp.grid_create(32)


@pytest.fixture(scope="session")
def grid64():
    return sp.grid_create(64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_field_pair(grid64, rng):
    u = sp.random_divergence_free(grid64, rng, amplitude=1.0, decay=0.2)
    v = sp.random_divergence_free(grid64, rng, amplitude=1.5, decay=0.2)
    return u, v
