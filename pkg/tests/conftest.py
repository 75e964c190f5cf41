import numpy as np
import pytest

from gammaflow.densities import tilted
from gammaflow.entropy import EntropyModel
from gammaflow.grid import build_grid
from gammaflow.potentials import harmonic


@pytest.fixture(scope="session")
def gauss_grid():
    """Standard-Gaussian reference grid at working resolution."""
    return build_grid(harmonic(), 8.0, 512)


@pytest.fixture(scope="session")
def gauss_grid_coarse():
    return build_grid(harmonic(), 8.0, 128)


@pytest.fixture(scope="session")
def gauss_grid_mid():
    return build_grid(harmonic(), 8.0, 256)


@pytest.fixture(scope="session")
def log_model():
    return EntropyModel(1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def tilt_half(gauss_grid):
    return tilted(gauss_grid, 0.5)
