import numpy as np
import pytest

from core import spectral
from core.fields import random_small_data
from core.lattice import Grid, LieScalarField


@pytest.fixture
def grid():
    return Grid(8)


@pytest.fixture
def grid16():
    return Grid(16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_data(grid):
    """Gauss-consistent data of size 1e-3 on the N = 8 grid"""
    return random_small_data(grid, 0.9, 0.5, 1e-3, seed=0)


@pytest.fixture
def low_mode_lie(rng):
    """Factory for smooth su(2) scalars with |m_i| <= max_mode and a given sup norm"""

    def make(grid, amplitude, max_mode=1):
        coeffs = spectral.band_limit(spectral.forward(rng.standard_normal((3,) + grid.shape)), grid)
        outside = np.abs(grid.mode_index) > max_mode
        outside = outside[:, None, None] | outside[None, :, None] | outside[None, None, :]
        coeffs[..., outside] = 0.0
        values = spectral.inverse(coeffs).real
        return LieScalarField(values * (amplitude / np.max(np.abs(values))), grid)

    return make


def plane_wave(grid, modes):
    """exp(i m.x) on the grid for integer wavenumbers m"""
    phase = sum(m * (2.0 * np.pi / grid.L) * x for m, x in zip(modes, grid.points))
    return np.exp(1j * phase)
