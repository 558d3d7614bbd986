import numpy as np
import pytest

from core import spectral
from core.lattice import Grid, LieScalarField, LieVectorField, SpinorField
from core.errors import GridMismatchError
from tests.conftest import plane_wave


def random_vector(rng, grid):
    coeffs = spectral.band_limit(spectral.forward(rng.standard_normal((3, 3) + grid.shape)), grid)
    return LieVectorField(spectral.inverse(coeffs).real, grid)


def random_spinor(rng, grid):
    values = rng.standard_normal((2, 4) + grid.shape) + 1j * rng.standard_normal((2, 4) + grid.shape)
    return SpinorField(spectral.inverse(spectral.band_limit(spectral.forward(values), grid)), grid)


def test_grid_requires_power_of_two():
    with pytest.raises(ValueError):
        Grid(12)
    with pytest.raises(ValueError):
        Grid(4)
    grid = Grid(8)
    assert grid.max_mode == 3
    # Nyquist plane carries frequency 0
    assert np.all(grid.k[0][grid.nyquist_1d] == 0.0)


def test_field_shapes_are_checked(grid):
    with pytest.raises(GridMismatchError):
        LieVectorField(np.zeros((3,) + grid.shape), grid)
    with pytest.raises(GridMismatchError):
        LieScalarField.zeros(grid) + LieScalarField.zeros(Grid(16))


def test_partial_derivative_of_sine(grid):
    x = grid.points[0]
    derivative = spectral.apply_multiplier(spectral.MultiplierSpec(spectral.PARTIAL, j=0), np.sin(2 * x), grid)
    assert np.allclose(derivative, 2 * np.cos(2 * x), atol=1e-13)
    assert np.isrealobj(derivative)


def test_abs_grad_inverse_pair(grid, rng):
    field = rng.standard_normal(grid.shape)
    coeffs = spectral.band_limit(spectral.forward(field), grid)
    coeffs[0, 0, 0] = 0.0
    field = spectral.inverse(coeffs).real
    up = spectral.apply_multiplier(spectral.MultiplierSpec(spectral.ABS_GRAD, alpha=1.0), field, grid)
    back = spectral.apply_multiplier(spectral.MultiplierSpec(spectral.ABS_GRAD, alpha=-1.0), up, grid)
    assert np.allclose(back, field, atol=1e-13)


def test_riesz_annihilates_constants(grid):
    riesz = spectral.apply_multiplier(spectral.MultiplierSpec(spectral.RIESZ, j=1), np.ones(grid.shape), grid)
    assert np.max(np.abs(riesz)) < 1e-14


def test_multiplier_spec_validation():
    with pytest.raises(ValueError):
        spectral.MultiplierSpec("laplace")
    with pytest.raises(ValueError):
        spectral.MultiplierSpec(spectral.RIESZ, j=3)
    with pytest.raises(ValueError):
        spectral.MultiplierSpec(spectral.MODIFIED_RIESZ, sign=0)


def test_corrupted_multiplier_is_scoped(grid):
    spec = spectral.MultiplierSpec(spectral.MODIFIED_RIESZ, j=0, sign=1)
    clean = spec.symbol(grid)
    with spectral.corrupted_multiplier(spectral.MODIFIED_RIESZ):
        assert np.allclose(spec.symbol(grid), clean * (1.0 + 1e-6))
    assert np.array_equal(spec.symbol(grid), clean)


def test_hodge_split(grid, rng):
    A = random_vector(rng, grid)
    df, cf = spectral.hodge_split(A)
    assert np.allclose(df.data + cf.data, A.data, atol=1e-13)
    assert spectral.divergence(df).max_abs() < 1e-12
    assert spectral.curl(cf).max_abs() < 1e-12


def test_hodge_split_of_gradient(grid, rng):
    phi = LieScalarField(spectral.inverse(spectral.band_limit(spectral.forward(rng.standard_normal((3,) + grid.shape)), grid)).real, grid)
    grad = spectral.gradient(phi)
    df, cf = spectral.hodge_split(grad)
    assert df.max_abs() < 1e-12
    assert np.allclose(cf.data, grad.data, atol=1e-12)


def test_dirac_projections(grid, rng):
    psi = random_spinor(rng, grid)
    plus = spectral.dirac_project(1, psi)
    minus = spectral.dirac_project(-1, psi)
    assert np.allclose((plus + minus).data, psi.data, atol=1e-13)
    assert spectral.dirac_project(1, minus).max_abs() < 1e-13
    assert np.allclose(spectral.dirac_project(1, plus).data, plus.data, atol=1e-13)


def test_projector_at_zero_frequency():
    assert np.array_equal(spectral.DiracProjector(1).matrix(np.zeros(3)), np.eye(4))
    assert np.array_equal(spectral.DiracProjector(-1).matrix(np.zeros(3)), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        spectral.DiracProjector(0)


def test_parseval(grid, rng):
    A = random_vector(rng, grid)
    assert spectral.l2_norm(A) == pytest.approx(spectral.physical_l2_norm(A), rel=1e-12)


def test_sobolev_norm_of_single_mode(grid):
    wave = plane_wave(grid, (1, 1, 0))
    expected = np.sqrt(grid.volume) * 3.0 ** (0.5 * 0.9)
    assert spectral.sobolev_norm(wave, 0.9, grid) == pytest.approx(expected, rel=1e-12)


def test_dealiased_product_of_modes(grid):
    low = plane_wave(grid, (1, 0, 0))
    product = spectral.dealiased_product(low, low, grid)
    assert np.allclose(product, plane_wave(grid, (2, 0, 0)), atol=1e-13)
    # Mode 6 lies outside the band: dropped, not aliased onto mode -2
    high = plane_wave(grid, (3, 0, 0))
    assert np.max(np.abs(spectral.dealiased_product(high, high, grid))) < 1e-13


def test_dealiased_product_with_one(grid, rng):
    A = random_vector(rng, grid)
    product = spectral.dealiased_product(A, np.ones(grid.shape), grid)
    assert np.allclose(product, A.data, atol=1e-13)
    assert np.isrealobj(product)


def test_dealiased_triple_matches_pairs(grid):
    wave = plane_wave(grid, (1, 0, 1))
    triple = spectral.dealiased_triple(wave, wave, np.conj(wave), grid)
    assert np.allclose(triple, wave, atol=1e-13)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("YMD_THREADS", "3")
    assert spectral.worker_count() == 3
    monkeypatch.setenv("YMD_THREADS", "many")
    assert spectral.worker_count() >= 1
    monkeypatch.delenv("YMD_THREADS")
    assert spectral.worker_count() >= 1
