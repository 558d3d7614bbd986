import numpy as np
import pytest

from core import spectral
from core.dynamics import SecondOrderState, gauss_residual
from core.errors import AdmissibilityError
from core.fields import (
    ABELIAN_GENERATOR,
    charge_density_coeffs,
    check_admissible,
    curvature,
    gauss_project,
    random_small_data,
)
from core.lattice import Grid, LieVectorField, SpinorField


@pytest.mark.parametrize("s, l", [(0.9, 0.5), (1.0, 0.5), (1.2, 0.8), (0.8, 0.3)])
def test_admissible_exponents(s, l):
    check_admissible(s, l)


@pytest.mark.parametrize("s, l", [(0.7, 0.5), (0.9, 0.2), (1.0, 1.2), (2.0, 0.5), (0.8, 0.6)])
def test_inadmissible_exponents(s, l):
    with pytest.raises(AdmissibilityError):
        check_admissible(s, l)


def test_curvature_of_abelian_wave(grid):
    x = grid.points[0]
    A = LieVectorField.zeros(grid)
    A.data[1, ABELIAN_GENERATOR] = np.sin(x)
    F = curvature(A, A)
    assert np.allclose(F.component(0, 1)[ABELIAN_GENERATOR], np.cos(x), atol=1e-13)
    assert np.allclose(F.component(1, 0), -F.component(0, 1))
    assert np.allclose(F.component(0, 2), 0.0, atol=1e-13)
    assert np.allclose(F.electric, -A.data)


def test_curvature_of_constant_potential_is_bracket(grid):
    A = LieVectorField.zeros(grid)
    A.data[0, 0] = 1.0
    A.data[1, 1] = 1.0
    F = curvature(A, LieVectorField.zeros(grid))
    # [T_1, T_2] = T_3
    assert np.allclose(F.component(0, 1)[2], 1.0, atol=1e-13)
    assert np.allclose(F.component(0, 1)[:2], 0.0, atol=1e-13)


def test_random_data_is_deterministic(grid):
    first = random_small_data(grid, 0.9, 0.5, 1e-3, seed=7)
    second = random_small_data(grid, 0.9, 0.5, 1e-3, seed=7)
    other = random_small_data(grid, 0.9, 0.5, 1e-3, seed=8)
    for a, b in zip(first, second):
        assert np.array_equal(a.data, b.data)
    assert not np.array_equal(first.a0df.data, other.a0df.data)


def test_random_data_size_and_structure(small_data):
    assert small_data.norm_sum(0.9, 0.5) == pytest.approx(1e-3, rel=1e-10)
    assert spectral.divergence(small_data.a0df).max_abs() < 1e-12 * small_data.a0df.max_abs() + 1e-18
    assert spectral.curl(small_data.a0cf).max_abs() < 1e-12 * small_data.a0cf.max_abs() + 1e-18
    assert np.isrealobj(small_data.a0.data)


def test_random_data_satisfies_gauss_law(small_data):
    residual = gauss_residual(SecondOrderState(small_data.a0, small_data.a1, small_data.psi0))
    assert residual.scale > 0
    assert residual.relative < 1e-10


@pytest.mark.parametrize("N", [8, 16])
@pytest.mark.parametrize("eps", [1e-4, 1e-3, 1e-2])
@pytest.mark.parametrize("abelian", [False, True])
def test_small_data_meets_gauss_law_at_every_size(N, eps, abelian):
    data = random_small_data(Grid(N), 0.9, 0.5, eps, seed=1, abelian=abelian)
    assert data.norm_sum(0.9, 0.5) == pytest.approx(eps, rel=1e-10)
    residual = gauss_residual(SecondOrderState(data.a0, data.a1, data.psi0))
    assert residual.relative < 1e-10


def test_random_spinor_is_colour_neutral(small_data):
    grid = small_data.grid
    rho = charge_density_coeffs(spectral.forward(small_data.psi0.data), grid)
    assert np.max(np.abs(rho[:, 0, 0, 0])) < 1e-12 * np.max(np.abs(rho))


def test_abelian_data(grid):
    data = random_small_data(grid, 0.9, 0.5, 1e-3, seed=0, abelian=True)
    others = [a for a in range(3) if a != ABELIAN_GENERATOR]
    for field in (data.a0df, data.a0cf, data.a1):
        assert np.all(field.data[:, others] == 0.0)
    assert data.psi0.max_abs() == 0.0


def test_zero_data(grid):
    data = random_small_data(grid, 0.9, 0.5, 0.0, seed=0)
    assert all(field.max_abs() == 0.0 for field in data)


def test_random_data_rejects_bad_input(grid):
    with pytest.raises(AdmissibilityError):
        random_small_data(grid, 0.7, 0.5, 1e-3, seed=0)
    with pytest.raises(ValueError):
        random_small_data(grid, 0.9, 0.5, -1.0, seed=0)


def test_low_mode_data(grid16):
    data = random_small_data(grid16, 0.9, 0.5, 1e-2, seed=0, max_mode=2)
    coeffs = spectral.forward(data.a0.data)
    outside = np.abs(grid16.mode_index) > 2
    assert np.max(np.abs(coeffs[..., outside, :, :])) < 1e-15


def test_gauss_project_leaves_consistent_data_alone(small_data):
    corrected = gauss_project(small_data.a0, small_data.a1, small_data.psi0)
    assert np.allclose(corrected.data, small_data.a1.data, atol=1e-9 * small_data.a1.max_abs())


def test_gauss_project_with_vacuum_spinor(grid, rng):
    values = rng.standard_normal((3, 3) + grid.shape)
    a1 = LieVectorField(spectral.inverse(spectral.band_limit(spectral.forward(values), grid)).real * 1e-3, grid)
    corrected = gauss_project(LieVectorField.zeros(grid), a1, SpinorField.zeros(grid))
    # With A = 0 and psi = 0 the correction removes the curl-free part
    df, _ = spectral.hodge_split(a1)
    assert np.allclose(corrected.data, df.data, atol=1e-15)
