import math

import numpy as np
import pytest

from core import spectral
from core.analysis import (
    CONE,
    MINUS,
    NO_WINDOW,
    PLUS,
    ZERO,
    SpaceTimeTrace,
    XsbSpec,
    angular_bilinear,
    angular_bilinear_coeffs,
    qij_bracket,
    qij_null_form,
    regularity_report,
    relative_deviation,
    riesz_null_symbol_scan,
    spectrum,
    spinorial_bound_scan,
    verify_current_null_split,
    verify_identity_50,
    verify_identity_N3,
    window_factor,
    xsb_norm,
)
from core.dynamics import evolve, split_from_fields
from core.errors import CostGuardError
from core.fields import random_small_data
from core.lattice import LieVectorField, SpinorField
from core.spectral import DiracProjector
from tests.conftest import plane_wave


def travelling_trace(grid, modes, n_time, M=8, dt=0.25, window=NO_WINDOW):
    """exp(i(tau t + xi.x)) with tau = 2 pi n_time / (M dt)"""
    tau = 2.0 * math.pi * n_time / (M * dt)
    wave = plane_wave(grid, modes)
    slices = np.stack([np.exp(1j * tau * n * dt) * wave for n in range(M)])
    return SpaceTimeTrace(slices, dt, grid, window)


def random_df_field(rng, grid):
    coeffs = spectral.leray_coeffs(
        spectral.band_limit(spectral.forward(rng.standard_normal((3, 3) + grid.shape)), grid), grid
    )
    return LieVectorField(spectral.inverse(coeffs).real, grid)


def test_trace_validation(grid):
    with pytest.raises(ValueError):
        SpaceTimeTrace(np.zeros((7,) + grid.shape), 0.1, grid)
    with pytest.raises(ValueError):
        SpaceTimeTrace(np.zeros((8,) + grid.shape), 0.0, grid)
    with pytest.raises(ValueError):
        SpaceTimeTrace(np.zeros((8,) + grid.shape), 0.1, grid, window="boxcar")
    with pytest.raises(ValueError):
        XsbSpec(1.0, 0.5, flavor="x")


def test_xsb_norm_of_zero_trace(grid):
    trace = SpaceTimeTrace(np.zeros((8,) + grid.shape), 0.1, grid)
    assert xsb_norm(trace, XsbSpec(1.0, 0.6)) == 0.0


def test_xsb_norm_of_travelling_wave(grid):
    trace = travelling_trace(grid, (1, 0, 0), n_time=1)
    tau = 2.0 * math.pi / trace.T
    base = math.sqrt(trace.T * grid.volume)
    bracket = math.sqrt(2.0)
    expected = {
        PLUS: base * bracket * (1.0 + (tau - 1.0) ** 2) ** 0.25,
        MINUS: base * bracket * (1.0 + (tau + 1.0) ** 2) ** 0.25,
        CONE: base * bracket * (1.0 + (tau - 1.0) ** 2) ** 0.25,
        ZERO: base * bracket * (1.0 + tau**2) ** 0.25,
    }
    for flavor, value in expected.items():
        assert xsb_norm(trace, XsbSpec(1.0, 0.5, flavor)) == pytest.approx(value, rel=1e-12)


def test_b_zero_is_flavour_independent(grid, rng):
    trace = SpaceTimeTrace(rng.standard_normal((8, 3) + grid.shape), 0.1, grid)
    norms = [xsb_norm(trace, XsbSpec(0.5, 0.0, flavor)) for flavor in (PLUS, MINUS, CONE, ZERO)]
    assert max(norms) == pytest.approx(min(norms), rel=1e-13)


def test_spectrum_of_travelling_wave(grid):
    trace = travelling_trace(grid, (1, 0, 0), n_time=1)
    tau, coeffs = spectrum(trace, windowed=False)
    assert tau[1] == pytest.approx(2.0 * math.pi / trace.T)
    assert coeffs[1, 1, 0, 0] == pytest.approx(1.0, abs=1e-13)
    coeffs[1, 1, 0, 0] = 0.0
    assert np.max(np.abs(coeffs)) < 1e-13


def test_windowed_spectrum_scales_by_window_mean(grid):
    trace = travelling_trace(grid, (0, 1, 0), n_time=0, window="hann")
    _, coeffs = spectrum(trace)
    assert coeffs[0, 0, 1, 0].real == pytest.approx(np.mean(np.hanning(trace.M)), rel=1e-12)


def test_window_factor(grid):
    trace = SpaceTimeTrace(np.zeros((16,) + grid.shape), 0.05, grid, NO_WINDOW)
    assert window_factor(trace) == pytest.approx(math.sqrt(trace.T))
    hann = SpaceTimeTrace(np.zeros((16,) + grid.shape), 0.05, grid)
    assert window_factor(hann) < window_factor(trace)


def test_qij_vanishes_for_equal_arguments(grid, rng):
    u = spectral.inverse(spectral.band_limit(spectral.forward(rng.standard_normal(grid.shape)), grid)).real
    assert np.max(np.abs(qij_null_form(u, u, 0, 1, grid))) < 1e-12


def test_qij_is_antisymmetric(grid, rng):
    u = rng.standard_normal(grid.shape)
    v = rng.standard_normal(grid.shape)
    assert np.allclose(qij_null_form(u, v, 0, 2, grid), -qij_null_form(u, v, 2, 0, grid), atol=1e-12)


def test_qij_on_plane_waves(grid):
    u = plane_wave(grid, (1, 0, 0))
    v = plane_wave(grid, (0, 1, 0))
    # (i xi1_x)(i xi2_y) - (i xi1_y)(i xi2_x) = -1
    expected = -plane_wave(grid, (1, 1, 0))
    assert np.allclose(qij_null_form(u, v, 0, 1, grid), expected, atol=1e-13)


def test_qij_bracket_requires_lie_values(grid):
    with pytest.raises(ValueError):
        qij_bracket(np.zeros((2,) + grid.shape), np.zeros((2,) + grid.shape), 0, 1, grid)


def test_bracket_identities(grid, rng):
    for _ in range(3):
        Adf = random_df_field(rng, grid)
        assert verify_identity_50(Adf) < 1e-10
        assert verify_identity_N3(Adf) < 1e-10


def test_bracket_identities_on_abelian_field(grid, rng):
    Adf = random_df_field(rng, grid)
    Adf.data[:, :2] = 0.0
    assert verify_identity_50(Adf) == 0.0


def test_relative_deviation():
    assert relative_deviation(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_deviation(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == pytest.approx(0.5)


def test_angular_weights_of_single_modes(grid):
    u = travelling_trace(grid, (1, 0, 0), n_time=0)
    v = travelling_trace(grid, (0, 1, 0), n_time=0)
    coeffs = angular_bilinear_coeffs(u, v, 1, 1)
    assert coeffs[0, 1, 1, 0] == pytest.approx(0.5 * math.pi, abs=1e-13)
    coeffs[0, 1, 1, 0] = 0.0
    assert np.max(np.abs(coeffs)) < 1e-13
    opposite = angular_bilinear_coeffs(u, u, 1, -1)
    assert opposite[0, 2, 0, 0] == pytest.approx(math.pi, abs=1e-13)


def test_angular_bilinear_symmetry(grid):
    u_values = np.stack([plane_wave(grid, (1, 0, 0)) + 0.5 * plane_wave(grid, (0, 1, 1))] * 8)
    v_values = np.stack([plane_wave(grid, (0, -1, 0)) + 0.25 * plane_wave(grid, (1, 1, 0))] * 8)
    u = SpaceTimeTrace(u_values, 0.1, grid, NO_WINDOW)
    v = SpaceTimeTrace(v_values, 0.1, grid, NO_WINDOW)
    forward_order = angular_bilinear_coeffs(u, v, 1, -1)
    swapped = angular_bilinear_coeffs(v, u, -1, 1)
    assert np.allclose(forward_order, swapped, atol=1e-13)
    product = angular_bilinear(u, v, 1, -1)
    assert product.snapshots.shape == u.snapshots.shape


def test_angular_bilinear_cost_guard(grid16):
    trace = SpaceTimeTrace(np.zeros((65,) + grid16.shape), 0.1, grid16, NO_WINDOW)
    with pytest.raises(CostGuardError):
        angular_bilinear_coeffs(trace, trace, 1, 1)


def test_spinorial_bound_scan():
    result = spinorial_bound_scan(samples=2000, seed=1)
    assert result["max_ratio"] <= 1.0 + 1e-6
    assert result["r_squared"] >= 0.999
    assert result["slope_near_zero"] == pytest.approx(0.5, abs=0.01)


def test_spinorial_ratio_at_antipodes():
    xi = np.array([0.3, -1.2, 0.5])
    # Pi(xi) Pi(-(-xi)) = Pi(xi) has norm 1 over an angle of pi
    product = DiracProjector(1).matrix(xi) @ DiracProjector(-1).matrix(-xi)
    assert np.linalg.norm(product, ord=2) / math.pi == pytest.approx(1.0 / math.pi, rel=1e-12)


def test_riesz_null_symbol_scan():
    assert riesz_null_symbol_scan(samples=2000, seed=2)["max_ratio"] <= 1.0 + 1e-12


def test_current_null_split(grid, rng):
    def spinor():
        values = rng.standard_normal((2, 4) + grid.shape) + 1j * rng.standard_normal((2, 4) + grid.shape)
        return SpinorField(spectral.inverse(spectral.band_limit(spectral.forward(values), grid)), grid)

    assert verify_current_null_split(spinor(), spinor()) < 1e-12


def test_regularity_report(small_data):
    initial = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    _, snapshots = evolve(initial, 0.08, 0.01, snapshot_stride=1)
    rows = regularity_report(snapshots, 0.9, 0.5)
    assert [row["field"] for row in rows] == ["Acf", "Adf_plus", "Adf_minus", "psi_plus", "psi_minus"]
    assert rows[0]["s"] == pytest.approx(1.15)
    assert rows[1]["b"] == pytest.approx(0.76)
    assert all(row["norm"] > 0 and math.isfinite(row["norm"]) for row in rows)
    with pytest.raises(ValueError):
        regularity_report(snapshots[:7], 0.9, 0.5)
    with pytest.raises(ValueError):
        regularity_report(snapshots[:4] + snapshots[5:] + snapshots[-1:], 0.9, 0.5)


def test_regularity_report_of_vacuum(grid):
    data = random_small_data(grid, 0.9, 0.5, 0.0, seed=0)
    initial = split_from_fields(data.a0, data.a1, data.psi0)
    _, snapshots = evolve(initial, 0.08, 0.01, snapshot_stride=1)
    assert all(row["norm"] == 0.0 for row in regularity_report(snapshots, 0.9, 0.5))
