import numpy as np
import pytest

from core import spectral
from core.analysis import relative_deviation
from core.dynamics import SecondOrderState
from core.errors import GaugeFixError
from core.fields import curvature, random_small_data
from core.gauge import (
    GaugeTransform,
    apply_gauge,
    conjugate_scalar,
    evolution_covariance,
    gauge_fix,
    inverse_gauge,
)
from core.lattice import LieScalarField, LieVectorField
from core.liealg import adjoint_field


@pytest.fixture
def smooth_data(grid16):
    return random_small_data(grid16, 0.9, 0.5, 1e-2, seed=3, max_mode=2)


def test_identity_transform(small_data):
    identity = GaugeTransform.identity(small_data.grid)
    A, dtA, psi = apply_gauge(identity, small_data.a0, small_data.a1, small_data.psi0)
    assert np.allclose(A.data, small_data.a0.data, atol=1e-15)
    assert np.allclose(psi.data, small_data.psi0.data, atol=1e-15)
    assert identity.distance_from_identity() == 0.0


def test_from_lie_is_unitary(grid16, low_mode_lie):
    transform = GaugeTransform.from_lie(low_mode_lie(grid16, 2.0))
    assert transform.unitarity_defect() < 1e-14


def test_roundtrip_and_involution(smooth_data, low_mode_lie):
    transform = GaugeTransform.from_lie(low_mode_lie(smooth_data.grid, 0.05))
    fields = (smooth_data.a0, smooth_data.a1, smooth_data.psi0)
    back = apply_gauge(transform.inverse(), *apply_gauge(transform, *fields))
    for a, b in zip(back, fields):
        assert relative_deviation(a.data, b.data) < 1e-12
    assert np.max(np.abs(transform.inverse().inverse().U - transform.U)) < 1e-15


def test_composition(smooth_data, low_mode_lie):
    grid = smooth_data.grid
    first = GaugeTransform.from_lie(low_mode_lie(grid, 0.05))
    second = GaugeTransform.from_lie(low_mode_lie(grid, 0.05))
    fields = (smooth_data.a0, smooth_data.a1, smooth_data.psi0)
    sequential = apply_gauge(second, *apply_gauge(first, *fields))
    combined = apply_gauge(first.then(second), *fields)
    for a, b in zip(sequential, combined):
        assert relative_deviation(a.data, b.data) < 1e-12
    assert len(first.then(second).factors) == 2


def test_group_connection_matches_lie_connection(grid16, low_mode_lie):
    V = low_mode_lie(grid16, 0.05)
    exact = GaugeTransform.from_lie(V)
    sampled = GaugeTransform.from_group(exact.U, grid16)
    assert relative_deviation(sampled.connection, exact.connection) < 1e-10


def test_from_group_checks_shape(grid):
    with pytest.raises(ValueError):
        GaugeTransform.from_group(np.zeros((2, 2)), grid)


def test_curvature_covariance(smooth_data, low_mode_lie):
    transform = GaugeTransform.from_lie(low_mode_lie(smooth_data.grid, 0.05))
    A, dtA, _ = apply_gauge(transform, smooth_data.a0, smooth_data.a1, smooth_data.psi0)
    F = curvature(smooth_data.a0, smooth_data.a1)
    F_new = curvature(A, dtA)
    for pair in range(3):
        expected = conjugate_scalar(transform, LieScalarField(F.spatial[pair], smooth_data.grid))
        assert relative_deviation(F_new.spatial[pair], expected.data) < 1e-10
    electric = np.stack([adjoint_field(transform.U, F.electric[j]) for j in range(3)])
    assert relative_deviation(F_new.electric, electric) < 1e-12


def test_gauge_fix_removes_curl_free_part(smooth_data):
    result = gauge_fix(smooth_data.a0, smooth_data.a1, smooth_data.psi0)
    assert result.iterations >= 1
    assert result.final_cf_norm <= 1e-10
    _, cf = spectral.hodge_split(result.A)
    assert spectral.sobolev_norm(cf, 0.9) <= 1e-10
    history = [row["cf_norm"] for row in result.history]
    assert history == sorted(history, reverse=True)
    assert set(result.history[0]) == {"iteration", "v_norm", "cf_norm", "u_norm", "smallness"}


def test_gauge_fix_without_curl_free_part(small_data):
    result = gauge_fix(small_data.a0df, small_data.a1, small_data.psi0)
    assert result.iterations == 0
    assert result.transform.distance_from_identity() == 0.0
    assert result.A is small_data.a0df


def test_abelian_gauge_fix_takes_one_iteration(grid16):
    data = random_small_data(grid16, 0.9, 0.5, 1e-3, seed=0, abelian=True)
    result = gauge_fix(data.a0, data.a1, data.psi0)
    assert result.iterations == 1


def test_gauge_fix_budget(smooth_data):
    with pytest.raises(GaugeFixError) as excinfo:
        gauge_fix(smooth_data.a0, smooth_data.a1, smooth_data.psi0, tol=1e-14, max_iter=1)
    assert len(excinfo.value.history) == 1


def test_gauge_fix_rejects_bad_tolerance(small_data):
    with pytest.raises(ValueError):
        gauge_fix(small_data.a0, small_data.a1, small_data.psi0, tol=0.0)


def test_evolution_covariance(grid, low_mode_lie):
    data = random_small_data(grid, 0.9, 0.5, 1e-3, seed=0, max_mode=1)
    transform = GaugeTransform.from_lie(low_mode_lie(grid, 2e-3))
    result = evolution_covariance(SecondOrderState(data.a0, data.a1, data.psi0), transform, 0.1, 0.02)
    assert result["deviation"] < 1e-8
    assert result["deviation"] == pytest.approx(result["A_deviation"] + result["psi_deviation"])
