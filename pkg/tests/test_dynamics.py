import math

import numpy as np
import pytest

from core import spectral
from core.dynamics import (
    DynamicsOptions,
    SecondOrderState,
    SplitSystem,
    convention_experiment,
    conserved_diagnostics,
    cross_validate,
    current,
    energy,
    evolve,
    evolve_second_order,
    gauss_residual,
    reconstruct,
    rhs_second_order,
    rhs_split,
    richardson_order,
    split_from_fields,
    step,
    step_count,
    step_second_order,
)
from core.errors import BlowUpError, PicardError
from core.fields import random_small_data
from core.liealg import PAPER, PHYSICS


def energy_scale(fields):
    return (
        spectral.l2_norm(fields.dtA) ** 2
        + spectral.sobolev_norm(fields.A, 1.0) ** 2
        + spectral.sobolev_norm(fields.psi, 0.5) ** 2
    )


def test_step_count():
    assert step_count(1.0, 0.25) == (4, 0.25)
    steps, used = step_count(1.0, 0.3)
    assert steps == 3 and used == pytest.approx(1.0 / 3.0)
    assert step_count(0.0, 0.1) == (0, 0.1)
    steps, used = step_count(1.0, -0.5)
    assert steps == 2 and used == -0.5
    with pytest.raises(ValueError):
        step_count(1.0, 0.0)
    with pytest.raises(ValueError):
        step_count(-1.0, 0.1)


def test_options_validation():
    with pytest.raises(ValueError):
        DynamicsOptions(convention="other")
    with pytest.raises(ValueError):
        DynamicsOptions(picard_tol=0.0)
    with pytest.raises(ValueError):
        DynamicsOptions(picard_max=0)


def test_current_is_convention_independent(small_data):
    physics = current(small_data.psi0, PHYSICS)
    paper = current(small_data.psi0, PAPER)
    assert np.allclose(physics.J0.data, paper.J0.data, atol=1e-20)
    assert np.allclose(physics.spatial.data, paper.spatial.data, atol=1e-20)


def test_split_roundtrip(small_data):
    state = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    fields = reconstruct(state)
    scale = small_data.a1.max_abs()
    assert np.allclose(fields.A.data, small_data.a0.data, atol=1e-12 * small_data.a0.max_abs())
    assert np.allclose(fields.dtA.data, small_data.a1.data, atol=1e-9 * scale)
    assert np.allclose(fields.psi.data, small_data.psi0.data, atol=1e-12 * small_data.psi0.max_abs())


def test_split_rhs_matches_second_order_rhs(small_data):
    state = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    rates = rhs_split(state)
    assert rates["picard_iterations"] >= 1
    w_scale = state.dtAcf.max_abs()
    assert np.allclose(rates["Acf"].data, state.dtAcf.data, atol=1e-10 * w_scale)

    fields = reconstruct(state)
    dA, _, dpsi = rhs_second_order(fields)
    dA_split = (rates["Adf_plus"] + rates["Adf_minus"]).data.real + rates["Acf"].data
    dpsi_split = (rates["psi_plus"] + rates["psi_minus"]).data
    assert np.allclose(dA_split, dA.data, atol=1e-10 * fields.dtA.max_abs())
    assert np.allclose(dpsi_split, dpsi.data, atol=1e-10 * dpsi.max_abs())


def test_second_order_step_tracks_split_step(small_data):
    initial = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    split_next = reconstruct(step(initial, 0.01))
    second_next = step_second_order(reconstruct(initial), 0.01)
    assert second_next.t == pytest.approx(0.01)
    for name in ("A", "dtA", "psi"):
        ours = getattr(second_next, name).data
        theirs = getattr(split_next, name).data
        assert np.max(np.abs(ours - theirs)) < 1e-7 * np.max(np.abs(theirs))
    with pytest.raises(ValueError):
        step_second_order(reconstruct(initial), 0.0)


def test_vacuum_stays_vacuum(grid):
    data = random_small_data(grid, 0.9, 0.5, 0.0, seed=0)
    state = split_from_fields(data.a0, data.a1, data.psi0)
    final, _ = evolve(state, 0.1, 0.02)
    assert all(field.max_abs() == 0.0 for field in final.fields())
    diagnostics = conserved_diagnostics(final)
    assert diagnostics["energy"] == 0.0
    assert diagnostics["charge"] == 0.0
    assert diagnostics["t"] == pytest.approx(0.1)


def test_free_flow_is_exact_on_phases(small_data):
    grid = small_data.grid
    options = DynamicsOptions(couplings=False)
    initial = split_from_fields(small_data.a0, small_data.a1, small_data.psi0, options=options)
    final, _ = evolve(initial, 0.5, 0.1, options)
    for name, rate in (("Adf_plus", 1j * grid.kbracket), ("psi_minus", -1j * grid.kabs)):
        start = spectral.forward(getattr(initial, name).data)
        end = spectral.forward(getattr(final, name).data)
        assert np.max(np.abs(end - start * np.exp(0.5 * rate))) < 1e-12 * np.max(np.abs(start))
    assert np.allclose(final.Acf.data, initial.Acf.data, atol=1e-15)
    assert final.dtAcf.max_abs() == 0.0


def test_snapshots(small_data):
    initial = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    final, snapshots = evolve(initial, 0.05, 0.01, snapshot_stride=2)
    assert [round(s.t, 12) for s in snapshots] == [0.0, 0.02, 0.04, 0.05]
    assert snapshots[-1].t == final.t
    _, only_final = evolve(initial, 0.05, 0.01)
    assert len(only_final) == 1


def test_progress_callback(small_data):
    calls = []
    initial = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    evolve(initial, 0.03, 0.01, callback=lambda n, steps, t: calls.append((n, steps)))
    assert calls == [(1, 3), (2, 3), (3, 3)]


def test_gauss_law_is_propagated(small_data):
    initial = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    final, _ = evolve(initial, 0.1, 0.01)
    assert gauss_residual(final).relative < 1e-9


def test_energy_and_charge_are_conserved(small_data):
    initial = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    final, _ = evolve(initial, 0.1, 0.01)
    start, end = reconstruct(initial), reconstruct(final)
    assert abs(energy(end) - energy(start)) < 1e-6 * energy_scale(start)
    charge = spectral.l2_norm(start.psi) ** 2
    assert spectral.l2_norm(end.psi) ** 2 == pytest.approx(charge, rel=1e-8)


def test_second_order_energy(small_data):
    initial = SecondOrderState(small_data.a0, small_data.a1, small_data.psi0)
    final, _ = evolve_second_order(initial, 0.1, 0.01)
    assert abs(energy(final) - energy(initial)) < 1e-6 * energy_scale(initial)


def test_formulations_agree(small_data):
    initial = SecondOrderState(small_data.a0, small_data.a1, small_data.psi0)
    result = cross_validate(initial, 0.1, 0.01, snapshot_stride=5)
    assert len(result["rows"]) == 3
    assert result["max_deviation"] < 1e-7


def test_time_reversal(small_data):
    initial = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    forward_state = step(initial, 0.01)
    back = step(forward_state, -0.01)
    for a, b in zip(back.fields(), initial.fields()):
        assert np.max(np.abs(a.data - b.data)) < 1e-8 * max(b.max_abs(), 1e-300) + 1e-20


def test_richardson_order(grid):
    data = random_small_data(grid, 0.9, 0.5, 0.05, seed=0)
    initial = split_from_fields(data.a0, data.a1, data.psi0)
    result = richardson_order(initial, 0.4, 0.025)
    assert result["order"] > 3.5


def test_blow_up_is_reported(small_data):
    options = DynamicsOptions(couplings=False)
    state = split_from_fields(small_data.a0, small_data.a1, small_data.psi0, options=options)
    state.Acf.data[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(BlowUpError) as excinfo:
        evolve(state, 0.05, 0.01, options)
    assert excinfo.value.step == 1


def test_picard_budget(small_data):
    state = split_from_fields(small_data.a0, small_data.a1, small_data.psi0)
    system = SplitSystem(small_data.grid, DynamicsOptions(picard_max=1))
    u, _ = system.from_state(state)
    with pytest.raises(PicardError):
        system.velocity(u)


def test_convention_experiment(grid):
    result = convention_experiment(1e-3, grid, 0.05, dt=0.01, refinement=2)
    assert {row["convention"] for row in result["rows"]} == {PHYSICS, PAPER}
    assert PHYSICS in result["consistent"]
    physics = next(row for row in result["rows"] if row["convention"] == PHYSICS)
    assert physics["charge_drift"] < 1e-12
    assert math.isfinite(physics["floor"])
