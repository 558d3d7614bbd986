"""
Property suite behind ``ymd verify``

Every check returns report rows (name, value, threshold, passed). Most
thresholds are upper bounds on a measured deviation; rows built with
``lower=True`` require the value to reach the threshold instead.
"""

import logging
import math
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from core import spectral
from core.analysis import (
    NO_WINDOW,
    SpaceTimeTrace,
    angular_bilinear_coeffs,
    qij_null_form,
    relative_deviation,
    riesz_null_symbol_scan,
    spinorial_bound_scan,
    verify_current_null_split,
    verify_identity_50,
    verify_identity_N3,
)
from core.dynamics import (
    DynamicsOptions,
    SecondOrderState,
    cross_validate,
    evolve,
    gauss_residual,
    reconstruct,
    richardson_order,
    split_from_fields,
    step_count,
)
from core.fields import curvature, random_small_data
from core.gauge import GaugeTransform, apply_gauge, evolution_covariance, gauge_fix
from core.lattice import Grid, LieScalarField, LieVectorField, SpinorField
from core.liealg import ALPHA, PHYSICS, adjoint_field

Row = Dict[str, Any]


@dataclass(frozen=True)
class VerifySettings:
    """
    Problem sizes of the suite

    The full suite uses the reference sizes (N = 16 for fields and runs);
    ``quick`` drops to N = 8 and shorter runs.
    """

    quick: bool = False
    seed: int = 0
    convention: str = PHYSICS
    s: float = 0.9
    l: float = 0.5

    @property
    def field_N(self) -> int:
        return 8 if self.quick else 16

    @property
    def evolution_N(self) -> int:
        return 8 if self.quick else 16

    identity_N = 8
    gauge_N = 16
    scan_samples = 10000

    @property
    def identity_fields(self) -> int:
        return 5 if self.quick else 20

    @property
    def gauss_run(self):
        """(T, dt) of the constraint propagation run"""
        return (0.2, 1e-2) if self.quick else (1.0, 1e-3)

    @property
    def cross_run(self):
        return (0.2, 2e-2) if self.quick else (0.5, 1e-2)

    @property
    def richardson_run(self):
        return (0.4, 0.025) if self.quick else (0.2, 0.01)

    @property
    def options(self) -> DynamicsOptions:
        return DynamicsOptions(convention=self.convention)


def _row(name: str, value: float, threshold: float, lower: bool = False, passed: Optional[bool] = None) -> Row:
    value = float(value)
    if passed is None:
        if not math.isfinite(value):
            passed = False
        else:
            passed = value >= threshold if lower else value <= threshold
    return {"name": name, "value": value, "threshold": float(threshold), "passed": bool(passed)}


def _rng(settings: VerifySettings, offset: int = 0) -> np.random.Generator:
    return np.random.default_rng(settings.seed + offset)


def _random_coeffs(rng: np.random.Generator, shape, grid: Grid, complex_valued: bool = False) -> np.ndarray:
    values = rng.standard_normal(tuple(shape) + grid.shape)
    if complex_valued:
        values = values + 1j * rng.standard_normal(tuple(shape) + grid.shape)
    return spectral.band_limit(spectral.forward(values), grid)


def _zero_mean_spinor(rng: np.random.Generator, grid: Grid) -> np.ndarray:
    coeffs = _random_coeffs(rng, (2, 4), grid, complex_valued=True)
    coeffs[..., 0, 0, 0] = 0.0
    return coeffs


def _apply_alpha(j: int, coeffs: np.ndarray) -> np.ndarray:
    return np.einsum("st,ct...->cs...", ALPHA[j], coeffs)


def _low_mode_lie(rng: np.random.Generator, grid: Grid, amplitude: float, max_mode: int = 1) -> LieScalarField:
    coeffs = _random_coeffs(rng, (3,), grid)
    outside = np.abs(grid.mode_index) > max_mode
    outside = outside[:, None, None] | outside[None, :, None] | outside[None, None, :]
    coeffs[..., outside] = 0.0
    values = spectral.inverse(coeffs).real
    return LieScalarField(values * (amplitude / np.max(np.abs(values))), grid)


# Spectral layer

def check_projection_algebra(settings: VerifySettings) -> List[Row]:
    """Pi_+- idempotent, complementary, orthogonal and reflected per frequency and on fields"""
    rng = _rng(settings, 1)
    plus, minus = spectral.DiracProjector(1), spectral.DiracProjector(-1)
    idempotence = completeness = orthogonality = reflection = identity_26 = 0.0
    for _ in range(1000):
        xi = rng.standard_normal(3) * rng.uniform(0.1, 10.0)
        P, M = plus.matrix(xi), minus.matrix(xi)
        idempotence = max(idempotence, np.max(np.abs(P @ P - P)), np.max(np.abs(M @ M - M)))
        completeness = max(completeness, np.max(np.abs(P + M - np.eye(4))))
        orthogonality = max(orthogonality, np.max(np.abs(P @ M)), np.max(np.abs(M @ P)))
        reflection = max(reflection, np.max(np.abs(P - minus.matrix(-xi))))
        unit = xi / np.linalg.norm(xi)
        for j in range(3):
            lhs = ALPHA[j] @ P
            rhs = M @ ALPHA[j] + unit[j] * np.eye(4)
            identity_26 = max(identity_26, np.max(np.abs(lhs - rhs)))

    grid = Grid(settings.field_N)
    psi = SpinorField(spectral.inverse(_random_coeffs(rng, (2, 4), grid, complex_valued=True)), grid)
    halves = [spectral.dirac_project(sign, psi) for sign in (1, -1)]
    field_sum = relative_deviation((halves[0] + halves[1]).data, psi.data)
    field_product = spectral.dirac_project(1, halves[1]).max_abs() / psi.max_abs()
    return [
        _row("projector_idempotence", idempotence, 1e-13),
        _row("projector_completeness", completeness, 1e-13),
        _row("projector_orthogonality", orthogonality, 1e-13),
        _row("projector_reflection", reflection, 1e-13),
        _row("identity_2.6", identity_26, 1e-13),
        _row("field_projection_sum", field_sum, 1e-12),
        _row("field_projection_product", field_product, 1e-12),
    ]


def check_spinor_identities(settings: VerifySettings) -> List[Row]:
    """alpha^j Pi_+- = Pi_-+ alpha^j Pi_+- - R^j_+- Pi_+- and -i alpha^j d_j = |grad| (Pi_+ - Pi_-)"""
    rng = _rng(settings, 2)
    grid = Grid(settings.field_N)
    coeffs = _zero_mean_spinor(rng, grid)

    worst_27 = 0.0
    for sign in (1, -1):
        half = spectral.project_coeffs(sign, coeffs, grid)
        for j in range(3):
            lhs = _apply_alpha(j, half)
            riesz = spectral.MultiplierSpec(spectral.MODIFIED_RIESZ, j=j, sign=sign).symbol(grid)
            rhs = spectral.project_coeffs(-sign, lhs, grid) - riesz * half
            worst_27 = max(worst_27, relative_deviation(spectral.inverse(lhs), spectral.inverse(rhs)))

    lhs = sum(
        -1j * _apply_alpha(j, spectral.MultiplierSpec(spectral.PARTIAL, j=j).symbol(grid) * coeffs)
        for j in range(3)
    )
    abs_grad = spectral.MultiplierSpec(spectral.ABS_GRAD, alpha=1.0).symbol(grid)
    rhs = abs_grad * (spectral.project_coeffs(1, coeffs, grid) - spectral.project_coeffs(-1, coeffs, grid))
    worst_28 = relative_deviation(spectral.inverse(lhs), spectral.inverse(rhs))
    return [_row("identity_2.7", worst_27, 1e-12), _row("identity_2.8", worst_28, 1e-12)]


def check_hodge_and_parseval(settings: VerifySettings) -> List[Row]:
    rng = _rng(settings, 3)
    grid = Grid(settings.field_N)
    A = LieVectorField(spectral.inverse(_random_coeffs(rng, (3, 3), grid)).real, grid)
    df, cf = spectral.hodge_split(A)
    return [
        _row("hodge_reconstruction", np.max(np.abs(A.data - df.data - cf.data)), 1e-12),
        _row("hodge_divergence_free", spectral.divergence(df).max_abs(), 1e-11),
        _row("hodge_curl_free", spectral.curl(cf).max_abs(), 1e-11),
        _row(
            "parseval",
            abs(spectral.l2_norm(A) - spectral.physical_l2_norm(A)) / spectral.physical_l2_norm(A),
            1e-12,
        ),
    ]


# Null structure

def check_null_identities(settings: VerifySettings) -> List[Row]:
    """Bracket identities on random divergence-free su(2) fields"""
    rng = _rng(settings, 4)
    grid = Grid(settings.identity_N)
    worst_50 = worst_n3 = 0.0
    for _ in range(settings.identity_fields):
        coeffs = spectral.leray_coeffs(_random_coeffs(rng, (3, 3), grid), grid)
        Adf = LieVectorField(spectral.inverse(coeffs).real, grid)
        worst_50 = max(worst_50, verify_identity_50(Adf))
        worst_n3 = max(worst_n3, verify_identity_N3(Adf))
    return [_row("identity_50", worst_50, 1e-10), _row("identity_N3", worst_n3, 1e-10)]


def _plane_wave(grid: Grid, modes, kind: str = "exp") -> np.ndarray:
    phase = sum(m * (2.0 * math.pi / grid.L) * x for m, x in zip(modes, grid.points))
    if kind == "cos":
        return np.cos(phase)
    if kind == "sin":
        return np.sin(phase)
    return np.exp(1j * phase)


def check_null_cancellation(settings: VerifySettings) -> List[Row]:
    """Q_ij vanishes on parallel frequencies; angular weights of single modes"""
    grid = Grid(settings.identity_N)
    u = _plane_wave(grid, (1, 1, 0), "cos")
    v = _plane_wave(grid, (2, 2, 0), "sin")
    parallel = max(
        float(np.max(np.abs(qij_null_form(u, v, i, j, grid)))) for i in range(3) for j in range(3)
    )

    # (m1, m2, sign1, sign2, expected weight)
    cases = [
        ((1, 0, 0), (1, 0, 0), 1, 1, 0.0),
        ((1, 0, 0), (0, 1, 0), 1, 1, 0.5 * math.pi),
        ((1, 0, 0), (1, 0, 0), 1, -1, math.pi),
    ]
    M = 8
    worst = 0.0
    for m1, m2, sign1, sign2, weight in cases:
        traces = [
            SpaceTimeTrace(np.broadcast_to(_plane_wave(grid, m), (M,) + grid.shape).copy(), 0.1, grid, NO_WINDOW)
            for m in (m1, m2)
        ]
        coeffs = angular_bilinear_coeffs(traces[0], traces[1], sign1, sign2)
        expected = np.zeros_like(coeffs)
        target = tuple(int(np.mod(a + b, grid.N)) for a, b in zip(m1, m2))
        expected[(0,) + target] = weight
        worst = max(worst, float(np.max(np.abs(coeffs - expected))))
    return [_row("qij_parallel_cancellation", parallel, 1e-13), _row("angular_weights", worst, 1e-13)]


def check_symbol_scans(settings: VerifySettings) -> List[Row]:
    scan = spinorial_bound_scan(settings.scan_samples, settings.seed)
    riesz = riesz_null_symbol_scan(settings.scan_samples, settings.seed)
    rng = _rng(settings, 5)
    grid = Grid(settings.identity_N)
    psi1 = SpinorField(spectral.inverse(_random_coeffs(rng, (2, 4), grid, complex_valued=True)), grid)
    psi2 = SpinorField(spectral.inverse(_random_coeffs(rng, (2, 4), grid, complex_valued=True)), grid)
    return [
        _row("spinorial_max_ratio", scan["max_ratio"], 1.0 + 1e-6),
        _row("spinorial_small_angle_r2", scan["r_squared"], 0.999, lower=True),
        _row("riesz_null_max_ratio", riesz["max_ratio"], 1.0 + 1e-12),
        _row("current_null_split", verify_current_null_split(psi1, psi2), 1e-12),
    ]


# Dynamics

def check_linear_exactness(settings: VerifySettings) -> List[Row]:
    """With couplings off each mode follows its closed-form phase"""
    grid = Grid(settings.evolution_N)
    options = DynamicsOptions(convention=settings.convention, couplings=False)
    data = random_small_data(grid, settings.s, settings.l, 1e-3, settings.seed)
    initial = split_from_fields(data.a0, data.a1, data.psi0, options=options)
    T = 1.0
    final, _ = evolve(initial, T, 0.05, options)
    rates = {
        "Adf_plus": 1j * grid.kbracket,
        "Adf_minus": -1j * grid.kbracket,
        "Acf": 0.0 * grid.kabs,
        "psi_plus": 1j * grid.kabs,
        "psi_minus": -1j * grid.kabs,
    }
    worst = 0.0
    for name, rate in rates.items():
        start = spectral.forward(getattr(initial, name).data)
        end = spectral.forward(getattr(final, name).data)
        scale = max(float(np.max(np.abs(start))), 1e-300)
        worst = max(worst, float(np.max(np.abs(end - start * np.exp(rate * T)))) / scale)
    return [_row("linear_exactness", worst, 1e-12)]


def check_constraint_propagation(settings: VerifySettings) -> List[Row]:
    """Gauss residual along a small-data run and its decay under dt -> dt/2"""
    grid = Grid(settings.evolution_N)
    options = settings.options
    T, dt = settings.gauss_run
    data = random_small_data(grid, settings.s, settings.l, 1e-3, settings.seed)
    initial = split_from_fields(data.a0, data.a1, data.psi0, options=options)
    start = gauss_residual(initial)

    steps, _ = step_count(T, dt)
    final, snapshots = evolve(initial, T, dt, options, snapshot_stride=max(1, steps // 10))
    worst = 0.0
    for state in snapshots:
        fields = reconstruct(state)
        scale = spectral.sobolev_norm(fields.A, 1.0) + spectral.l2_norm(fields.psi) ** 2 + 1.0
        worst = max(worst, gauss_residual(fields).norm / scale)

    growth = spectral.l2_norm(gauss_residual(final).field - start.field)
    refined, _ = evolve(initial, T, dt / 2.0, options)
    growth_refined = spectral.l2_norm(gauss_residual(refined).field - start.field)
    floor = 1e-13 * (1.0 + start.scale)
    gain = growth / growth_refined if growth_refined > 0 else math.inf
    threshold = 2.0**3.8
    logging.info(f"Gauss residual growth {growth:.3e} (dt) vs {growth_refined:.3e} (dt/2)")
    return [
        _row("gauss_residual", worst, 1e-8),
        _row("gauss_refinement_gain", gain, threshold, lower=True, passed=growth <= floor or gain >= threshold),
    ]


def check_cross_validation(settings: VerifySettings) -> List[Row]:
    grid = Grid(settings.evolution_N)
    T, dt = settings.cross_run
    data = random_small_data(grid, settings.s, settings.l, 1e-3, settings.seed)
    initial = SecondOrderState(data.a0, data.a1, data.psi0)
    result = cross_validate(initial, T, dt, settings.options, snapshot_stride=max(1, step_count(T, dt)[0] // 5))
    return [_row("cross_validation", result["max_deviation"], 1e-6)]


def check_richardson(settings: VerifySettings) -> List[Row]:
    grid = Grid(settings.evolution_N)
    T, dt = settings.richardson_run
    data = random_small_data(grid, settings.s, settings.l, 0.05, settings.seed)
    initial = split_from_fields(data.a0, data.a1, data.psi0, options=settings.options)
    result = richardson_order(initial, T, dt, settings.options)
    return [_row("richardson_order", result["order"], 3.8, lower=True)]


# Gauge

def check_gauge(settings: VerifySettings) -> List[Row]:
    """Covariance, inverse and curl-free removal"""
    rng = _rng(settings, 6)
    grid = Grid(settings.gauge_N)
    data = random_small_data(grid, settings.s, settings.l, 1e-2, settings.seed, max_mode=2)
    A, dtA, psi = data.a0, data.a1, data.psi0
    transform = GaugeTransform.from_lie(_low_mode_lie(rng, grid, 0.05))

    A_new, dtA_new, psi_new = apply_gauge(transform, A, dtA, psi)
    F, F_new = curvature(A, dtA), curvature(A_new, dtA_new)
    expected = np.stack([adjoint_field(transform.U, F.spatial[p]) for p in range(3)])
    covariance = relative_deviation(F_new.spatial, expected)

    back = apply_gauge(transform.inverse(), A_new, dtA_new, psi_new)
    roundtrip = max(relative_deviation(a.data, b.data) for a, b in zip(back, (A, dtA, psi)))
    involution = float(np.max(np.abs(transform.inverse().inverse().U - transform.U)))

    fixed = gauge_fix(A, dtA, psi, settings.s, settings.l)
    increases = sum(
        1 for earlier, later in zip(fixed.history, fixed.history[1:]) if later["cf_norm"] > earlier["cf_norm"]
    )
    abelian = random_small_data(grid, settings.s, settings.l, 1e-3, settings.seed, abelian=True)
    abelian_fix = gauge_fix(abelian.a0, abelian.a1, abelian.psi0, settings.s, settings.l)

    def contraction(eps: float) -> float:
        sweep = random_small_data(grid, settings.s, settings.l, eps, settings.seed)
        history = gauge_fix(sweep.a0, sweep.a1, sweep.psi0, settings.s, settings.l, tol=1e-13).history
        if len(history) < 2:
            return math.nan
        return history[1]["v_norm"] / history[0]["v_norm"]

    decay = contraction(1e-3) / contraction(1e-4)
    return [
        _row("curvature_covariance", covariance, 1e-10),
        _row("gauge_roundtrip", roundtrip, 1e-12),
        _row("gauge_inverse_involution", involution, 1e-12),
        _row("gauge_fix_residual", fixed.final_cf_norm, 1e-10),
        _row("gauge_fix_monotone", increases, 0),
        _row("gauge_fix_abelian_iterations", abelian_fix.iterations, 1, passed=abelian_fix.iterations == 1),
        _row("gauge_fix_decay", decay, 3.0, lower=True),
    ]


def check_evolution_covariance(settings: VerifySettings) -> List[Row]:
    rng = _rng(settings, 7)
    grid = Grid(settings.evolution_N)
    # Transforms are applied at collocation points; keep U well inside the band
    amplitude, max_mode = (0.05, 2) if grid.N >= 16 else (2e-3, 1)
    data = random_small_data(grid, settings.s, settings.l, 1e-3, settings.seed, max_mode=max_mode)
    transform = GaugeTransform.from_lie(_low_mode_lie(rng, grid, amplitude))
    T, dt = settings.cross_run
    result = evolution_covariance(SecondOrderState(data.a0, data.a1, data.psi0), transform, T, dt, settings.options)
    return [_row("evolution_covariance", result["deviation"], 1e-6)]


CHECKS: List[Callable[[VerifySettings], List[Row]]] = [
    check_projection_algebra,
    check_spinor_identities,
    check_hodge_and_parseval,
    check_null_identities,
    check_null_cancellation,
    check_symbol_scans,
    check_linear_exactness,
    check_constraint_propagation,
    check_cross_validation,
    check_richardson,
    check_gauge,
    check_evolution_covariance,
]


def run_verification(
    settings: Optional[VerifySettings] = None,
    corrupt: Optional[str] = None,
    checks: Optional[List[Callable[[VerifySettings], List[Row]]]] = None,
    callback: Optional[Callable[[Dict[str, Any]], None]] = None,
) -> List[Row]:
    """
    Run the property suite

    Args:
        settings: Problem sizes and seed (full suite by default)
        corrupt: Multiplier kind to perturb for the whole run (fault injection)
        checks: Subset of CHECKS to run
        callback: Optional callback function for progress updates

    Returns:
        list: Report rows in check order
    """
    settings = settings or VerifySettings()
    checks = checks if checks is not None else CHECKS
    rows: List[Row] = []
    guard = spectral.corrupted_multiplier(corrupt) if corrupt else nullcontext()
    with guard:
        for index, check in enumerate(checks):
            if callback:
                callback({"status": check.__name__, "progress": index / len(checks)})
            logging.info(f"Running {check.__name__}")
            produced = check(settings)
            for row in produced:
                level = logging.DEBUG if row["passed"] else logging.WARNING
                logging.log(level, f"{row['name']}: {row['value']:.3e} (threshold {row['threshold']:.1e})")
            rows.extend(produced)
    if callback:
        callback({"status": "complete", "progress": 1.0})
    return rows
