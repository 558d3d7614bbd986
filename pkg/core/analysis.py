"""
Null-form evaluators, bracket-identity checks and discrete X^{s,b} norms

Everything here is read-only on its inputs. The quadratic-cost angular
bilinear form is a small-grid oracle guarded by a mode cap.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft
from scipy import stats

from core import spectral
from core.errors import CostGuardError
from core.lattice import Grid, LatticeField, LieVectorField, SpinorField
from core.liealg import ALPHA, lie_bracket

MAX_SPACETIME_MODES = 2**18

PLUS = "+"
MINUS = "-"
CONE = "abs"
ZERO = "zero"
FLAVORS = (PLUS, MINUS, CONE, ZERO)

HANN = "hann"
NO_WINDOW = "none"


@dataclass
class SpaceTimeTrace:
    """
    M equally spaced time slices of one field

    ``snapshots`` has shape (M,) + component shape + grid shape. The time
    transform treats the slices as one period of length T = M dt.
    """

    snapshots: np.ndarray
    dt: float
    grid: Grid
    window: str = HANN

    def __post_init__(self):
        self.snapshots = np.asarray(self.snapshots)
        if self.snapshots.ndim < 4 or self.snapshots.shape[-3:] != self.grid.shape:
            raise ValueError(f"Trace slices must end in the grid shape {self.grid.shape}")
        if self.M < 8:
            raise ValueError(f"A trace needs at least 8 slices, got {self.M}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"Trace spacing must be positive, got {self.dt}")
        if self.window not in (HANN, NO_WINDOW):
            raise ValueError(f"Unknown window {self.window!r}")

    @classmethod
    def from_fields(cls, fields: Sequence[LatticeField], dt: float, window: str = HANN) -> "SpaceTimeTrace":
        if not fields:
            raise ValueError("No fields given")
        grid = fields[0].grid
        for f in fields:
            grid.require_same(f.grid)
        return cls(np.stack([f.data for f in fields]), dt, grid, window)

    @property
    def M(self) -> int:
        return self.snapshots.shape[0]

    @property
    def T(self) -> float:
        return self.M * self.dt

    @property
    def weights(self) -> np.ndarray:
        if self.window == HANN:
            return np.hanning(self.M)
        return np.ones(self.M)

    @property
    def tau(self) -> np.ndarray:
        """Temporal frequencies 2 pi n / T in FFT order"""
        return 2.0 * np.pi * np.fft.fftfreq(self.M, d=self.dt)


@dataclass(frozen=True)
class XsbSpec:
    """Exponents and flavour of a discrete X^{s,b} norm"""

    s: float
    b: float
    flavor: str = PLUS

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"Unknown flavour {self.flavor!r}; expected one of {FLAVORS}")
        if not (math.isfinite(self.s) and math.isfinite(self.b)):
            raise ValueError("X^{s,b} exponents must be finite")


def window_factor(trace: SpaceTimeTrace) -> float:
    """(dt sum w^2)^{1/2}, the time-side l2 size of the taper"""
    return float(np.sqrt(trace.dt * np.sum(trace.weights**2)))


def spectrum(trace: SpaceTimeTrace, windowed: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Space-time coefficients c(tau_n, xi) with u(t, x) = sum c e^{i(tau t + xi.x)}

    Returns:
        tuple: (tau, coefficients shaped like the snapshots)
    """
    values = trace.snapshots
    if windowed:
        values = values * trace.weights.reshape((-1,) + (1,) * (values.ndim - 1))
    coeffs = sfft.fft(spectral.forward(values), axis=0, norm="forward", workers=spectral.worker_count())
    return trace.tau, coeffs


def _modulation(tau: np.ndarray, kabs: np.ndarray, flavor: str) -> np.ndarray:
    t = tau.reshape((-1, 1, 1, 1))
    if flavor == PLUS:
        shift = t - kabs
    elif flavor == MINUS:
        shift = t + kabs
    elif flavor == CONE:
        shift = np.abs(t) - kabs
    else:
        shift = t + 0.0 * kabs
    return np.sqrt(1.0 + shift**2)


def xsb_norm(trace: SpaceTimeTrace, spec: XsbSpec) -> float:
    """
    Discrete X^{s,b} norm of a (windowed) trace

    norm^2 = T L^3 sum <xi>^{2s} w(tau, xi)^{2b} |c(tau, xi)|^2 with the
    modulation weight w = <tau - |xi|>, <tau + |xi|>, <|tau| - |xi|> or
    <tau> by flavour. With b = 0 this is the space-time L2 norm of the
    windowed trace with H^s weight.
    """
    grid = trace.grid
    tau, coeffs = spectrum(trace, windowed=trace.window != NO_WINDOW)
    weight = grid.kbracket ** (2.0 * spec.s) * _modulation(tau, grid.kabs, spec.flavor) ** (2.0 * spec.b)
    power = np.abs(coeffs) ** 2
    power = power.reshape((trace.M, -1) + grid.shape).sum(axis=1)
    return float(np.sqrt(trace.T * grid.volume * np.sum(weight * power)))


def _as_array(field: Any, grid: Optional[Grid]) -> Tuple[np.ndarray, Grid]:
    if isinstance(field, LatticeField):
        return field.data, field.grid
    if grid is None:
        raise ValueError("A grid is required for bare arrays")
    return np.asarray(field), grid


def _padded_derivative(coeffs: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    dealias = spectral.get_dealiaser(grid)
    return dealias.pad(1j * grid.k[axis] * coeffs)


def qij_null_form(u: Any, v: Any, i: int, j: int, grid: Optional[Grid] = None) -> np.ndarray:
    """Q_ij(u, v) = d_i u d_j v - d_j u d_i v, dealiased and componentwise"""
    u_data, grid = _as_array(u, grid)
    v_data, _ = _as_array(v, grid)
    cu, cv = spectral.forward(u_data), spectral.forward(v_data)
    fine = (
        _padded_derivative(cu, grid, i) * _padded_derivative(cv, grid, j)
        - _padded_derivative(cu, grid, j) * _padded_derivative(cv, grid, i)
    )
    result = spectral.inverse(spectral.get_dealiaser(grid).truncate(fine))
    if np.isrealobj(u_data) and np.isrealobj(v_data):
        result = result.real
    return result


def qij_bracket(u: Any, v: Any, i: int, j: int, grid: Optional[Grid] = None) -> np.ndarray:
    """Q_ij[u, v] = [d_i u, d_j v] - [d_j u, d_i v] for Lie coefficients on axis 0"""
    u_data, grid = _as_array(u, grid)
    v_data, _ = _as_array(v, grid)
    if u_data.shape[0] != 3 or v_data.shape[0] != 3:
        raise ValueError("qij_bracket needs su(2)-valued inputs (3 coefficients on axis 0)")
    return _qij_bracket_coeffs(spectral.forward(u_data), spectral.forward(v_data), grid, i, j, truncate=False)


def _qij_bracket_coeffs(cu: np.ndarray, cv: np.ndarray, grid: Grid, i: int, j: int, truncate: bool = True) -> np.ndarray:
    dealias = spectral.get_dealiaser(grid)
    fine = lie_bracket(
        _padded_derivative(cu, grid, i).real, _padded_derivative(cv, grid, j).real
    ) - lie_bracket(_padded_derivative(cu, grid, j).real, _padded_derivative(cv, grid, i).real)
    coeffs = dealias.truncate(fine)
    return coeffs if truncate else spectral.inverse(coeffs).real


def relative_deviation(lhs: np.ndarray, rhs: np.ndarray) -> float:
    """max|lhs - rhs| over the larger of max|lhs| and max|rhs| (0 when both vanish)"""
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(lhs - rhs))) / scale


def _zero_mean_df(Adf: LieVectorField) -> np.ndarray:
    coeffs = spectral.leray_coeffs(spectral.band_limit(spectral.forward(Adf.data), Adf.grid), Adf.grid)
    coeffs[..., 0, 0, 0] = 0.0
    return coeffs


def verify_identity_50(Adf: LieVectorField) -> float:
    """
    Compare sum_i [A_i, d_i A_j] with (1/2) sum_{i,k} Q_ki[W_ik, A_j]

    W_ik = |grad|^{-1}(R_i A_k - R_k A_i), so that A_i = sum_k d_k W_ik for a
    divergence-free, mean-free A. The input is re-projected to that class.

    Returns:
        float: Max deviation relative to the larger side
    """
    grid = Adf.grid
    A = _zero_mean_df(Adf)
    dealias = spectral.get_dealiaser(grid)
    A_fine = dealias.pad(A, real=True)

    # direct: [A_i, d_i A_j]
    lhs_fine = np.zeros((3, 3) + dealias.fine_shape)
    for i in range(3):
        lhs_fine += lie_bracket(A_fine[i][None], _padded_derivative(A, grid, i).real, axis=1)
    lhs = dealias.truncate(lhs_fine)

    inverse_abs = spectral.MultiplierSpec(spectral.ABS_GRAD, alpha=-1.0).symbol(grid)
    riesz = [spectral.MultiplierSpec(spectral.RIESZ, j=i).symbol(grid) for i in range(3)]
    rhs = np.zeros_like(lhs)
    for i in range(3):
        for k in range(3):
            if i == k:
                continue
            W = inverse_abs * (riesz[i] * A[k] - riesz[k] * A[i])
            for j in range(3):
                rhs[j] += 0.5 * _qij_bracket_coeffs(W, A[j], grid, k, i)
    return relative_deviation(spectral.inverse(lhs).real, spectral.inverse(rhs).real)


def verify_identity_N3(Adf: LieVectorField) -> float:
    """
    Compare P(sum_i [A_i, d_j A_i]) with |grad|^{-2} d_k sum_i Q_jk[A_i, A_i]

    The zero mode is excluded (the right side has none).
    """
    grid = Adf.grid
    A = _zero_mean_df(Adf)
    dealias = spectral.get_dealiaser(grid)
    A_fine = dealias.pad(A, real=True)

    B_fine = np.zeros((3, 3) + dealias.fine_shape)
    for j in range(3):
        derivative = _padded_derivative(A, grid, j).real
        B_fine[j] = np.sum(lie_bracket(A_fine, derivative, axis=1), axis=0)
    lhs = spectral.leray_coeffs(dealias.truncate(B_fine), grid)

    rhs = np.zeros_like(lhs)
    for j in range(3):
        for k in range(3):
            if j == k:
                continue
            Q = sum(_qij_bracket_coeffs(A[i], A[i], grid, j, k) for i in range(3))
            rhs[j] += 1j * grid.k[k] * Q
    rhs = spectral.inverse_laplacian_coeffs(rhs, grid)
    lhs[..., 0, 0, 0] = 0.0
    return relative_deviation(spectral.inverse(lhs).real, spectral.inverse(rhs).real)


def _pair_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angles between rows of a and rows of b (broadcast), 0 when either is zero"""
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    angle = np.arctan2(cross, dot)
    zero = (np.linalg.norm(a, axis=-1) == 0) | (np.linalg.norm(b, axis=-1) == 0)
    return np.where(zero, 0.0, angle)


def angular_bilinear_coeffs(
    u_trace: SpaceTimeTrace, v_trace: SpaceTimeTrace, sign1: int, sign2: int
) -> np.ndarray:
    """
    Space-time coefficients of the angle-weighted product

    out(tau, xi) = sum over tau1 + tau2 = tau, xi1 + xi2 = xi of
    |angle(sign1 xi1, sign2 xi2)| u(tau1, xi1) v(tau2, xi2), using the
    unwindowed transforms. Time indices wrap; spatial sums outside the
    retained band are dropped.

    Raises:
        CostGuardError: If a trace has more than 2^18 space-time modes
    """
    if sign1 not in (1, -1) or sign2 not in (1, -1):
        raise ValueError("Signs must be +1 or -1")
    grid = u_trace.grid
    grid.require_same(v_trace.grid)
    if u_trace.snapshots.shape != v_trace.snapshots.shape:
        raise ValueError("Traces must have the same shape")
    modes = u_trace.M * grid.N**3
    if modes > MAX_SPACETIME_MODES:
        raise CostGuardError(f"{modes} space-time modes exceed the budget of {MAX_SPACETIME_MODES}")

    M, N = u_trace.M, grid.N
    _, cu = spectrum(u_trace, windowed=False)
    _, cv = spectrum(v_trace, windowed=False)
    cu = cu.reshape((M, -1) + grid.shape)
    cv = cv.reshape((M, -1) + grid.shape)

    def support(c: np.ndarray) -> np.ndarray:
        magnitude = np.max(np.abs(c), axis=1)
        magnitude[:, grid.nyquist_mask] = 0.0
        threshold = 1e-14 * max(float(np.max(magnitude)), 1e-300)
        return np.argwhere(magnitude > threshold)

    u_support, v_support = support(cu), support(cv)
    out = np.zeros_like(cu, dtype=complex)
    if len(u_support) == 0 or len(v_support) == 0:
        return out.reshape(u_trace.snapshots.shape)

    index = grid.mode_index
    v_modes = index[v_support[:, 1:]]
    v_values = cv[v_support[:, 0], :, v_support[:, 1], v_support[:, 2], v_support[:, 3]]
    limit = N // 2 - 1

    def accumulate(rows: np.ndarray) -> np.ndarray:
        partial = np.zeros_like(out)
        for n1, x1, y1, z1 in rows:
            m1 = index[[x1, y1, z1]]
            total = m1[None, :] + v_modes
            inside = np.all(np.abs(total) <= limit, axis=1)
            if not np.any(inside):
                continue
            weights = _pair_angles(sign1 * m1[None, :].astype(float), sign2 * v_modes[inside].astype(float))
            n_out = (n1 + v_support[inside, 0]) % M
            target = total[inside] % N
            contribution = weights[:, None] * cu[n1, :, x1, y1, z1][None, :] * v_values[inside]
            for component in range(out.shape[1]):
                np.add.at(partial, (n_out, component, target[:, 0], target[:, 1], target[:, 2]), contribution[:, component])
        return partial

    workers = max(1, min(spectral.worker_count(), len(u_support)))
    chunks = np.array_split(u_support, workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        for partial in executor.map(accumulate, chunks):
            out += partial
    return out.reshape(u_trace.snapshots.shape)


def angular_bilinear(u_trace: SpaceTimeTrace, v_trace: SpaceTimeTrace, sign1: int, sign2: int) -> SpaceTimeTrace:
    """The angle-weighted product as a trace (see angular_bilinear_coeffs)"""
    coeffs = angular_bilinear_coeffs(u_trace, v_trace, sign1, sign2)
    values = spectral.inverse(sfft.ifft(coeffs, axis=0, norm="forward", workers=spectral.worker_count()))
    return SpaceTimeTrace(values, u_trace.dt, u_trace.grid, NO_WINDOW)


def _projectors(directions: np.ndarray) -> np.ndarray:
    # Pi(n) = (I + n.alpha)/2 for unit rows n, shape (S, 4, 4)
    return 0.5 * (np.eye(4) + np.einsum("pj,jst->pst", directions, ALPHA))


def _unit_vectors(rng: np.random.Generator, count: int) -> np.ndarray:
    vectors = rng.standard_normal((count, 3))
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


def spinorial_bound_scan(samples: int = 10000, seed: int = 0, small_angle_samples: int = 200) -> Dict[str, float]:
    """
    Scan |Pi(xi1) Pi(-xi2) z| / (|z| angle(xi1, xi2))

    Directions are uniform on the sphere and z is a complex Gaussian 4-vector.
    The small-angle behaviour is fitted separately: for rotations by
    theta < 0.1 the operator norm of Pi(xi1) Pi(-xi2) is regressed on theta.

    Returns:
        dict: max_ratio, slope_near_zero, r_squared, samples
    """
    rng = np.random.default_rng(seed)
    xi1 = _unit_vectors(rng, samples)
    xi2 = _unit_vectors(rng, samples)
    z = rng.standard_normal((samples, 4)) + 1j * rng.standard_normal((samples, 4))
    products = _projectors(xi1) @ _projectors(-xi2)
    numerator = np.linalg.norm(np.einsum("pst,pt->ps", products, z), axis=1)
    angles = _pair_angles(xi1, xi2)
    valid = angles > 1e-12
    ratios = numerator[valid] / (np.linalg.norm(z[valid], axis=1) * angles[valid])

    # Rotate xi1 by theta towards an orthogonal direction
    theta = rng.uniform(1e-4, 0.1, small_angle_samples)
    base = _unit_vectors(rng, small_angle_samples)
    other = _unit_vectors(rng, small_angle_samples)
    other -= np.sum(other * base, axis=1, keepdims=True) * base
    other /= np.linalg.norm(other, axis=1, keepdims=True)
    rotated = np.cos(theta)[:, None] * base + np.sin(theta)[:, None] * other
    norms = np.linalg.norm(_projectors(base) @ _projectors(-rotated), ord=2, axis=(1, 2))
    fit = stats.linregress(theta, norms)

    result = {
        "max_ratio": float(np.max(ratios)),
        "slope_near_zero": float(fit.slope),
        "r_squared": float(fit.rvalue**2),
        "samples": int(samples),
    }
    logging.debug(f"Spinorial scan: {result}")
    return result


def riesz_null_symbol_scan(samples: int = 10000, seed: int = 0) -> Dict[str, float]:
    """
    Sup of |Q^{jk}_{+-,+-} symbol| / angle(+-xi1, +-xi2)

    The symbol of the modified-Riesz null form is
    s1 s2 (xi1_j xi2_k - xi1_k xi2_j) / (|xi1| |xi2|); its modulus is at most
    the sine of the angle, so the ratio stays below 1.
    """
    rng = np.random.default_rng(seed)
    xi1 = rng.standard_normal((samples, 3))
    xi2 = rng.standard_normal((samples, 3))
    signs = rng.choice([-1.0, 1.0], size=(samples, 2))
    pairs = [(0, 1), (0, 2), (1, 2)]
    choice = rng.integers(0, 3, samples)
    j = np.array([pairs[c][0] for c in choice])
    k = np.array([pairs[c][1] for c in choice])
    rows = np.arange(samples)
    symbol = (
        signs[:, 0] * signs[:, 1]
        * (xi1[rows, j] * xi2[rows, k] - xi1[rows, k] * xi2[rows, j])
        / (np.linalg.norm(xi1, axis=1) * np.linalg.norm(xi2, axis=1))
    )
    angles = _pair_angles(signs[:, :1] * xi1, signs[:, 1:] * xi2)
    valid = angles > 1e-12
    ratio = np.abs(symbol[valid]) / angles[valid]
    return {"max_ratio": float(np.max(ratio)), "samples": int(samples)}


def _pairing(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Site-wise C^4 inner product summed over colours"""
    return np.einsum("cs...,cs...->...", np.conj(left), right)


def verify_current_null_split(psi1: SpinorField, psi2: SpinorField) -> float:
    """
    Check <psi1, alpha^j psi2> against its half-wave splitting

    alpha^j Pi_+- = Pi_-+ alpha^j Pi_+- - R^j_+- Pi_+- gives
    <psi1, alpha^j psi2> = sum over signs of
    <psi1_s1, Pi_(-s2) alpha^j psi2_s2> - <psi1_s1, R^j_s2 psi2_s2>.
    Both spinors are taken mean-free.

    Returns:
        float: Max relative deviation over j and sites
    """
    grid = psi1.grid
    grid.require_same(psi2.grid)
    c1 = spectral.forward(psi1.data)
    c2 = spectral.forward(psi2.data)
    c1[..., 0, 0, 0] = 0.0
    c2[..., 0, 0, 0] = 0.0
    left = spectral.inverse(c1)
    halves1 = {sign: spectral.inverse(spectral.project_coeffs(sign, c1, grid)) for sign in (1, -1)}
    halves2 = {sign: spectral.project_coeffs(sign, c2, grid) for sign in (1, -1)}

    worst = 0.0
    for j in range(3):
        direct = _pairing(left, np.einsum("st,ct...->cs...", ALPHA[j], spectral.inverse(c2)))
        split = np.zeros_like(direct)
        for s2, half in halves2.items():
            rotated = np.einsum("st,ct...->cs...", ALPHA[j], half)
            term = spectral.inverse(spectral.project_coeffs(-s2, rotated, grid))
            riesz = spectral.MultiplierSpec(spectral.MODIFIED_RIESZ, j=j, sign=s2)
            term = term - spectral.inverse(half * riesz.symbol(grid))
            for s1 in (1, -1):
                split += _pairing(halves1[s1], term)
        worst = max(worst, relative_deviation(direct, split))
    return worst


def regularity_report(
    states: Sequence[Any],
    s: float,
    l: float,
    delta: float = 0.01,
    window: str = HANN,
) -> List[Dict[str, Any]]:
    """
    Discrete norms placing a run in its expected function spaces

    A^cf in X^{s+1/4, 1/2+delta}_{tau=0}, A^df_+- in X^{s, 3/4+delta}_+-,
    psi_+- in X^{l, 1/2+delta}_+-. Report only.

    Args:
        states: Equally spaced split-system snapshots (at least 8)
        s, l: Exponents of the run
        delta: Stand-in for the "+" in the b exponents
        window: Time taper

    Returns:
        list: One row per field with field, flavor, s, b, norm, window_factor
    """
    if len(states) < 8:
        raise ValueError(f"Need at least 8 snapshots for the time transform, got {len(states)}")
    times = np.array([state.t for state in states])
    steps = np.diff(times)
    if np.any(steps <= 0) or np.max(np.abs(steps - steps[0])) > 1e-9 * max(abs(steps[0]), 1e-300):
        raise ValueError("Snapshots must be equally spaced in time")
    dt = float(steps[0])
    layout = [
        ("Acf", ZERO, s + 0.25, 0.5 + delta),
        ("Adf_plus", PLUS, s, 0.75 + delta),
        ("Adf_minus", MINUS, s, 0.75 + delta),
        ("psi_plus", PLUS, l, 0.5 + delta),
        ("psi_minus", MINUS, l, 0.5 + delta),
    ]
    rows = []
    for name, flavor, s_exp, b_exp in layout:
        trace = SpaceTimeTrace.from_fields([getattr(state, name) for state in states], dt, window)
        rows.append(
            {
                "field": name,
                "flavor": flavor,
                "s": s_exp,
                "b": b_exp,
                "norm": xsb_norm(trace, XsbSpec(s_exp, b_exp, flavor)),
                "window_factor": window_factor(trace),
            }
        )
    return rows
