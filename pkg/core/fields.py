"""
Field-level operations: curvature, admissible random small data and the
Gauss-law projection of initial data

The lattice containers themselves live in core.lattice and are re-exported
here.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np

from core import spectral
from core.errors import AdmissibilityError, GaussProjectionError
from core.lattice import (
    CURVATURE_PAIRS,
    CurvatureField,
    Grid,
    LatticeField,
    LieScalarField,
    LieVectorField,
    SpinorField,
)
from core.liealg import TAU, bilinear_current, lie_bracket

__all__ = [
    "CURVATURE_PAIRS",
    "CurvatureField",
    "Grid",
    "InitialData",
    "LatticeField",
    "LieScalarField",
    "LieVectorField",
    "SpinorField",
    "charge_density_coeffs",
    "check_admissible",
    "curvature",
    "gauss_project",
    "gauss_residual_coeffs",
    "random_small_data",
]

# Lie index of T_3, the generator used for abelian data
ABELIAN_GENERATOR = 2


def check_admissible(s: float, l: float) -> None:
    """
    Check the local well-posedness exponent range

    Raises:
        AdmissibilityError: Unless s > 3/4, l > 1/4, s >= l >= s - 1,
            2s - l > 1 and l - s >= -1/2
    """
    failures = []
    if not s > 0.75:
        failures.append("s > 3/4")
    if not l > 0.25:
        failures.append("l > 1/4")
    if not (s >= l >= s - 1.0):
        failures.append("s >= l >= s - 1")
    if not 2.0 * s - l > 1.0:
        failures.append("2s - l > 1")
    if not l - s >= -0.5:
        failures.append("l - s >= -1/2")
    if failures:
        raise AdmissibilityError(f"Exponents s={s}, l={l} violate: {', '.join(failures)}")


def curvature(A: LieVectorField, dtA: LieVectorField) -> CurvatureField:
    """
    F_ij = d_i A_j - d_j A_i + [A_i, A_j] and F_j0 = -dA_j/dt

    Derivatives are spectral and the bracket is dealiased.
    """
    A.grid.require_same(dtA.grid)
    grid = A.grid
    coeffs = spectral.forward(A.data)
    fine = spectral.get_dealiaser(grid).pad(coeffs, real=True)
    ik = 1j * grid.k
    spatial = np.empty((3, 3) + grid.shape)
    for index, (i, j) in enumerate(CURVATURE_PAIRS):
        bracket = spectral.get_dealiaser(grid).truncate(lie_bracket(fine[i], fine[j]))
        total = ik[i] * coeffs[j] - ik[j] * coeffs[i] + bracket
        spatial[index] = spectral.inverse(total).real
    return CurvatureField(spatial, -np.real(dtA.data), grid)


def charge_density_coeffs(psi_coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Dealiased coefficients of rho^a = <psi, tau_a psi>, shape (3, N, N, N)"""
    dealias = spectral.get_dealiaser(grid)
    fine = dealias.pad(psi_coeffs)
    density, _ = bilinear_current(fine, fine, TAU)
    return dealias.truncate(density.real)


def _bracket_sum_coeffs(A_fine: np.ndarray, V_coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Dealiased coefficients of sum_k [A_k, V_k]"""
    dealias = spectral.get_dealiaser(grid)
    V_fine = dealias.pad(V_coeffs, real=True)
    return dealias.truncate(np.sum(lie_bracket(A_fine, V_fine, axis=1), axis=0))


def gauss_residual_coeffs(
    A_coeffs: np.ndarray, dtA_coeffs: np.ndarray, rho_coeffs: np.ndarray, grid: Grid
) -> np.ndarray:
    """
    Coefficients of -D_j dA_j/dt - rho, with D_j = d_j + [A_j, .]

    This is d^j F_j0 + [A^j, F_j0] - rho for F_j0 = -dA_j/dt.
    """
    A_fine = spectral.get_dealiaser(grid).pad(A_coeffs, real=True)
    return (
        -spectral.divergence_coeffs(dtA_coeffs, grid)
        - _bracket_sum_coeffs(A_fine, dtA_coeffs, grid)
        - rho_coeffs
    )


def _coefficient_l2(coeffs: np.ndarray, grid: Grid) -> float:
    return spectral.sobolev_norm_coeffs(coeffs, grid, 0.0)


def _mean_bracket_matrix(mean_A: np.ndarray) -> np.ndarray:
    # Linear map c -> sum_k [mean A_k, c_k] on constant shifts, (3, 9)
    blocks = []
    for k in range(3):
        x, y, z = mean_A[k]
        blocks.append(np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]]))
    return np.hstack(blocks)


def gauss_project(
    a: LieVectorField,
    a1: LieVectorField,
    psi0: SpinorField,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> LieVectorField:
    """
    Correct a1 so that (a, a1, psi0) satisfies the Gauss law

    The divergence-free fluctuation of a1 is kept. The correction is a
    gradient grad(phi) plus, on the torus, a constant shift c chosen by
    least squares so that the mean of sum_k [A_k, a1_k] + rho vanishes. Both
    come from a fixed-point iteration on
    Lap(phi) = -(sum_k [A_k, a1_k] + rho).

    Args:
        a: Potential at t = 0
        a1: Time derivative at t = 0
        psi0: Spinor at t = 0
        tol: Residual tolerance relative to || |grad| a1 || plus the size of the
            bracket and charge terms
        max_iter: Iteration budget

    Returns:
        LieVectorField: The corrected a1

    Raises:
        GaussProjectionError: If the residual does not reach ``tol``
    """
    a.grid.require_same(a1.grid)
    a.grid.require_same(psi0.grid)
    grid = a.grid

    A_coeffs = spectral.forward(a.data)
    A_fine = spectral.get_dealiaser(grid).pad(A_coeffs, real=True)
    rho = charge_density_coeffs(spectral.forward(psi0.data), grid)
    base = spectral.leray_coeffs(spectral.band_limit(spectral.forward(a1.data), grid), grid)

    # |grad| a1 bounds the divergence and its rounding error
    scale = (
        _coefficient_l2(grid.kabs * spectral.band_limit(spectral.forward(a1.data), grid), grid)
        + _coefficient_l2(_bracket_sum_coeffs(A_fine, base, grid), grid)
        + _coefficient_l2(rho, grid)
    )
    if scale == 0.0:
        return a1.like(np.real(spectral.inverse(base)))

    K = _mean_bracket_matrix(np.real(A_coeffs[:, :, 0, 0, 0]))
    phi = np.zeros((3,) + grid.shape, dtype=complex)
    shift = np.zeros((3, 3))
    floor = min(tol, 1e-14) * scale
    previous = np.inf
    residual = np.inf
    iterations = 0

    for iterations in range(1, max_iter + 1):
        velocity = base + spectral.gradient_coeffs(phi, grid)
        velocity[:, :, 0, 0, 0] += shift
        source = _bracket_sum_coeffs(A_fine, velocity, grid) + rho
        residual_coeffs = spectral.divergence_coeffs(velocity, grid) + source
        residual = _coefficient_l2(residual_coeffs, grid)
        if not np.isfinite(residual):
            break
        if residual <= floor or (residual <= tol * scale and residual > 0.5 * previous):
            break
        previous = residual
        phi = spectral.inverse_laplacian_coeffs(source, grid)
        correction, *_ = np.linalg.lstsq(K, -np.real(source[:, 0, 0, 0]), rcond=None)
        shift = shift + correction.reshape(3, 3)

    if not residual <= tol * scale:
        raise GaussProjectionError(
            f"Gauss projection did not converge after {iterations} iterations "
            f"(relative residual {residual / scale:.3e}); data too large for the small-data regime",
            iterations=iterations,
            residual=residual / scale,
        )
    logging.debug(f"Gauss projection converged in {iterations} iterations (relative residual {residual / scale:.2e})")
    return a1.like(np.real(spectral.inverse(velocity)))


@dataclass
class InitialData:
    """
    Cauchy data (a0 = a0df + a0cf, a1, psi0)

    ``a1`` already satisfies the Gauss law together with a0 and psi0.
    Unpacks as (a0df, a1df, a0cf, psi0).
    """

    a0df: LieVectorField
    a1: LieVectorField
    a0cf: LieVectorField
    psi0: SpinorField

    @property
    def grid(self) -> Grid:
        return self.a0df.grid

    @property
    def a0(self) -> LieVectorField:
        return self.a0df + self.a0cf

    @property
    def a1df(self) -> LieVectorField:
        return spectral.hodge_split(self.a1)[0]

    def norm_sum(self, s: float, l: float) -> float:
        """||a0||_{H^s} + ||a1||_{H^{s-1}} + ||psi0||_{H^l}"""
        return (
            spectral.sobolev_norm(self.a0, s)
            + spectral.sobolev_norm(self.a1, s - 1.0)
            + spectral.sobolev_norm(self.psi0, l)
        )

    def __iter__(self) -> Iterator[LatticeField]:
        return iter((self.a0df, self.a1df, self.a0cf, self.psi0))


def _weighted_noise(
    rng: np.random.Generator, shape: Tuple[int, ...], grid: Grid, exponent: float, complex_valued: bool = False
) -> np.ndarray:
    noise = rng.standard_normal(shape + grid.shape)
    if complex_valued:
        noise = noise + 1j * rng.standard_normal(shape + grid.shape)
    coeffs = spectral.forward(noise) * grid.kbracket ** (-exponent - 2.0)
    return spectral.band_limit(coeffs, grid)


def _neutralize(psi: np.ndarray) -> np.ndarray:
    # Orthogonal colour components of equal norm carry no total charge
    first, second = psi[0], psi[1]
    first_norm2 = np.vdot(first, first).real
    if first_norm2 == 0.0:
        return psi
    second = second - (np.vdot(first, second) / first_norm2) * first
    second_norm = np.sqrt(np.vdot(second, second).real)
    if second_norm > 0.0:
        second = second * (np.sqrt(first_norm2) / second_norm)
    return np.stack([first, second])


def random_small_data(
    grid: Grid,
    s: float,
    l: float,
    eps: float,
    seed: int,
    abelian: bool = False,
    max_rescale: int = 30,
    max_mode: Optional[int] = None,
) -> InitialData:
    """
    Seeded Gaussian small data satisfying the Gauss law

    Fourier coefficients are weighted by <xi>^{-s-2} (a0), <xi>^{-(s-1)-2}
    (a1) and <xi>^{-l-2} (psi0). a0df and a1 are divergence-free before the
    Gauss correction, a0cf is a gradient and psi0 is colour-neutral. Abelian
    data keep only the T_3 component and set psi0 = 0. A common scale factor
    is adjusted until ||a0||_{H^s} + ||a1||_{H^{s-1}} + ||psi0||_{H^l} = eps
    after the Gauss correction.

    Args:
        grid: Target grid
        s, l: Sobolev exponents (checked for admissibility)
        eps: Target size of the data
        seed: Generator seed; output is deterministic in (seed, grid, s, l, eps)
        abelian: Restrict to a single generator without spinor
        max_mode: Keep only integer wavenumbers |m_i| <= max_mode before the
            Gauss correction (None keeps the whole band)

    Returns:
        InitialData: The generated data
    """
    check_admissible(s, l)
    if eps < 0 or not np.isfinite(eps):
        raise ValueError(f"eps must be a non-negative number, got {eps}")
    zero_vector = LieVectorField.zeros(grid)
    if eps == 0:
        return InitialData(zero_vector, zero_vector.copy(), zero_vector.copy(), SpinorField.zeros(grid))

    rng = np.random.default_rng(seed)
    a0df = spectral.leray_coeffs(_weighted_noise(rng, (3, 3), grid, s), grid)
    a0cf = spectral.curl_free_coeffs(_weighted_noise(rng, (3, 3), grid, s), grid)
    a1df = spectral.leray_coeffs(_weighted_noise(rng, (3, 3), grid, s - 1.0), grid)
    psi = _weighted_noise(rng, (2, 4), grid, l, complex_valued=True)

    if max_mode is not None:
        outside = np.abs(grid.mode_index) > max_mode
        outside = outside[:, None, None] | outside[None, :, None] | outside[None, None, :]
        for coeffs in (a0df, a0cf, a1df, psi):
            coeffs[..., outside] = 0.0

    if abelian:
        keep = np.zeros(3, dtype=bool)
        keep[ABELIAN_GENERATOR] = True
        for coeffs in (a0df, a0cf, a1df):
            coeffs[:, ~keep] = 0.0
        psi_values = np.zeros((2, 4) + grid.shape, dtype=complex)
    else:
        psi_values = _neutralize(spectral.inverse(psi))

    a0df_values = spectral.inverse(a0df).real
    a0cf_values = spectral.inverse(a0cf).real
    a1df_values = spectral.inverse(a1df).real
    raw = InitialData(
        LieVectorField(a0df_values, grid),
        LieVectorField(a1df_values, grid),
        LieVectorField(a0cf_values, grid),
        SpinorField(psi_values, grid),
    )
    linear_size = raw.norm_sum(s, l)
    factor = eps / linear_size

    data = raw
    for attempt in range(1, max_rescale + 1):
        a0df_f = raw.a0df * factor
        a0cf_f = raw.a0cf * factor
        psi_f = raw.psi0 * factor
        a1_f = gauss_project(a0df_f + a0cf_f, raw.a1 * factor, psi_f)
        data = InitialData(a0df_f, a1_f, a0cf_f, psi_f)
        size = data.norm_sum(s, l)
        if abs(size - eps) <= 1e-14 * eps:
            break
        factor *= eps / size
    logging.debug(f"Random data (seed {seed}) normalised to eps={eps} after {attempt} rescalings")
    return data
