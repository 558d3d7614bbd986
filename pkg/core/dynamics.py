"""
Time evolution of the Yang-Mills-Dirac system in temporal gauge

Two formulations share one set of nonlinear kernels:

* the split system: divergence-free half-waves A^df_+-, the curl-free part
  A^cf with its velocity fixed by the Gauss law (a Picard iteration), and
  the Dirac half-waves psi_+-; stepped with an integrating-factor RK4 that
  is exact on the linear phases;
* the second-order system for (A, dA/dt, psi), stepped with classical RK4
  and used for cross-validation.

Sign conventions: i dpsi/dt = i alpha^j d_j psi + A^a_k alpha^k M_a psi,
d^2A_j/dt^2 = D_k F_kj - J_j, and the Gauss law reads D_j dA_j/dt = -rho
with rho^a = <psi, tau_a psi>.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from core import spectral
from core.errors import BlowUpError, LieAlgebraError, PicardError
from core.fields import (
    CURVATURE_PAIRS,
    charge_density_coeffs,
    curvature,
    gauss_residual_coeffs,
    random_small_data,
)
from core.lattice import Grid, LieScalarField, LieVectorField, SpinorField
from core.liealg import (
    ALPHA,
    CONVENTIONS,
    PAPER,
    PHYSICS,
    TAU,
    bilinear_current,
    coupling_generators,
    dirac_coupling,
    lie_bracket,
)

ProgressCallback = Callable[[int, int, float], None]


@dataclass(frozen=True)
class DynamicsOptions:
    """
    Evolution settings

    Args:
        convention: ``physics`` (tau_a in the Dirac coupling) or ``paper``
            (T_a literally)
        picard_tol: Relative sup-norm tolerance of the curl-free velocity solve
        picard_max: Iteration cap of that solve
        couplings: When False every nonlinear and coupling term is dropped,
            leaving the free half-wave flow
    """

    convention: str = PHYSICS
    picard_tol: float = 1e-12
    picard_max: int = 50
    couplings: bool = True

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"Unknown convention {self.convention!r}")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if int(self.picard_max) < 1:
            raise ValueError("picard_max must be at least 1")


@dataclass
class SimulationState:
    """Split-system unknowns at time t (A^df_+- and psi_+- are complex fields)"""

    Adf_plus: LieVectorField
    Adf_minus: LieVectorField
    Acf: LieVectorField
    dtAcf: LieVectorField
    psi_plus: SpinorField
    psi_minus: SpinorField
    t: float = 0.0

    FIELD_ORDER = ("Adf_plus", "Adf_minus", "Acf", "dtAcf", "psi_plus", "psi_minus")

    @property
    def grid(self) -> Grid:
        return self.Acf.grid

    def fields(self) -> List[Any]:
        return [getattr(self, name) for name in self.FIELD_ORDER]

    def is_finite(self) -> bool:
        return all(f.is_finite() for f in self.fields()) and math.isfinite(self.t)


@dataclass
class SecondOrderState:
    """(A, dA/dt, psi) at time t"""

    A: LieVectorField
    dtA: LieVectorField
    psi: SpinorField
    t: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.A.grid

    def is_finite(self) -> bool:
        return self.A.is_finite() and self.dtA.is_finite() and self.psi.is_finite()


@dataclass
class CurrentField:
    """J_0 (charge density) and J_k, k = 1..3"""

    density: LieScalarField
    spatial: LieVectorField

    @property
    def J0(self) -> LieScalarField:
        return self.density


@dataclass
class GaussResidual:
    """Gauss-law residual field, its L2 norm and the size of the terms it balances"""

    field: LieScalarField
    norm: float
    scale: float

    @property
    def relative(self) -> float:
        return self.norm / self.scale if self.scale > 0 else self.norm


State = Union[SimulationState, SecondOrderState]


def current(psi: SpinorField, convention: str = PHYSICS) -> CurrentField:
    """
    J^a_nu = <psi, alpha^nu M_a psi>, mapped to a real current

    Under ``paper`` the contraction with the skew T_a is purely imaginary and
    is multiplied by i; both conventions therefore give the same current.
    """
    grid = psi.grid
    dealias = spectral.get_dealiaser(grid)
    fine = dealias.pad(spectral.forward(psi.data))
    density, spatial = bilinear_current(fine, fine, coupling_generators(convention))
    if convention == PAPER:
        density, spatial = 1j * density, 1j * spatial
    scale = max(1.0, float(np.max(np.abs(density))) if density.size else 0.0)
    leak = max(float(np.max(np.abs(density.imag))), float(np.max(np.abs(spatial.imag))))
    if leak > 1e-12 * scale:
        raise LieAlgebraError(f"Current is not real (imaginary part {leak:.3e})")
    rho = spectral.inverse(dealias.truncate(density.real)).real
    spatial_values = spectral.inverse(dealias.truncate(spatial.real)).real
    return CurrentField(LieScalarField(rho, grid), LieVectorField(spatial_values, grid))


class _Kernels:
    """Dealiased nonlinear terms shared by both formulations"""

    def __init__(self, grid: Grid, options: DynamicsOptions) -> None:
        self.grid = grid
        self.options = options
        self.dealias = spectral.get_dealiaser(grid)
        self.generators = coupling_generators(options.convention)
        self.ik = 1j * grid.k

    def pad_real(self, coeffs: np.ndarray) -> np.ndarray:
        return self.dealias.pad(coeffs, real=True)

    def bracket_sum(self, A_fine: np.ndarray, V_coeffs: np.ndarray) -> np.ndarray:
        """Coefficients of sum_k [A_k, V_k]"""
        V_fine = self.pad_real(V_coeffs)
        return self.dealias.truncate(np.sum(lie_bracket(A_fine, V_fine, axis=1), axis=0))

    def spinor_terms(self, psi_coeffs: np.ndarray):
        """(psi on the fine grid, rho coefficients, spatial current on the fine grid)"""
        psi_fine = self.dealias.pad(psi_coeffs)
        density, spatial = bilinear_current(psi_fine, psi_fine, TAU)
        return psi_fine, self.dealias.truncate(density.real), spatial.real

    def bracket_terms(self, A_coeffs: np.ndarray, A_fine: np.ndarray) -> np.ndarray:
        """
        Fine-grid values of -[div A, A_j] - 2[A_i, d_i A_j] + [A_i, d_j A_i] - [A_i, [A_i, A_j]]

        These are the bracket terms of the temporal-gauge equation, so that
        d^2A/dt^2 = Lap A - grad div A - (returned terms) - J.
        """
        div = self.pad_real(spectral.divergence_coeffs(A_coeffs, self.grid))
        # grad_A[i, j] = d_i A_j
        grad_A = self.pad_real(self.ik[:, None, None] * A_coeffs[None])
        A_i = A_fine[:, None]
        term_div = lie_bracket(div[None], A_fine, axis=1)
        term_transport = np.sum(lie_bracket(A_i, grad_A, axis=2), axis=0)
        term_gradient = np.sum(lie_bracket(A_i, np.swapaxes(grad_A, 0, 1), axis=2), axis=0)
        inner = lie_bracket(A_i, A_fine[None], axis=2)
        term_cubic = np.sum(lie_bracket(A_i, inner, axis=2), axis=0)
        return -term_div - 2.0 * term_transport + term_gradient - term_cubic

    def dirac_forcing(self, A_fine: np.ndarray, psi_fine: np.ndarray) -> np.ndarray:
        """Coefficients of A^a_k alpha^k M_a psi"""
        return self.dealias.truncate(dirac_coupling(A_fine, psi_fine, self.generators))


class SplitSystem:
    """
    Flat coefficient form of the split system

    The packed vector holds, in order, the coefficients of A^df_+, A^df_-,
    A^cf (each 3x3xN^3) and psi_+, psi_- (each 2x4xN^3). The curl-free
    velocity w = dA^cf/dt is carried beside it.
    """

    def __init__(self, grid: Grid, options: Optional[DynamicsOptions] = None) -> None:
        self.grid = grid
        self.options = options or DynamicsOptions()
        self.kernels = _Kernels(grid, self.options)
        n3 = grid.N**3
        self._shapes = [(3, 3) + grid.shape] * 3 + [(2, 4) + grid.shape] * 2
        sizes = [9 * n3] * 3 + [8 * n3] * 2
        self._bounds = np.cumsum([0] + sizes)
        self.kbracket = spectral.bracket_symbol(grid)
        kb, ka = self.kbracket, grid.kabs
        rates = [1j * kb, -1j * kb, np.zeros(grid.shape), 1j * ka, -1j * ka]
        self.linear = np.concatenate(
            [np.broadcast_to(rate, shape).ravel() for rate, shape in zip(rates, self._shapes)]
        ).astype(complex)
        self.last_picard_iterations = 0

    @property
    def size(self) -> int:
        return int(self._bounds[-1])

    def pack(self, parts) -> np.ndarray:
        return np.concatenate([np.asarray(p, dtype=complex).ravel() for p in parts])

    def unpack(self, u: np.ndarray):
        return tuple(
            u[self._bounds[i]:self._bounds[i + 1]].reshape(self._shapes[i]) for i in range(5)
        )

    def potentials(self, u: np.ndarray):
        """(A, dA^df/dt, A^df) coefficients"""
        ap, am, acf, _, _ = self.unpack(u)
        adf = ap + am
        return adf + acf, 1j * self.kbracket * (ap - am), adf

    def resolve_velocity(self, A_fine: np.ndarray, dt_adf: np.ndarray, rho: np.ndarray, guess: np.ndarray) -> np.ndarray:
        """
        Picard iteration for w = |grad|^{-2} grad([A_i, dA^df_i/dt + w_i] + rho)

        Raises:
            PicardError: If the increment does not fall below
                picard_tol * max|w| within picard_max iterations
        """
        options = self.options
        w = guess
        increment = np.inf
        for iteration in range(1, options.picard_max + 1):
            source = self.kernels.bracket_sum(A_fine, dt_adf + w) + rho
            updated = spectral.gradient_coeffs(spectral.inverse_laplacian_coeffs(source, self.grid), self.grid)
            increment = float(np.max(np.abs(updated - w)))
            w = updated
            if increment <= options.picard_tol * max(float(np.max(np.abs(w))), 1e-300):
                self.last_picard_iterations = iteration
                if iteration > 0.8 * options.picard_max:
                    logging.warning(f"Picard solve needed {iteration} of {options.picard_max} iterations")
                return w
        raise PicardError(
            f"Curl-free velocity did not converge in {options.picard_max} iterations "
            f"(last increment {increment:.3e})",
            iterations=options.picard_max,
            increment=increment,
        )

    def velocity(self, u: np.ndarray, guess: Optional[np.ndarray] = None) -> np.ndarray:
        """The curl-free velocity consistent with the packed state"""
        if not self.options.couplings:
            return np.zeros((3, 3) + self.grid.shape, dtype=complex)
        A, dt_adf, _ = self.potentials(u)
        A_fine = self.kernels.pad_real(A)
        _, _, _, pp, pm = self.unpack(u)
        rho = charge_density_coeffs(pp + pm, self.grid)
        if guess is None:
            guess = np.zeros_like(A)
        return self.resolve_velocity(A_fine, dt_adf, rho, guess)

    def nonlinear(self, u: np.ndarray, guess: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Everything except the linear phases; returns (forcing, w)"""
        grid = self.grid
        if not self.options.couplings:
            return np.zeros_like(u), np.zeros_like(guess)
        kernels = self.kernels
        A, dt_adf, adf = self.potentials(u)
        _, _, _, pp, pm = self.unpack(u)
        A_fine = kernels.pad_real(A)
        psi_fine, rho, spatial_current = kernels.spinor_terms(pp + pm)
        w = self.resolve_velocity(A_fine, dt_adf, rho, guess)

        forcing = kernels.dealias.truncate(kernels.bracket_terms(A, A_fine) + spatial_current)
        rhs7 = spectral.leray_coeffs(forcing, grid)
        half_wave = 0.5j * (rhs7 - adf) / self.kbracket
        coupling = kernels.dirac_forcing(A_fine, psi_fine)
        d_psi_plus = -1j * spectral.project_coeffs(1, coupling, grid)
        d_psi_minus = -1j * spectral.project_coeffs(-1, coupling, grid)
        return self.pack([half_wave, -half_wave, w, d_psi_plus, d_psi_minus]), w

    def rhs(self, u: np.ndarray, guess: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        forcing, w = self.nonlinear(u, guess)
        return self.linear * u + forcing, w

    def step(self, u: np.ndarray, w: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
        """One integrating-factor RK4 step of size h (h may be negative)"""
        e_half = np.exp(0.5 * h * self.linear)
        e_full = e_half * e_half
        k1, w = self.nonlinear(u, w)
        k2, w = self.nonlinear(e_half * (u + 0.5 * h * k1), w)
        k3, w = self.nonlinear(e_half * u + 0.5 * h * k2, w)
        k4, w = self.nonlinear(e_full * u + h * e_half * k3, w)
        updated = e_full * u + (h / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
        return updated, self.velocity(updated, w)

    # Conversions between packed vectors and states

    def to_state(self, u: np.ndarray, w: np.ndarray, t: float) -> SimulationState:
        grid = self.grid
        ap, am, acf, pp, pm = self.unpack(u)
        return SimulationState(
            Adf_plus=LieVectorField(spectral.inverse(ap), grid),
            Adf_minus=LieVectorField(spectral.inverse(am), grid),
            Acf=LieVectorField(spectral.inverse(acf).real, grid),
            dtAcf=LieVectorField(spectral.inverse(w).real, grid),
            psi_plus=SpinorField(spectral.inverse(pp), grid),
            psi_minus=SpinorField(spectral.inverse(pm), grid),
            t=float(t),
        )

    def from_state(self, state: SimulationState) -> Tuple[np.ndarray, np.ndarray]:
        self.grid.require_same(state.grid)
        parts = [spectral.forward(getattr(state, name).data) for name in ("Adf_plus", "Adf_minus", "Acf", "psi_plus", "psi_minus")]
        return self.pack(parts), spectral.forward(state.dtAcf.data).astype(complex)


class SecondOrderSystem:
    """Flat coefficient form of (A, dA/dt, psi), stepped with classical RK4"""

    def __init__(self, grid: Grid, options: Optional[DynamicsOptions] = None) -> None:
        self.grid = grid
        self.options = options or DynamicsOptions()
        self.kernels = _Kernels(grid, self.options)
        n3 = grid.N**3
        self._shapes = [(3, 3) + grid.shape] * 2 + [(2, 4) + grid.shape]
        self._bounds = np.cumsum([0, 9 * n3, 9 * n3, 8 * n3])
        # xi.alpha per frequency, used by the free Dirac flow
        self._dirac_symbol = np.einsum("jxyz,jst->stxyz", grid.k, ALPHA)

    def pack(self, parts) -> np.ndarray:
        return np.concatenate([np.asarray(p, dtype=complex).ravel() for p in parts])

    def unpack(self, u: np.ndarray):
        return tuple(
            u[self._bounds[i]:self._bounds[i + 1]].reshape(self._shapes[i]) for i in range(3)
        )

    def rhs(self, u: np.ndarray) -> np.ndarray:
        grid = self.grid
        A, B, psi = self.unpack(u)
        # Lap A_j - d_j div A
        acceleration = -grid.kabs**2 * A + spectral.curl_free_coeffs(A, grid) * grid.kabs**2
        d_psi = 1j * np.einsum("stxyz,ctxyz->csxyz", self._dirac_symbol, psi)
        if self.options.couplings:
            kernels = self.kernels
            A_fine = kernels.pad_real(A)
            psi_fine, _, spatial_current = kernels.spinor_terms(psi)
            acceleration = acceleration - kernels.dealias.truncate(
                kernels.bracket_terms(A, A_fine) + spatial_current
            )
            d_psi = d_psi - 1j * kernels.dirac_forcing(A_fine, psi_fine)
        return self.pack([B, acceleration, d_psi])

    def step(self, u: np.ndarray, h: float) -> np.ndarray:
        k1 = self.rhs(u)
        k2 = self.rhs(u + 0.5 * h * k1)
        k3 = self.rhs(u + 0.5 * h * k2)
        k4 = self.rhs(u + h * k3)
        return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def to_state(self, u: np.ndarray, t: float) -> SecondOrderState:
        grid = self.grid
        A, B, psi = self.unpack(u)
        return SecondOrderState(
            LieVectorField(spectral.inverse(A).real, grid),
            LieVectorField(spectral.inverse(B).real, grid),
            SpinorField(spectral.inverse(psi), grid),
            float(t),
        )

    def from_state(self, state: SecondOrderState) -> np.ndarray:
        self.grid.require_same(state.grid)
        return self.pack(
            [
                spectral.band_limit(spectral.forward(state.A.data), self.grid),
                spectral.band_limit(spectral.forward(state.dtA.data), self.grid),
                spectral.band_limit(spectral.forward(state.psi.data), self.grid),
            ]
        )


def split_from_fields(
    A: LieVectorField,
    dtA: LieVectorField,
    psi: SpinorField,
    t: float = 0.0,
    options: Optional[DynamicsOptions] = None,
) -> SimulationState:
    """
    Build split unknowns from (A, dA/dt, psi)

    A^df_+- = (A^df -+ i <grad>^{-1} dA^df/dt) / 2, psi_+- = Pi_+- psi, and
    dA^cf/dt is the Picard solution started from the cf part of dA/dt.
    """
    grid = A.grid
    grid.require_same(dtA.grid)
    grid.require_same(psi.grid)
    system = SplitSystem(grid, options)
    A_coeffs = spectral.band_limit(spectral.forward(A.data), grid)
    B_coeffs = spectral.band_limit(spectral.forward(dtA.data), grid)
    psi_coeffs = spectral.band_limit(spectral.forward(psi.data), grid)
    adf = spectral.leray_coeffs(A_coeffs, grid)
    acf = A_coeffs - adf
    bdf = spectral.leray_coeffs(B_coeffs, grid)
    shifted = 1j * bdf / system.kbracket
    u = system.pack(
        [
            0.5 * (adf - shifted),
            0.5 * (adf + shifted),
            acf,
            spectral.project_coeffs(1, psi_coeffs, grid),
            spectral.project_coeffs(-1, psi_coeffs, grid),
        ]
    )
    w = system.velocity(u, spectral.curl_free_coeffs(B_coeffs, grid))
    return system.to_state(u, w, t)


def reconstruct(state: SimulationState) -> SecondOrderState:
    """A = Re(A^df_+ + A^df_-) + A^cf, dA/dt = Re(i<grad>(A^df_+ - A^df_-)) + dA^cf/dt, psi = psi_+ + psi_-"""
    grid = state.grid
    plus = spectral.forward(state.Adf_plus.data)
    minus = spectral.forward(state.Adf_minus.data)
    A = np.real(spectral.inverse(plus + minus)) + state.Acf.data
    dtA = np.real(spectral.inverse(1j * spectral.bracket_symbol(grid) * (plus - minus))) + state.dtAcf.data
    psi = state.psi_plus.data + state.psi_minus.data
    return SecondOrderState(LieVectorField(A, grid), LieVectorField(dtA, grid), SpinorField(psi, grid), state.t)


def _as_second_order(state: State) -> SecondOrderState:
    return reconstruct(state) if isinstance(state, SimulationState) else state


def rhs_split(state: SimulationState, options: Optional[DynamicsOptions] = None) -> Dict[str, Any]:
    """
    Time derivatives of every split field

    Returns:
        dict: ``Adf_plus``, ``Adf_minus``, ``Acf``, ``psi_plus``,
        ``psi_minus`` (fields) and ``picard_iterations``
    """
    system = SplitSystem(state.grid, options)
    u, w = system.from_state(state)
    du, _ = system.rhs(u, w)
    grid = state.grid
    dap, dam, dacf, dpp, dpm = system.unpack(du)
    return {
        "Adf_plus": LieVectorField(spectral.inverse(dap), grid),
        "Adf_minus": LieVectorField(spectral.inverse(dam), grid),
        "Acf": LieVectorField(spectral.inverse(dacf).real, grid),
        "psi_plus": SpinorField(spectral.inverse(dpp), grid),
        "psi_minus": SpinorField(spectral.inverse(dpm), grid),
        "picard_iterations": system.last_picard_iterations,
    }


def rhs_second_order(
    state: SecondOrderState, options: Optional[DynamicsOptions] = None
) -> Tuple[LieVectorField, LieVectorField, SpinorField]:
    system = SecondOrderSystem(state.grid, options)
    dA, dB, dpsi = system.unpack(system.rhs(system.from_state(state)))
    grid = state.grid
    return (
        LieVectorField(spectral.inverse(dA).real, grid),
        LieVectorField(spectral.inverse(dB).real, grid),
        SpinorField(spectral.inverse(dpsi), grid),
    )


def _check_step(dt: float) -> None:
    if not math.isfinite(dt) or dt == 0:
        raise ValueError(f"Time step must be finite and nonzero, got {dt}")


def step(state: SimulationState, dt: float, options: Optional[DynamicsOptions] = None) -> SimulationState:
    """
    One integrating-factor RK4 step of the split system

    A negative dt steps backwards.

    Raises:
        BlowUpError: If the new state is not finite
    """
    _check_step(dt)
    system = SplitSystem(state.grid, options)
    u, w = system.from_state(state)
    u, w = system.step(u, w, dt)
    if not np.all(np.isfinite(u)):
        raise BlowUpError("Non-finite values after split step", step=1, time=state.t + dt)
    return system.to_state(u, w, state.t + dt)


def step_second_order(state: SecondOrderState, dt: float, options: Optional[DynamicsOptions] = None) -> SecondOrderState:
    _check_step(dt)
    system = SecondOrderSystem(state.grid, options)
    u = system.step(system.from_state(state), dt)
    if not np.all(np.isfinite(u)):
        raise BlowUpError("Non-finite values after second-order step", step=1, time=state.t + dt)
    return system.to_state(u, state.t + dt)


def step_count(T: float, dt: float) -> Tuple[int, float]:
    """Number of steps covering [0, T] and the step actually used"""
    if T < 0 or not math.isfinite(T):
        raise ValueError(f"End time must be non-negative, got {T}")
    _check_step(dt)
    if T == 0:
        return 0, dt
    steps = max(1, int(round(T / abs(dt))))
    used = math.copysign(T / steps, dt)
    if abs(used - dt) > 1e-12 * abs(dt):
        logging.warning(f"Time step adjusted from {dt!r} to {used!r} to cover a span of {T!r}")
    return steps, used


def evolve(
    state: SimulationState,
    T: float,
    dt: float,
    options: Optional[DynamicsOptions] = None,
    snapshot_stride: Optional[int] = None,
    callback: Optional[ProgressCallback] = None,
) -> Tuple[SimulationState, List[SimulationState]]:
    """
    Evolve the split system over a time span T

    Args:
        state: Initial state
        T: Duration
        dt: Requested step (adjusted so an integer number of steps covers T)
        options: Dynamics settings
        snapshot_stride: Keep every stride-th state (the initial and final
            states are always kept); None keeps only the final state
        callback: Called as callback(step, steps, t) after every step

    Returns:
        tuple: (final state, snapshots)

    Raises:
        BlowUpError: With the failing step index
        PicardError: From the curl-free velocity solve
    """
    system = SplitSystem(state.grid, options)
    steps, h = step_count(T, dt)
    u, w = system.from_state(state)
    t0 = state.t
    snapshots: List[SimulationState] = []
    if snapshot_stride:
        snapshots.append(system.to_state(u, w, t0))
    for n in range(1, steps + 1):
        u, w = system.step(u, w, h)
        t = t0 + n * h
        if not np.all(np.isfinite(u)):
            raise BlowUpError(f"Non-finite values at step {n} (t={t:.6g})", step=n, time=t)
        if snapshot_stride and (n % snapshot_stride == 0 or n == steps):
            snapshots.append(system.to_state(u, w, t))
        if callback:
            callback(n, steps, t)
    final = system.to_state(u, w, t0 + steps * h)
    if not snapshot_stride:
        snapshots.append(final)
    return final, snapshots


def evolve_second_order(
    state: SecondOrderState,
    T: float,
    dt: float,
    options: Optional[DynamicsOptions] = None,
    snapshot_stride: Optional[int] = None,
    callback: Optional[ProgressCallback] = None,
) -> Tuple[SecondOrderState, List[SecondOrderState]]:
    """Second-order counterpart of evolve"""
    system = SecondOrderSystem(state.grid, options)
    steps, h = step_count(T, dt)
    u = system.from_state(state)
    t0 = state.t
    snapshots: List[SecondOrderState] = []
    if snapshot_stride:
        snapshots.append(system.to_state(u, t0))
    for n in range(1, steps + 1):
        u = system.step(u, h)
        t = t0 + n * h
        if not np.all(np.isfinite(u)):
            raise BlowUpError(f"Non-finite values at step {n} (t={t:.6g})", step=n, time=t)
        if snapshot_stride and (n % snapshot_stride == 0 or n == steps):
            snapshots.append(system.to_state(u, t))
        if callback:
            callback(n, steps, t)
    final = system.to_state(u, t0 + steps * h)
    if not snapshot_stride:
        snapshots.append(final)
    return final, snapshots


def gauss_residual(state: State) -> GaussResidual:
    """
    -D_j dA_j/dt - rho, i.e. d^j F_j0 + [A^j, F_j0] - rho with F_j0 = -dA_j/dt

    Accepts either state type; split states are reconstructed first.
    """
    fields = _as_second_order(state)
    grid = fields.grid
    A_coeffs = spectral.forward(fields.A.data)
    B_coeffs = spectral.forward(fields.dtA.data)
    rho = charge_density_coeffs(spectral.forward(fields.psi.data), grid)
    residual = gauss_residual_coeffs(A_coeffs, B_coeffs, rho, grid)
    kernels = _Kernels(grid, DynamicsOptions())
    scale = (
        spectral.sobolev_norm_coeffs(grid.kabs * B_coeffs, grid, 0.0)
        + spectral.sobolev_norm_coeffs(kernels.bracket_sum(kernels.pad_real(A_coeffs), B_coeffs), grid, 0.0)
        + spectral.sobolev_norm_coeffs(rho, grid, 0.0)
    )
    return GaussResidual(
        field=LieScalarField(spectral.inverse(residual).real, grid),
        norm=spectral.sobolev_norm_coeffs(residual, grid, 0.0),
        scale=scale,
    )


def energy(state: State) -> float:
    """
    1/2 ||dA/dt||^2 + 1/2 sum_{i<j} ||F_ij||^2 + Re<psi, (i alpha^j d_j + A^a_k alpha^k tau_a) psi>
    """
    fields = _as_second_order(state)
    grid = fields.grid
    F = curvature(fields.A, fields.dtA)
    kinetic = 0.5 * spectral.l2_norm(fields.dtA) ** 2
    magnetic = 0.5 * sum(spectral.l2_norm(F.spatial[index], grid) ** 2 for index in range(len(CURVATURE_PAIRS)))
    psi_coeffs = spectral.forward(fields.psi.data)
    # i alpha^j d_j has symbol -xi.alpha
    symbol = np.einsum("jxyz,jst->stxyz", grid.k, ALPHA)
    free = -np.einsum("csxyz,stxyz,ctxyz->", np.conj(psi_coeffs), symbol, psi_coeffs)
    J = current(fields.psi)
    interaction = np.sum(np.conj(spectral.forward(fields.A.data)) * spectral.forward(J.spatial.data))
    return float(kinetic + magnetic + grid.volume * (np.real(free) + np.real(interaction)))


def conserved_diagnostics(state: State, s: float = 0.9, l: float = 0.5) -> Dict[str, float]:
    """
    Charge, energy, Gauss residual and Sobolev norms of one state

    Returns:
        dict: t, gauss_residual, charge, energy, hs_adf, hs_acf, hl_psi
    """
    fields = _as_second_order(state)
    if isinstance(state, SimulationState):
        adf, acf = fields.A - state.Acf, state.Acf
    else:
        adf, acf = spectral.hodge_split(fields.A)
    return {
        "t": float(state.t),
        "gauss_residual": gauss_residual(fields).norm,
        "charge": spectral.l2_norm(fields.psi) ** 2,
        "energy": energy(fields),
        "hs_adf": spectral.sobolev_norm(adf, s),
        "hs_acf": spectral.sobolev_norm(acf, s),
        "hl_psi": spectral.sobolev_norm(fields.psi, l),
    }


def _packed_difference(a: SimulationState, b: SimulationState) -> float:
    return max(
        float(np.max(np.abs(x.data - y.data))) for x, y in zip(a.fields(), b.fields())
    )


def richardson_order(
    state: SimulationState,
    T: float,
    dt: float,
    options: Optional[DynamicsOptions] = None,
) -> Dict[str, float]:
    """
    Observed order from runs with dt, dt/2 and dt/4

    order = log2(|u_dt - u_dt/2| / |u_dt/2 - u_dt/4|) in the sup norm over
    all split fields.
    """
    finals = [evolve(state, T, dt / factor, options)[0] for factor in (1, 2, 4)]
    coarse = _packed_difference(finals[0], finals[1])
    fine = _packed_difference(finals[1], finals[2])
    order = math.log2(coarse / fine) if coarse > 0 and fine > 0 else float("inf")
    return {"dt": dt, "coarse_difference": coarse, "fine_difference": fine, "order": order}


def cross_validate(
    initial: SecondOrderState,
    T: float,
    dt: float,
    options: Optional[DynamicsOptions] = None,
    snapshot_stride: int = 10,
) -> Dict[str, Any]:
    """
    Evolve identical data with both formulations

    Returns:
        dict: ``max_deviation`` (sup over snapshots of
        ||A_split - A_2nd||_{H^1} + ||psi_split - psi_2nd||_{L2}) and the
        per-snapshot ``rows``
    """
    split = split_from_fields(initial.A, initial.dtA, initial.psi, initial.t, options)
    _, split_snaps = evolve(split, T, dt, options, snapshot_stride)
    _, second_snaps = evolve_second_order(initial, T, dt, options, snapshot_stride)
    rows = []
    for a, b in zip(split_snaps, second_snaps):
        fields = reconstruct(a)
        deviation = spectral.sobolev_norm(fields.A - b.A, 1.0) + spectral.l2_norm(fields.psi - b.psi)
        rows.append({"t": a.t, "deviation": deviation})
    return {"max_deviation": max(row["deviation"] for row in rows), "rows": rows}


def convention_experiment(
    eps: float,
    grid: Grid,
    T: float,
    seed: int = 0,
    s: float = 0.9,
    l: float = 0.5,
    dt: Optional[float] = None,
    refinement: int = 10,
    abelian: bool = False,
    picard_tol: float = 1e-12,
    picard_max: int = 50,
) -> Dict[str, Any]:
    """
    Run identical data under both coupling conventions

    For each convention the Gauss residual drift ||res(T) - res(0)|| is
    measured with dt and dt/refinement. A convention is ``consistent`` when
    the drift sits at round-off or falls at least like dt^3.5 under the
    refinement; an O(1) drift that ignores dt reveals a constraint that the
    flow does not propagate.

    Returns:
        dict: ``rows`` (one per convention) and the name of the
        ``consistent`` convention(s)
    """
    data = random_small_data(grid, s, l, eps, seed, abelian=abelian)
    dt = dt if dt is not None else T / 100.0

    def run(convention: str) -> Dict[str, Any]:
        options = DynamicsOptions(convention=convention, picard_tol=picard_tol, picard_max=picard_max)
        initial = split_from_fields(data.a0, data.a1, data.psi0, options=options)
        start = gauss_residual(initial)
        charge0 = spectral.l2_norm(reconstruct(initial).psi) ** 2
        drifts = []
        charge_drift = 0.0
        for h in (dt, dt / refinement):
            final, _ = evolve(initial, T, h, options)
            end = gauss_residual(final)
            drifts.append(spectral.l2_norm(end.field - start.field))
            charge_drift = abs(spectral.l2_norm(reconstruct(final).psi) ** 2 - charge0)
        floor = 1e-13 * (1.0 + start.scale)
        slope = math.log10(drifts[0] / drifts[1]) / math.log10(refinement) if drifts[1] > 0 and drifts[0] > 0 else float("inf")
        consistent = drifts[0] <= floor or slope >= 3.5
        logging.info(
            f"Convention {convention}: residual drift {drifts[0]:.3e} -> {drifts[1]:.3e}, "
            f"charge drift {charge_drift:.3e}"
        )
        return {
            "convention": convention,
            "residual_drift": drifts[0],
            "residual_drift_refined": drifts[1],
            "refinement_slope": slope,
            "charge_drift": charge_drift,
            "floor": floor,
            "consistent": consistent,
        }

    with ThreadPoolExecutor(max_workers=min(len(CONVENTIONS), spectral.worker_count())) as executor:
        rows = list(executor.map(run, CONVENTIONS))
    return {
        "eps": eps,
        "N": grid.N,
        "T": T,
        "dt": dt,
        "rows": rows,
        "consistent": [row["convention"] for row in rows if row["consistent"]],
    }
