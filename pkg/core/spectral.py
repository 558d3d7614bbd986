"""
Fourier-multiplier layer for the Yang-Mills-Dirac workbench
Transforms, fractional derivatives, Riesz transforms, Hodge and Dirac
projections, Sobolev norms and 2x zero-padded (alias-free) products

Coefficients use scipy.fft's ``norm="forward"`` so that
u(x) = sum_xi c_xi exp(i xi.x) and ||u||_{L2}^2 = L^3 sum |c_xi|^2.
"""

import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np
import scipy.fft as sfft

from core.lattice import Grid, LatticeField, LieScalarField, LieVectorField, SpinorField
from core.liealg import ALPHA

AXES = (-3, -2, -1)

ABS_GRAD = "abs_grad"
BRACKET_GRAD = "bracket_grad"
RIESZ = "riesz"
MODIFIED_RIESZ = "modified_riesz"
LERAY = "leray"
CURL_FREE = "curl_free"
PARTIAL = "partial"
KINDS = (ABS_GRAD, BRACKET_GRAD, RIESZ, MODIFIED_RIESZ, LERAY, CURL_FREE, PARTIAL)

# Multiplier kinds perturbed by the fault-injection hook
_CORRUPTED: Dict[str, float] = {}

FieldLike = Union[np.ndarray, LatticeField]


def worker_count() -> int:
    """Worker cap from YMD_THREADS, defaulting to the CPU count"""
    value = os.environ.get("YMD_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logging.warning(f"Ignoring invalid YMD_THREADS value {value!r}")
    return os.cpu_count() or 1


def forward(values: np.ndarray) -> np.ndarray:
    return sfft.fftn(values, axes=AXES, norm="forward", workers=worker_count())


def inverse(coeffs: np.ndarray) -> np.ndarray:
    return sfft.ifftn(coeffs, axes=AXES, norm="forward", workers=worker_count())


def band_limit(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Zero the Nyquist planes of a coefficient array (returns a copy)"""
    out = np.array(coeffs, dtype=complex)
    out[..., grid.nyquist_mask] = 0.0
    return out


def _unwrap(field: FieldLike, grid: Optional[Grid]) -> Tuple[np.ndarray, Grid]:
    if isinstance(field, LatticeField):
        if grid is not None:
            grid.require_same(field.grid)
        return field.data, field.grid
    if grid is None:
        raise ValueError("A grid is required when passing a bare array")
    return np.asarray(field), grid


def _rewrap(template: FieldLike, data: np.ndarray) -> FieldLike:
    if isinstance(template, LatticeField):
        return template.like(data)
    return data


def _spatial(arr: np.ndarray, ndim: int) -> np.ndarray:
    """Reshape a (3, N, N, N) table to broadcast against a (3, ..., N, N, N) array"""
    return arr.reshape(arr.shape[:1] + (1,) * (ndim - 4) + arr.shape[1:])


@dataclass(frozen=True)
class MultiplierSpec:
    """
    A Fourier multiplier

    kind is one of ``abs_grad`` (|grad|^alpha), ``bracket_grad``
    (<grad>^alpha), ``riesz`` (R_j, symbol i xi_j/|xi|), ``modified_riesz``
    (R^j_sign, symbol -sign xi_j/|xi|), ``leray`` and ``curl_free`` (entry
    (j, k) of the df / cf projector) or ``partial`` (d_j). Component indices
    count from 0.
    """

    kind: str
    alpha: float = 1.0
    j: int = 0
    k: int = 0
    sign: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown multiplier kind {self.kind!r}")
        if self.j not in (0, 1, 2) or self.k not in (0, 1, 2):
            raise ValueError("Component indices must be 0, 1 or 2")
        if self.sign not in (1, -1):
            raise ValueError("Multiplier sign must be +1 or -1")
        if not np.isfinite(self.alpha):
            raise ValueError("Multiplier exponent must be finite")

    @property
    def preserves_reality(self) -> bool:
        """True when symbol(-xi) = conj(symbol(xi)), so real fields stay real"""
        return self.kind != MODIFIED_RIESZ

    def symbol(self, grid: Grid) -> np.ndarray:
        base = _base_symbol(self, grid)
        factor = _CORRUPTED.get(self.kind)
        if factor is not None:
            return base * factor
        return base


@lru_cache(maxsize=128)
def _base_symbol(spec: MultiplierSpec, grid: Grid) -> np.ndarray:
    kind = spec.kind
    if kind == ABS_GRAD:
        if spec.alpha == 0:
            symbol = np.ones(grid.shape)
        else:
            symbol = np.where(grid.kabs > 0, grid.kabs_safe**spec.alpha, 0.0)
    elif kind == BRACKET_GRAD:
        symbol = grid.kbracket**spec.alpha
    elif kind == RIESZ:
        symbol = 1j * grid.khat[spec.j]
    elif kind == MODIFIED_RIESZ:
        symbol = -spec.sign * grid.khat[spec.j]
    elif kind == LERAY:
        symbol = float(spec.j == spec.k) - grid.khat[spec.j] * grid.khat[spec.k]
    elif kind == CURL_FREE:
        symbol = grid.khat[spec.j] * grid.khat[spec.k]
    else:
        symbol = 1j * grid.k[spec.j]
    symbol = np.asarray(symbol, dtype=complex)
    symbol.flags.writeable = False
    return symbol


@contextmanager
def corrupted_multiplier(kind: str, factor: float = 1.0 + 1e-6) -> Iterator[None]:
    """Test hook: scale every symbol of one multiplier kind while active"""
    if kind not in KINDS:
        raise ValueError(f"Unknown multiplier kind {kind!r}")
    _CORRUPTED[kind] = factor
    logging.warning(f"Multiplier {kind} corrupted by factor {factor!r}")
    try:
        yield
    finally:
        _CORRUPTED.pop(kind, None)


def apply_multiplier(spec: MultiplierSpec, field: FieldLike, grid: Optional[Grid] = None) -> FieldLike:
    """
    Multiply every Fourier mode of a field by the symbol of ``spec``

    Args:
        spec: The multiplier
        field: LatticeField or array whose last three axes are the grid
        grid: Required when ``field`` is a bare array

    Returns:
        Same container type as ``field``; real when the input is real and
        the symbol preserves reality
    """
    data, grid = _unwrap(field, grid)
    result = inverse(forward(data) * spec.symbol(grid))
    if np.isrealobj(data) and spec.preserves_reality:
        result = result.real
    return _rewrap(field, result)


def bracket_symbol(grid: Grid) -> np.ndarray:
    """<xi> = (1 + |xi|^2)^{1/2} as a real array"""
    return MultiplierSpec(BRACKET_GRAD).symbol(grid).real


# Vector calculus on coefficient arrays; the spatial index is axis 0

def gradient_coeffs(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return 1j * _spatial(grid.k, coeffs.ndim + 1) * coeffs[None]


def divergence_coeffs(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return np.sum(1j * _spatial(grid.k, coeffs.ndim) * coeffs, axis=0)


def curl_coeffs(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    ik = 1j * _spatial(grid.k, coeffs.ndim)
    out = np.empty_like(coeffs, dtype=complex)
    out[0] = ik[1] * coeffs[2] - ik[2] * coeffs[1]
    out[1] = ik[2] * coeffs[0] - ik[0] * coeffs[2]
    out[2] = ik[0] * coeffs[1] - ik[1] * coeffs[0]
    return out


def _projector_symbols(kind: str, grid: Grid) -> np.ndarray:
    # (3, 3, N, N, N) table of the df or cf projector entries
    return np.stack([np.stack([MultiplierSpec(kind, j=j, k=k).symbol(grid) for k in range(3)]) for j in range(3)])


def _apply_projector(kind: str, coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return np.einsum("jkxyz,k...xyz->j...xyz", _projector_symbols(kind, grid), coeffs)


def curl_free_coeffs(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """cf part: xi_j xi_k / |xi|^2 applied to a vector, 0 at xi = 0"""
    return _apply_projector(CURL_FREE, coeffs, grid)


def leray_coeffs(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """df part (Leray projection); the mean is kept"""
    return _apply_projector(LERAY, coeffs, grid)


def inverse_laplacian_coeffs(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """|grad|^{-2}, zero mode sent to 0"""
    return np.where(grid.kabs > 0, coeffs / grid.kabs_safe**2, 0.0)


def divergence(field: LieVectorField) -> LieScalarField:
    coeffs = divergence_coeffs(forward(field.data), field.grid)
    return LieScalarField(inverse(coeffs).real, field.grid)


def curl(field: LieVectorField) -> LieVectorField:
    return field.like(inverse(curl_coeffs(forward(field.data), field.grid)).real)


def gradient(field: LieScalarField) -> LieVectorField:
    coeffs = gradient_coeffs(forward(field.data), field.grid)
    return LieVectorField(inverse(coeffs).real, field.grid)


def hodge_split(field: LieVectorField) -> Tuple[LieVectorField, LieVectorField]:
    """
    Split A into divergence-free and curl-free parts

    The zero mode belongs to the divergence-free part, so the two add back
    to A up to round-off.
    """
    coeffs = forward(field.data)
    df = leray_coeffs(coeffs, field.grid)
    cf = curl_free_coeffs(coeffs, field.grid)
    is_real = np.isrealobj(field.data)
    df_values, cf_values = inverse(df), inverse(cf)
    if is_real:
        df_values, cf_values = df_values.real, cf_values.real
    return field.like(df_values), field.like(cf_values)


# Dirac half-wave projections

@lru_cache(maxsize=16)
def _direction_alpha(grid: Grid) -> np.ndarray:
    # (xi/|xi|).alpha per frequency, (4, 4, N, N, N)
    table = np.einsum("jxyz,jst->stxyz", grid.khat, ALPHA)
    table.flags.writeable = False
    return table


def project_coeffs(sign: int, coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Apply Pi(sign xi) to spinor coefficients (..., 4, N, N, N)"""
    rotated = np.einsum("stxyz,...txyz->...sxyz", _direction_alpha(grid), coeffs)
    out = 0.5 * (coeffs + sign * rotated)
    # Pi_+(0) = I, Pi_-(0) = 0
    out[..., 0, 0, 0] = coeffs[..., 0, 0, 0] if sign > 0 else 0.0
    return out


def dirac_matrix(xi: np.ndarray) -> np.ndarray:
    """xi_j alpha^j for one frequency vector"""
    return np.einsum("j,jst->st", np.asarray(xi, dtype=float), ALPHA)


@dataclass(frozen=True)
class DiracProjector:
    """Pi(sign xi) = (I + sign xi.alpha/|xi|)/2, with Pi_+(0) = I and Pi_-(0) = 0"""

    sign: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("Projector sign must be +1 or -1")

    def matrix(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        norm = float(np.linalg.norm(xi))
        if norm == 0.0:
            return np.eye(4, dtype=complex) if self.sign > 0 else np.zeros((4, 4), dtype=complex)
        return 0.5 * (np.eye(4) + self.sign * dirac_matrix(xi) / norm)

    def apply(self, psi: SpinorField) -> SpinorField:
        return dirac_project(self.sign, psi)


def dirac_project(sign: int, psi: SpinorField) -> SpinorField:
    return psi.like(inverse(project_coeffs(sign, forward(psi.data), psi.grid)))


# Dealiased products

class Dealiaser:
    """
    2x zero padding between the N grid and a 2N fine grid

    ``pad`` turns band-limited coefficients into fine-grid values; products
    of up to three padded fields are alias-free on the retained band, and
    ``truncate`` brings fine values back to coarse coefficients (Nyquist
    planes zeroed).
    """

    def __init__(self, grid: Grid) -> None:
        self.grid = grid
        N = grid.N
        self.fine_N = 2 * N
        half = N // 2
        self._coarse_index = np.concatenate([np.arange(0, half), np.arange(half + 1, N)])
        self._fine_index = np.concatenate([np.arange(0, half), np.arange(self.fine_N - half + 1, self.fine_N)])
        self._coarse_ix = (Ellipsis,) + np.ix_(self._coarse_index, self._coarse_index, self._coarse_index)
        self._fine_ix = (Ellipsis,) + np.ix_(self._fine_index, self._fine_index, self._fine_index)

    @property
    def fine_shape(self) -> Tuple[int, int, int]:
        return (self.fine_N,) * 3

    def pad(self, coeffs: np.ndarray, real: bool = False) -> np.ndarray:
        fine = np.zeros(coeffs.shape[:-3] + self.fine_shape, dtype=complex)
        fine[self._fine_ix] = coeffs[self._coarse_ix]
        values = sfft.ifftn(fine, axes=AXES, norm="forward", workers=worker_count())
        return values.real if real else values

    def truncate(self, values: np.ndarray) -> np.ndarray:
        coeffs = sfft.fftn(values, axes=AXES, norm="forward", workers=worker_count())
        out = np.zeros(values.shape[:-3] + self.grid.shape, dtype=complex)
        out[self._coarse_ix] = coeffs[self._fine_ix]
        return out


@lru_cache(maxsize=16)
def get_dealiaser(grid: Grid) -> Dealiaser:
    return Dealiaser(grid)


def dealiased_product(f: FieldLike, g: FieldLike, grid: Optional[Grid] = None) -> np.ndarray:
    """
    Pointwise product f*g through the padded grid

    Leading component axes broadcast against each other. Returns a bare
    array, real when both factors are real.
    """
    f_data, grid = _unwrap(f, grid)
    g_data, _ = _unwrap(g, grid)
    dealias = get_dealiaser(grid)
    product = dealias.pad(forward(f_data)) * dealias.pad(forward(g_data))
    result = inverse(dealias.truncate(product))
    if np.isrealobj(f_data) and np.isrealobj(g_data):
        result = result.real
    return result


def dealiased_triple(f: FieldLike, g: FieldLike, h: FieldLike, grid: Optional[Grid] = None) -> np.ndarray:
    f_data, grid = _unwrap(f, grid)
    g_data, _ = _unwrap(g, grid)
    h_data, _ = _unwrap(h, grid)
    dealias = get_dealiaser(grid)
    product = dealias.pad(forward(f_data)) * dealias.pad(forward(g_data)) * dealias.pad(forward(h_data))
    result = inverse(dealias.truncate(product))
    if all(np.isrealobj(x) for x in (f_data, g_data, h_data)):
        result = result.real
    return result


# Norms

def sobolev_norm_coeffs(coeffs: np.ndarray, grid: Grid, s: float) -> float:
    weight = grid.kbracket ** (2.0 * s)
    return float(np.sqrt(grid.volume * np.sum(weight * np.abs(coeffs) ** 2)))


def sobolev_norm(field: FieldLike, s: float, grid: Optional[Grid] = None) -> float:
    """(L^3 sum <xi>^{2s} |c_xi|^2)^{1/2} summed over all components"""
    data, grid = _unwrap(field, grid)
    return sobolev_norm_coeffs(forward(data), grid, s)


def l2_norm(field: FieldLike, grid: Optional[Grid] = None) -> float:
    return sobolev_norm(field, 0.0, grid)


def physical_l2_norm(field: FieldLike, grid: Optional[Grid] = None) -> float:
    """L2 norm from grid values (the space side of Parseval)"""
    data, grid = _unwrap(field, grid)
    return float(np.sqrt(grid.dx**3 * np.sum(np.abs(data) ** 2)))
