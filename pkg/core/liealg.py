"""
Lie algebra utilities for the Yang-Mills-Dirac workbench
Exact su(2)/SU(2) arithmetic and the Dirac matrix constants

The algebra basis is T_a = -(i/2) sigma_a, so [T_a, T_b] = eps_abc T_c and
tr(T_a T_b) = -delta_ab / 2. Point values are LieElement / GroupElement;
lattice helpers work on arrays whose leading axis holds the three
coefficients (or whose trailing two axes hold a 2x2 matrix).
"""

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from core.errors import LieAlgebraError

PAPER = "paper"
PHYSICS = "physics"
CONVENTIONS = (PAPER, PHYSICS)

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
GENERATORS = -0.5j * SIGMA
TAU = 0.5 * SIGMA
IDENTITY = np.eye(2, dtype=complex)

ALGEBRA_TOL = 1e-12

# Products of more than this many group factors get projected back to SU(2)
RENORMALIZE_EVERY = 8


def _matrix_to_coeffs(matrix: np.ndarray) -> np.ndarray:
    # a^b = -2 tr(T_b M)
    return np.real(-2.0 * np.einsum("ij,bji->b", matrix, GENERATORS))


def _algebra_defect(matrix: np.ndarray) -> float:
    skew = np.max(np.abs(matrix + matrix.conj().T))
    trace = abs(np.trace(matrix))
    return float(max(skew, trace))


@dataclass(frozen=True, eq=False)
class LieElement:
    """A value X = a^a T_a of su(2), stored as its three real coefficients"""

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(3)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zero(cls) -> "LieElement":
        return cls(np.zeros(3))

    @classmethod
    def basis(cls, index: int) -> "LieElement":
        """The generator T_{index+1} (index counts from 0)"""
        coeffs = np.zeros(3)
        coeffs[index] = 1.0
        return cls(coeffs)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, tol: float = ALGEBRA_TOL) -> "LieElement":
        """
        Convert a 2x2 matrix back to coefficients

        Args:
            matrix: Trace-free skew-hermitian 2x2 matrix
            tol: Allowed deviation from the algebra, relative to the matrix size

        Returns:
            LieElement: The coefficient form

        Raises:
            LieAlgebraError: If the matrix is not in su(2)
        """
        matrix = np.asarray(matrix, dtype=complex)
        scale = max(1.0, float(np.max(np.abs(matrix))))
        defect = _algebra_defect(matrix)
        if defect > tol * scale:
            raise LieAlgebraError(f"Matrix is not in su(2) (defect {defect:.3e})")
        return cls(_matrix_to_coeffs(matrix))

    def matrix(self) -> np.ndarray:
        return np.tensordot(self.coeffs, GENERATORS, axes=1)

    def norm(self) -> float:
        return float(np.sqrt(killing_form(self, self)))

    def allclose(self, other: "LieElement", atol: float = 1e-13) -> bool:
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))

    def __add__(self, other: "LieElement") -> "LieElement":
        return LieElement(self.coeffs + other.coeffs)

    def __sub__(self, other: "LieElement") -> "LieElement":
        return LieElement(self.coeffs - other.coeffs)

    def __neg__(self) -> "LieElement":
        return LieElement(-self.coeffs)

    def __mul__(self, scalar: float) -> "LieElement":
        return LieElement(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"LieElement({self.coeffs.tolist()})"


@dataclass(frozen=True, eq=False)
class GroupElement:
    """An SU(2) matrix"""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex).reshape(2, 2)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(IDENTITY.copy())

    def inverse(self) -> "GroupElement":
        return GroupElement(self.matrix.conj().T)

    def unitarity_defect(self) -> float:
        """max(|U^dagger U - I|, |det U - 1|)"""
        gram = self.matrix.conj().T @ self.matrix
        return float(max(np.max(np.abs(gram - IDENTITY)), abs(np.linalg.det(self.matrix) - 1.0)))

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.matrix @ other.matrix)

    def __repr__(self) -> str:
        return f"GroupElement({self.matrix.tolist()})"


@dataclass(frozen=True, eq=False)
class StructureConstants:
    """Bracket table f^{abc} with [T_a, T_b] = f^{abc} T_c"""

    table: np.ndarray

    @classmethod
    def su2(cls) -> "StructureConstants":
        table = np.zeros((3, 3, 3))
        for a in range(3):
            for b in range(3):
                bracket = GENERATORS[a] @ GENERATORS[b] - GENERATORS[b] @ GENERATORS[a]
                table[a, b] = _matrix_to_coeffs(bracket)
        return cls(table)

    def antisymmetry_defect(self) -> float:
        return float(np.max(np.abs(self.table + np.swapaxes(self.table, 0, 1))))

    def jacobi_defect(self) -> float:
        """max |f^{abe}f^{ecd} + f^{cbe}f^{aed} + f^{dbe}f^{ace}|"""
        f = self.table
        total = (
            np.einsum("abe,ecd->abcd", f, f)
            + np.einsum("cbe,aed->abcd", f, f)
            + np.einsum("dbe,ace->abcd", f, f)
        )
        return float(np.max(np.abs(total)))


@dataclass(frozen=True, eq=False)
class DiracConstants:
    """alpha^mu = gamma^0 gamma^mu in the Dirac representation, plus the Pauli matrices"""

    alpha: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray

    @classmethod
    def standard(cls) -> "DiracConstants":
        zero = np.zeros((2, 2), dtype=complex)
        gamma = np.empty((4, 4, 4), dtype=complex)
        gamma[0] = np.block([[IDENTITY, zero], [zero, -IDENTITY]])
        for j in range(3):
            gamma[j + 1] = np.block([[zero, SIGMA[j]], [-SIGMA[j], zero]])
        alpha = np.einsum("ij,mjk->mik", gamma[0], gamma)
        return cls(alpha=alpha, gamma=gamma, sigma=SIGMA.copy())

    def anticommutator_defect(self) -> float:
        """Largest deviation from (alpha^mu)^2 = I and {alpha^j, alpha^k} = 0 (j != k)"""
        eye = np.eye(4)
        worst = 0.0
        for mu in range(4):
            worst = max(worst, np.max(np.abs(self.alpha[mu] @ self.alpha[mu] - eye)))
        for j in range(1, 4):
            for k in range(j + 1, 4):
                anti = self.alpha[j] @ self.alpha[k] + self.alpha[k] @ self.alpha[j]
                worst = max(worst, np.max(np.abs(anti)))
        return float(worst)


STRUCTURE_CONSTANTS = StructureConstants.su2()
DIRAC = DiracConstants.standard()
# Spatial alpha^1..alpha^3
ALPHA = DIRAC.alpha[1:]


def coupling_generators(convention: str) -> np.ndarray:
    """
    Matrices M_a used in the Dirac interaction A^a_k alpha^k M_a

    Args:
        convention: ``physics`` (hermitian tau_a) or ``paper`` (skew T_a)

    Returns:
        np.ndarray: (3, 2, 2) complex array
    """
    if convention == PHYSICS:
        return TAU
    if convention == PAPER:
        return GENERATORS
    raise ValueError(f"Unknown coupling convention: {convention!r} (expected one of {CONVENTIONS})")


def killing_form(x: LieElement, y: LieElement) -> float:
    # -2 tr(XY) equals the Euclidean product of coefficients in this basis
    return float(np.dot(x.coeffs, y.coeffs))


def commutator(x: LieElement, y: LieElement) -> LieElement:
    return LieElement(np.einsum("abc,a,b->c", STRUCTURE_CONSTANTS.table, x.coeffs, y.coeffs))


def exp_map(v: LieElement) -> GroupElement:
    """exp(a^a T_a) = cos(|a|/2) I - i sin(|a|/2) (a/|a|).sigma"""
    return GroupElement(group_exp_field(v.coeffs))


def adjoint(u: GroupElement, x: LieElement, tol: float = ALGEBRA_TOL) -> LieElement:
    """
    Conjugation U X U^-1

    Raises:
        LieAlgebraError: If the result left the algebra, which only happens
            for a corrupted (non-unitary) group element
    """
    conjugated = u.matrix @ x.matrix() @ np.linalg.inv(u.matrix)
    scale = max(1.0, float(np.max(np.abs(conjugated))))
    defect = _algebra_defect(conjugated)
    if defect > tol * scale:
        raise LieAlgebraError(f"Adjoint action left su(2) (defect {defect:.3e}); group element corrupted")
    return LieElement(_matrix_to_coeffs(conjugated))


def renormalize(u: GroupElement) -> GroupElement:
    """Nearest unitary via the polar factor, rescaled to unit determinant"""
    return GroupElement(renormalize_field(u.matrix))


def group_product(factors: Iterable[GroupElement]) -> GroupElement:
    """Ordered product factors[0] @ factors[1] @ ... with periodic renormalization"""
    result = IDENTITY.copy()
    count = 0
    for factor in factors:
        result = result @ factor.matrix
        count += 1
        if count % RENORMALIZE_EVERY == 0:
            result = renormalize_field(result)
    if count > RENORMALIZE_EVERY and count % RENORMALIZE_EVERY:
        result = renormalize_field(result)
    return GroupElement(result)


# Lattice forms

def lie_matrix_field(coeffs: np.ndarray) -> np.ndarray:
    """(3, *S) coefficients -> (*S, 2, 2) matrices"""
    return np.einsum("a...,aij->...ij", coeffs, GENERATORS)


def lie_coeffs_field(matrices: np.ndarray) -> np.ndarray:
    """(*S, 2, 2) matrices -> (3, *S) real coefficients"""
    return np.real(-2.0 * np.einsum("...ij,bji->b...", matrices, GENERATORS))


def lie_bracket(x: np.ndarray, y: np.ndarray, axis: int = 0) -> np.ndarray:
    """Pointwise [X, Y] on coefficient arrays; the bracket is the cross product in this basis"""
    return np.cross(x, y, axisa=axis, axisb=axis, axisc=axis)


def group_exp_field(v: np.ndarray) -> np.ndarray:
    """(3, *S) coefficients -> (*S, 2, 2) SU(2) matrices, closed form"""
    v = np.asarray(v, dtype=float)
    theta = np.sqrt(np.sum(v * v, axis=0))
    # sin(theta/2)/theta, finite at theta = 0
    half_sinc = 0.5 * np.sinc(theta / (2.0 * np.pi))
    pauli = np.einsum("a...,aij->...ij", v, SIGMA)
    return (
        np.cos(0.5 * theta)[..., None, None] * IDENTITY
        - 1j * half_sinc[..., None, None] * pauli
    )


def adjoint_field(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Site-wise U X U^dagger for U (*S, 2, 2) and X (3, *S)"""
    conjugated = u @ lie_matrix_field(x) @ np.conj(np.swapaxes(u, -1, -2))
    return lie_coeffs_field(conjugated)


def renormalize_field(u: np.ndarray) -> np.ndarray:
    """Site-wise polar projection to SU(2)"""
    left, _, right = np.linalg.svd(u)
    polar = left @ right
    det = np.linalg.det(polar)
    return polar / np.sqrt(det)[..., None, None]


def unitarity_defect_field(u: np.ndarray) -> float:
    gram = np.conj(np.swapaxes(u, -1, -2)) @ u
    det = np.linalg.det(u)
    return float(max(np.max(np.abs(gram - IDENTITY)), np.max(np.abs(det - 1.0))))


def exp_connection(v: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """
    Right-trivialised derivative (d e^V) e^{-V} in coefficients

    Uses the closed form
    dV + (1 - cos t)/t^2 [V, dV] + (t - sin t)/t^3 [V, [V, dV]] with t = |V|,
    so the derivative of exp(V) never needs a spectral derivative of the
    (non band-limited) group field.

    Args:
        v: (3, *S) coefficients of V
        dv: (3, *S) coefficients of a derivative of V

    Returns:
        np.ndarray: (3, *S) coefficients
    """
    theta = np.sqrt(np.sum(v * v, axis=0))
    small = theta < 1e-3
    safe = np.where(small, 1.0, theta)
    theta2 = theta * theta
    c1 = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    c2 = np.where(small, 1.0 / 6.0 - theta2 / 120.0, (safe - np.sin(safe)) / safe**3)
    once = lie_bracket(v, dv)
    twice = lie_bracket(v, once)
    return dv + c1 * once + c2 * twice


def bilinear_current(left: np.ndarray, right: np.ndarray, generators: np.ndarray = TAU):
    """
    Site-wise <left, alpha^nu M_a right> summed over colours

    Args:
        left, right: (2, 4, *S) spinor values (colour, spinor index)
        generators: (3, 2, 2) colour matrices M_a

    Returns:
        tuple: (density (3, *S), spatial (3, 3, *S)) complex, spatial[k, a]
        pairing with alpha^{k+1}
    """
    conj = np.conj(left)
    density = np.einsum("cs...,acd,ds...->a...", conj, generators, right)
    spatial = np.einsum("cs...,kst,acd,dt...->ka...", conj, ALPHA, generators, right, optimize=True)
    return density, spatial


def dirac_coupling(potential: np.ndarray, psi: np.ndarray, generators: np.ndarray) -> np.ndarray:
    """Site-wise A^a_k alpha^k M_a psi for A (3, 3, *S) and psi (2, 4, *S)"""
    return np.einsum("ka...,acd,kst,dt...->cs...", potential, generators, ALPHA, psi, optimize=True)
