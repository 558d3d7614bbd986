"""
Periodic grid on the 3-torus [0, L)^3 and the lattice field containers
Holds the frequency tables shared by every spectral operator
"""

import math
from typing import Optional, Tuple

import numpy as np

from core.errors import GridMismatchError


class Grid:
    """
    N^3 collocation grid with box length L

    Frequencies are xi = (2 pi / L) m with m in {-N/2, ..., N/2 - 1}, in FFT
    order. The Nyquist plane m = -N/2 carries no content and its effective
    frequency is 0 in every symbol.
    """

    def __init__(self, N: int, L: float = 2.0 * math.pi) -> None:
        if int(N) != N or N < 8 or N & (N - 1):
            raise ValueError(f"Grid size must be a power of two >= 8, got {N}")
        if not (L > 0 and math.isfinite(L)):
            raise ValueError(f"Box length must be positive, got {L}")
        self.N = int(N)
        self.L = float(L)
        self.shape: Tuple[int, int, int] = (self.N, self.N, self.N)
        self.volume = self.L**3
        self.dx = self.L / self.N

        self.mode_index = np.fft.fftfreq(self.N, d=1.0 / self.N).astype(int)
        self.nyquist_1d = self.mode_index == -(self.N // 2)
        k1 = (2.0 * math.pi / self.L) * self.mode_index
        k1[self.nyquist_1d] = 0.0
        self.k1 = k1

        self.k = np.array(np.meshgrid(k1, k1, k1, indexing="ij"))
        self.kabs = np.sqrt(np.sum(self.k**2, axis=0))
        self.kbracket = np.sqrt(1.0 + self.kabs**2)
        ny = self.nyquist_1d
        self.nyquist_mask = ny[:, None, None] | ny[None, :, None] | ny[None, None, :]
        self.band_mask = ~self.nyquist_mask

        # Unit frequency directions, 0 at xi = 0
        self.kabs_safe = np.where(self.kabs > 0, self.kabs, 1.0)
        self.khat = self.k / self.kabs_safe
        self.zero_mode = (0, 0, 0)

    @property
    def points(self) -> np.ndarray:
        """(3, N, N, N) coordinates of the collocation points"""
        x = np.arange(self.N) * self.dx
        return np.array(np.meshgrid(x, x, x, indexing="ij"))

    @property
    def max_mode(self) -> int:
        """Largest retained integer wavenumber per axis"""
        return self.N // 2 - 1

    def require_same(self, other: "Grid") -> None:
        if self != other:
            raise GridMismatchError(f"Grid mismatch: {self} vs {other}")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and self.N == other.N and self.L == other.L

    def __hash__(self) -> int:
        return hash((self.N, self.L))

    def __repr__(self) -> str:
        return f"Grid(N={self.N}, L={self.L!r})"


class LatticeField:
    """
    Component-valued lattice function on a Grid

    ``data`` has shape ``component_shape + grid.shape``. Subclasses fix the
    component layout; arithmetic checks that both operands share a grid.
    """

    component_shape: Tuple[int, ...] = ()
    complex_valued = False

    def __init__(self, data: np.ndarray, grid: Grid) -> None:
        data = np.asarray(data)
        if self.complex_valued:
            data = data.astype(complex, copy=False)
        expected = self.component_shape + grid.shape
        if data.shape != expected:
            raise GridMismatchError(
                f"{type(self).__name__} expects shape {expected}, got {data.shape}"
            )
        self.data = data
        self.grid = grid

    @classmethod
    def zeros(cls, grid: Grid, dtype: Optional[type] = None) -> "LatticeField":
        if dtype is None:
            dtype = complex if cls.complex_valued else float
        return cls(np.zeros(cls.component_shape + grid.shape, dtype=dtype), grid)

    def like(self, data: np.ndarray) -> "LatticeField":
        """Same container type and grid, new data"""
        return type(self)(data, self.grid)

    def copy(self) -> "LatticeField":
        return self.like(self.data.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def _check(self, other: "LatticeField") -> None:
        if not isinstance(other, LatticeField) or other.component_shape != self.component_shape:
            raise TypeError(f"Cannot combine {type(self).__name__} with {type(other).__name__}")
        self.grid.require_same(other.grid)

    def __add__(self, other: "LatticeField") -> "LatticeField":
        self._check(other)
        return self.like(self.data + other.data)

    def __sub__(self, other: "LatticeField") -> "LatticeField":
        self._check(other)
        return self.like(self.data - other.data)

    def __neg__(self) -> "LatticeField":
        return self.like(-self.data)

    def __mul__(self, scalar: complex) -> "LatticeField":
        return self.like(self.data * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"{type(self).__name__}(grid={self.grid!r}, max_abs={self.max_abs():.3e})"


class LieScalarField(LatticeField):
    """su(2)-valued scalar: 3 Lie coefficients per site"""

    component_shape = (3,)


class LieVectorField(LatticeField):
    """su(2)-valued spatial vector: data[j, a] is the T_a coefficient of A_{j+1}"""

    component_shape = (3, 3)

    @property
    def real(self) -> "LieVectorField":
        return self.like(np.real(self.data))


class SpinorField(LatticeField):
    """Two colour components of a Dirac spinor: data[c, s] is colour c, spinor index s"""

    component_shape = (2, 4)
    complex_valued = True


# Storage order of the spatial curvature components F_ij, i < j
CURVATURE_PAIRS = ((0, 1), (0, 2), (1, 2))


class CurvatureField:
    """
    Curvature in temporal gauge

    ``spatial`` is (3, 3, N, N, N) holding F_12, F_13, F_23 (then the Lie
    index); ``electric`` holds F_j0 = -dA_j/dt in the LieVectorField layout.
    """

    def __init__(self, spatial: np.ndarray, electric: np.ndarray, grid: Grid) -> None:
        expected = (3, 3) + grid.shape
        if spatial.shape != expected or electric.shape != expected:
            raise GridMismatchError(f"CurvatureField expects components of shape {expected}")
        self.spatial = spatial
        self.electric = electric
        self.grid = grid

    def component(self, i: int, j: int) -> np.ndarray:
        """F_ij for spatial indices 0..2, antisymmetric by construction"""
        if i == j:
            return np.zeros((3,) + self.grid.shape)
        if i < j:
            return self.spatial[CURVATURE_PAIRS.index((i, j))]
        return -self.spatial[CURVATURE_PAIRS.index((j, i))]
