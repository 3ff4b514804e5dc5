"""Periodic 1D meshes, Legendre modal basis and Gauss quadrature.

Discrete fields are stored cell by cell in the Legendre modal basis: on cell
I_j = (x_{j-1/2}, x_{j+1/2}) with midpoint x_j and size h_j,

    u_h(x)|_{I_j} = sum_l coeffs[j, l] * P_l(xi),   xi = 2*(x - x_j)/h_j,

so the mass matrix is diagonal with entries h_j/(2l+1).  Interface values are
taken as one-sided limits with periodic wrap-around: interface N+1/2 is the
same point as interface 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import MeshError

__all__ = [
    "Mesh1D",
    "Basis",
    "DGFunction",
    "legendre_eval",
    "legendre_deriv",
    "legendre_table",
    "gauss_nodes",
]


def legendre_eval(l: int, xi: float) -> float:
    """P_l(xi) by the three-term recurrence.

    Endpoint identities: P_l(+-1) = (+-1)^l.
    """
    if l < 0:
        raise ValueError("Legendre degree must be >= 0")
    if l == 0:
        return 1.0
    p_prev, p = 1.0, float(xi)
    for i in range(2, l + 1):
        p_prev, p = p, ((2 * i - 1) * xi * p - (i - 1) * p_prev) / i
    return p


def legendre_deriv(l: int, xi: float) -> float:
    """P_l'(xi), using P_l' = P_{l-2}' + (2l-1) P_{l-1}.

    This form stays finite at xi = +-1, where P_l'(+-1) = (+-1)^{l-1} l(l+1)/2.
    """
    if l < 0:
        raise ValueError("Legendre degree must be >= 0")
    d = 0.0
    for i in range(l - 1, -1, -2):
        d += (2 * i + 1) * legendre_eval(i, xi)
    return d


def legendre_table(k: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of P_0..P_k at the points ``xi``.

    Returns arrays of shape (len(xi), k+1); column l holds P_l / P_l'.
    """
    xi = np.asarray(xi, dtype=float)
    vals = np.empty(xi.shape + (k + 1,))
    ders = np.empty_like(vals)
    vals[..., 0] = 1.0
    ders[..., 0] = 0.0
    if k >= 1:
        vals[..., 1] = xi
        ders[..., 1] = 1.0
    for l in range(2, k + 1):
        vals[..., l] = ((2 * l - 1) * xi * vals[..., l - 1] - (l - 1) * vals[..., l - 2]) / l
        ders[..., l] = ders[..., l - 2] + (2 * l - 1) * vals[..., l - 1]
    return vals, ders


def gauss_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1], exact to degree 2n-1."""
    if n < 1:
        raise ValueError("quadrature rule needs at least one node")
    return leggauss(n)


@dataclass(frozen=True)
class Mesh1D:
    """Periodic partition of [a, b] into N cells.

    ``interfaces`` holds the N+1 points x_{1/2} < ... < x_{N+1/2} with
    x_{1/2} = a and x_{N+1/2} = b; ``sigma`` bounds the regularity ratio
    h / min_j h_j.
    """

    a: float
    b: float
    interfaces: np.ndarray
    cell_sizes: np.ndarray
    h: float
    sigma: float

    def __post_init__(self):
        x = self.interfaces
        if x.ndim != 1 or len(x) < 3:
            raise MeshError("mesh needs at least 2 cells")
        if not (np.all(np.diff(x) > 0) and x[0] == self.a and x[-1] == self.b):
            raise MeshError("interfaces must increase strictly from a to b")
        hs = self.cell_sizes
        if len(hs) != len(x) - 1 or not np.allclose(hs, np.diff(x), rtol=1e-13, atol=0):
            raise MeshError("cell_sizes inconsistent with interfaces")
        if self.h / hs.min() > self.sigma * (1 + 1e-12):
            raise MeshError("mesh violates its own regularity bound")

    @property
    def n_cells(self) -> int:
        return len(self.cell_sizes)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.interfaces[:-1] + self.interfaces[1:])

    @property
    def is_uniform(self) -> bool:
        hs = self.cell_sizes
        return bool(np.allclose(hs, hs[0], rtol=1e-12, atol=0))

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "Mesh1D":
        """Uniform mesh with h_j = (b - a)/n for all j."""
        if n < 2:
            raise MeshError("need at least 2 cells")
        if not b > a:
            raise MeshError("need b > a")
        x = np.linspace(a, b, n + 1)
        hs = np.diff(x)
        return cls(a, b, x, hs, float(hs.max()), 1.0)

    @classmethod
    def graded(cls, a: float, b: float, n: int, ratio: float) -> "Mesh1D":
        """Two-size alternating mesh with max h_j / min h_j = ratio."""
        if ratio < 1:
            raise MeshError("ratio must be >= 1")
        if n < 2:
            raise MeshError("need at least 2 cells")
        if not b > a:
            raise MeshError("need b > a")
        n_small = (n + 1) // 2
        n_big = n // 2
        small = (b - a) / (n_small + ratio * n_big)
        sizes = np.empty(n)
        sizes[0::2] = small
        sizes[1::2] = ratio * small
        x = np.concatenate([[a], a + np.cumsum(sizes)])
        x[-1] = b
        return cls(a, b, x, np.diff(x), float(sizes.max()), float(ratio))


@dataclass(frozen=True)
class Basis:
    """Legendre modal basis of degree k with its Gauss rule and lookup tables.

    Degree 0 is rejected: the ultra-weak scheme is inconsistent for k = 0.
    The default rule has k+3 points, exact to degree 2k+5, which covers every
    bilinear term in the discretization and keeps quadrature error well below
    the O(h^{k+1}) signals being measured.

    Precomputed tables (all set in ``__post_init__``):
      ``vander``/``dvander``  P_l and P_l' at the quadrature nodes, (n_quad, k+1)
      ``at_right``/``at_left``        P_l(+1), P_l(-1)
      ``deriv_right``/``deriv_left``  P_l'(+1), P_l'(-1)
      ``stiff2``                      integrals of P_l * P_m'' over [-1, 1], (k+1, k+1), [l, m]
    """

    k: int
    n_quad: int = 0
    quad_nodes: np.ndarray = field(init=False, repr=False)
    quad_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("polynomial degree must be >= 1")
        n = self.n_quad if self.n_quad else self.k + 3
        nodes, weights = gauss_nodes(n)
        object.__setattr__(self, "n_quad", n)
        object.__setattr__(self, "quad_nodes", nodes)
        object.__setattr__(self, "quad_weights", weights)
        vander, dvander = legendre_table(self.k, nodes)
        object.__setattr__(self, "vander", vander)
        object.__setattr__(self, "dvander", dvander)
        vp, dp = legendre_table(self.k, np.array([1.0]))
        vm, dm = legendre_table(self.k, np.array([-1.0]))
        object.__setattr__(self, "at_right", vp[0])
        object.__setattr__(self, "at_left", vm[0])
        object.__setattr__(self, "deriv_right", dp[0])
        object.__setattr__(self, "deriv_left", dm[0])
        # d2 table by recurrence P_l'' = P_{l-2}'' + (2l-1) P_{l-1}'
        d2 = np.zeros_like(vander)
        for l in range(2, self.k + 1):
            d2[:, l] = d2[:, l - 2] + (2 * l - 1) * dvander[:, l - 1]
        stiff2 = (vander * weights[:, None]).T @ d2
        object.__setattr__(self, "stiff2", stiff2)

    @property
    def mass_diag(self) -> np.ndarray:
        """Reference-cell mass diagonal 2/(2l+1); multiply by h_j/2 per cell."""
        return 2.0 / (2 * np.arange(self.k + 1) + 1)


@dataclass(frozen=True)
class DGFunction:
    """Piecewise polynomial of degree k with complex modal coefficients.

    ``coeffs`` has shape (N, k+1): row j holds the modes of cell I_j.
    """

    mesh: Mesh1D
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.mesh.n_cells, self.k + 1):
            raise ValueError(
                f"coefficient array {self.coeffs.shape} does not match "
                f"({self.mesh.n_cells}, {self.k + 1})"
            )

    def evaluate(self, x) -> complex | np.ndarray:
        """Value of the field at point(s) x in [a, b].

        On interfaces the limit from the right cell is returned (from the
        left cell at x = b, which is the same periodic point as x = a).
        """
        xa = np.asarray(x, dtype=float)
        scalar = xa.ndim == 0
        xa = np.atleast_1d(xa)
        if np.any(xa < self.mesh.a - 1e-12) or np.any(xa > self.mesh.b + 1e-12):
            raise ValueError("evaluation point outside the domain")
        j = np.clip(
            np.searchsorted(self.mesh.interfaces, xa, side="right") - 1,
            0,
            self.mesh.n_cells - 1,
        )
        xi = 2 * (xa - self.mesh.centers[j]) / self.mesh.cell_sizes[j]
        vals, _ = legendre_table(self.k, np.clip(xi, -1.0, 1.0))
        out = np.einsum("pl,pl->p", self.coeffs[j], vals)
        return out[0] if scalar else out

    def traces(self, j: int) -> tuple[complex, complex, complex, complex]:
        """One-sided limits (u^-, u^+, u_x^-, u_x^+) at interface x_{j+1/2}.

        Index j runs over 0..N (interface 0 is x_{1/2}); wrap is periodic, so
        the minus trace at interface 0 comes from the last cell.
        """
        n = self.mesh.n_cells
        if not 0 <= j <= n:
            raise ValueError("interface index out of range")
        jm = (j - 1) % n   # cell to the left of x_{j+1/2} when j counts interfaces 0..N
        jp = j % n
        vp, dp = legendre_table(self.k, np.array([1.0]))
        vm, dm = legendre_table(self.k, np.array([-1.0]))
        um = self.coeffs[jm] @ vp[0]
        up = self.coeffs[jp] @ vm[0]
        uxm = self.coeffs[jm] @ dp[0] * (2 / self.mesh.cell_sizes[jm])
        uxp = self.coeffs[jp] @ dm[0] * (2 / self.mesh.cell_sizes[jp])
        return um, up, uxm, uxp

    def interface_traces(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Traces at all N interfaces x_{j+1/2}, j = 0..N-1, vectorized.

        Entry j holds the limits at x_{j+1/2}: minus from cell j, plus from
        cell (j+1) mod N.
        """
        vp, dp = legendre_table(self.k, np.array([1.0]))
        vm, dm = legendre_table(self.k, np.array([-1.0]))
        hs = self.mesh.cell_sizes
        um = self.coeffs @ vp[0]
        uxm = (self.coeffs @ dp[0]) * (2 / hs)
        up = np.roll(self.coeffs @ vm[0], -1)
        uxp = np.roll((self.coeffs @ dm[0]) * (2 / hs), -1)
        return um, up, uxm, uxp

    def cell_values(self, basis: Basis) -> np.ndarray:
        """Field values at the basis quadrature nodes, shape (N, n_quad)."""
        return self.coeffs @ basis.vander.T

    def quad_points(self, basis: Basis) -> np.ndarray:
        """Physical coordinates of the quadrature nodes, shape (N, n_quad)."""
        return (
            self.mesh.centers[:, None]
            + 0.5 * self.mesh.cell_sizes[:, None] * basis.quad_nodes[None, :]
        )

    def __sub__(self, other: "DGFunction") -> "DGFunction":
        if other.mesh is not self.mesh and not np.array_equal(
            other.mesh.interfaces, self.mesh.interfaces
        ):
            raise ValueError("fields live on different meshes")
        if other.k != self.k:
            raise ValueError("fields have different degrees")
        return DGFunction(self.mesh, self.k, self.coeffs - other.coeffs)

    @classmethod
    def zero(cls, mesh: Mesh1D, k: int) -> "DGFunction":
        return cls(mesh, k, np.zeros((mesh.n_cells, k + 1), dtype=complex))
