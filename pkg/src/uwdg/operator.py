"""Semi-discrete ultra-weak DG operator for i u_t + u_xx + f(|u|^2) u = 0.

Moving everything but the time derivative to the right-hand side, the modal
coefficients evolve as

    dc/dt = L c + N(c),

where L collects the ultra-weak form of u_xx (second derivative on the test
function, interface coupling only through the fluxes) premultiplied by i and
the inverse of the diagonal mass matrix, and N is the pseudo-spectral
evaluation of i f(|u_h|^2) u_h.  The stencil is nearest-neighbor, so L is
periodic block tridiagonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fluxes import FluxParams
from .meshbasis import Basis, DGFunction, Mesh1D

__all__ = ["LinearOperator", "NonlinearTerm", "assemble_linear", "apply_nonlinear", "energy"]


@dataclass(frozen=True)
class LinearOperator:
    """Periodic block-tridiagonal operator on modal coefficients.

    ``sub``, ``diag``, ``super`` have shape (N, k+1, k+1); block row j acts on
    cells j-1, j, j+1 (mod N).  The two periodic corner blocks are sub[0]
    (coupling to cell N-1) and super[N-1] (coupling to cell 0).
    """

    mesh: Mesh1D
    k: int
    sub: np.ndarray
    diag: np.ndarray
    super: np.ndarray

    @property
    def n_dof(self) -> int:
        return self.mesh.n_cells * (self.k + 1)

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        """Action on a coefficient array of shape (N, k+1)."""
        up = np.roll(coeffs, -1, axis=0)
        down = np.roll(coeffs, 1, axis=0)
        return (
            np.einsum("jml,jl->jm", self.diag, coeffs)
            + np.einsum("jml,jl->jm", self.super, up)
            + np.einsum("jml,jl->jm", self.sub, down)
        )

    def as_sparse(self) -> sp.csr_matrix:
        """CSR form on the flattened (cell, mode) index."""
        n, m = self.mesh.n_cells, self.k + 1
        rows, cols, vals = [], [], []
        for j in range(n):
            for name, block in (("d", self.diag[j]), ("s", self.super[j]), ("b", self.sub[j])):
                col_cell = {"d": j, "s": (j + 1) % n, "b": (j - 1) % n}[name]
                r, c = np.nonzero(np.ones_like(block, dtype=bool))
                rows.append(j * m + r)
                cols.append(col_cell * m + c)
                vals.append(block.ravel())
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * m, n * m),
        )

    def inf_norm(self) -> float:
        return float(
            (np.abs(self.sub) + np.abs(self.diag) + np.abs(self.super)).sum(axis=2).max()
        )


def assemble_linear(p: FluxParams, mesh: Mesh1D, k: int) -> LinearOperator:
    """Assemble L for general (possibly complex) flux parameters.

    Cell j tests the ultra-weak form with its own Legendre modes; the flux at
    interface x_{j+1/2} mixes traces of cells j and j+1 with the weights

        hat{u}     = (1/2 - a2) u^- + (1/2 + a2) u^+ + b2 (u_x^+ - u_x^-)
        tilde{u_x} = (1/2 - a1) u_x^- + (1/2 + a1) u_x^+ + b1 (u^+ - u^-).
    """
    if mesh.n_cells < 3:
        raise ValueError("the interface stencil needs at least 3 cells")
    basis = Basis(k)
    m = k + 1
    n = mesh.n_cells
    a1, a2 = complex(p.alpha1), complex(p.alpha2)
    b1, b2 = complex(p.beta1), complex(p.beta2)
    hs = mesh.cell_sizes
    two_h = 2.0 / hs

    # Trace weight vectors per cell (length m): value and derivative at the ends.
    vR, vL = basis.at_right, basis.at_left
    dR = two_h[:, None] * basis.deriv_right[None, :]
    dL = two_h[:, None] * basis.deriv_left[None, :]

    # Flux weights at interface x_{j+1/2}: "own" = cell j (minus side),
    # "nxt" = cell j+1 (plus side).
    hat_own = (0.5 - a2) * vR[None, :] - b2 * dR
    hat_nxt = (0.5 + a2) * vL[None, :] + b2 * np.roll(dL, -1, axis=0)
    til_own = (0.5 - a1) * dR - b1 * vR[None, :]
    til_nxt = (0.5 + a1) * np.roll(dL, -1, axis=0) + b1 * vL[None, :]

    diag = np.zeros((n, m, m), dtype=complex)
    supr = np.zeros((n, m, m), dtype=complex)
    sub = np.zeros((n, m, m), dtype=complex)

    # Volume term: integral of u_h * v'' over the cell.
    diag += two_h[:, None, None] * basis.stiff2.T[None, :, :]

    # Right interface of cell j: -hat * v_x^- + tilde * v^-.
    diag += -np.einsum("jm,jl->jml", dR, hat_own) + np.einsum(
        "m,jl->jml", vR, til_own
    )
    supr += -np.einsum("jm,jl->jml", dR, hat_nxt) + np.einsum(
        "m,jl->jml", vR, til_nxt
    )
    # Left interface of cell j (= interface j-1): +hat * v_x^+ - tilde * v^+.
    diag += np.einsum("jm,jl->jml", dL, np.roll(hat_nxt, 1, axis=0)) - np.einsum(
        "m,jl->jml", vL, np.roll(til_nxt, 1, axis=0)
    )
    sub += np.einsum("jm,jl->jml", dL, np.roll(hat_own, 1, axis=0)) - np.einsum(
        "m,jl->jml", vL, np.roll(til_own, 1, axis=0)
    )

    # i * (mass inverse): rows scale by i (2m+1)/h_j.
    scale = 1j * (2 * np.arange(m) + 1)[None, :, None] / hs[:, None, None]
    return LinearOperator(mesh, k, sub * scale, diag * scale, supr * scale)


@dataclass(frozen=True)
class NonlinearTerm:
    """The real function f in f(|u|^2) u, evaluated pointwise at quadrature
    nodes and tested against the modal basis.  ``n_quad`` = 0 means the
    basis default of k+3 points."""

    f: Callable[[np.ndarray], np.ndarray]
    label: str = ""
    n_quad: int = 0

    def is_zero(self) -> bool:
        probe = np.array([0.0, 0.3, 1.7, 4.0])
        return bool(np.all(np.asarray(self.f(probe)) == 0.0))


def apply_nonlinear(state: DGFunction, nt: NonlinearTerm, basis: Basis | None = None) -> np.ndarray:
    """Modal residual of i f(|u_h|^2) u_h, mass-inverted.

    The h factors of the quadrature and the mass inverse cancel, leaving
    i (2m+1)/2 * sum_q w_q f(|u|^2) u P_m(xi_q) per cell.
    """
    if basis is None:
        basis = Basis(state.k, nt.n_quad)
    vals = state.cell_values(basis)
    g = np.asarray(nt.f(np.abs(vals) ** 2)) * vals
    tested = g @ (basis.vander * basis.quad_weights[:, None])
    return 1j * (2 * np.arange(state.k + 1) + 1) / 2 * tested


def energy(state: DGFunction) -> float:
    """Discrete L2 energy: integral of |u_h|^2 via the diagonal mass matrix."""
    w = state.mesh.cell_sizes[:, None] / (2 * np.arange(state.k + 1) + 1)[None, :]
    return float((w * np.abs(state.coeffs) ** 2).sum())
