import math

import numpy as np
import pytest

from uwdg.fluxes import FluxParams
from uwdg.meshbasis import Basis, DGFunction, Mesh1D
from uwdg.operator import NonlinearTerm, apply_nonlinear, assemble_linear, energy
from uwdg.projection import SmoothFunction, l2_project, measure_error, project_star

TWO_PI = 2 * math.pi


def mass_weights(mesh, k):
    return mesh.cell_sizes[:, None] / (2 * np.arange(k + 1) + 1)[None, :]


def random_fields(n, k, count, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(count, n, k + 1)) + 1j * rng.normal(size=(count, n, k + 1))


class TestAssembly:
    def test_rejects_tiny_mesh(self):
        mesh = Mesh1D.uniform(0, 1, 2)
        with pytest.raises(ValueError):
            assemble_linear(FluxParams.real(0, 0, 0), mesh, 1)

    def test_stencil_locality(self):
        mesh = Mesh1D.uniform(0, TWO_PI, 10)
        L = assemble_linear(FluxParams.real(0.25, 1.0, 1.0), mesh, 2)
        dense = L.as_sparse().toarray()
        m = 3
        for j in range(10):
            for i in range(10):
                block = dense[j * m : (j + 1) * m, i * m : (i + 1) * m]
                if min((j - i) % 10, (i - j) % 10) > 1:
                    assert np.abs(block).max() == 0.0

    def test_apply_matches_sparse(self):
        mesh = Mesh1D.graded(0, TWO_PI, 12, 1.5)
        L = assemble_linear(FluxParams.real(0.3, 0.4, 0.4), mesh, 2)
        c = random_fields(12, 2, 1, seed=3)[0]
        direct = L.apply(c)
        via_mat = (L.as_sparse() @ c.reshape(-1)).reshape(12, 3)
        assert np.abs(direct - via_mat).max() < 1e-13 * max(1.0, np.abs(direct).max())

    @pytest.mark.parametrize(
        "p",
        [
            FluxParams.real(0.25, 1.0, 1.0),
            FluxParams.real(0, 0, 0),
            FluxParams.real(0.5, 0.4, 0.0),
            FluxParams.real(-0.3, 2.0, 0.7),
        ],
    )
    def test_conservative_skew_identity(self, p):
        """Re<M L c, c> = 0 for real parameters with alpha1 + alpha2 = 0."""
        n, k = 24, 2
        mesh = Mesh1D.uniform(0, TWO_PI, n)
        L = assemble_linear(p, mesh, k)
        w = mass_weights(mesh, k)
        for c in random_fields(n, k, 100, seed=1):
            q = np.real(np.sum(w * L.apply(c) * np.conj(c)))
            assert abs(q) <= 1e-11 * np.sum(w * np.abs(c) ** 2)

    def test_dissipative_definiteness(self):
        p = FluxParams(0.25, -0.25, 1 - 1j, 1 + 1j)
        n, k = 24, 2
        mesh = Mesh1D.uniform(0, TWO_PI, n)
        L = assemble_linear(p, mesh, k)
        w = mass_weights(mesh, k)
        for c in random_fields(n, k, 100, seed=2):
            q = np.real(np.sum(w * L.apply(c) * np.conj(c)))
            assert q <= 1e-12 * np.sum(w * np.abs(c) ** 2)

    def test_consistency_on_plane_wave(self):
        """L applied to the projected wave exp(imx) approaches -i m^2 times it."""
        m_wave = 1
        u = SmoothFunction(
            lambda x: np.exp(1j * m_wave * x), lambda x: 1j * m_wave * np.exp(1j * m_wave * x)
        )
        p = FluxParams.real(0, 0, 0)
        k = 2
        resid = []
        for n in (40, 80, 160):
            mesh = Mesh1D.uniform(0, TWO_PI, n)
            f = project_star(u, p, mesh, k)
            w = mass_weights(mesh, k)
            r = L_apply = assemble_linear(p, mesh, k).apply(f.coeffs) - (
                -1j * m_wave**2
            ) * f.coeffs
            resid.append(math.sqrt(float(np.sum(w * np.abs(r) ** 2))))
        rate = math.log2(resid[0] / resid[1])
        rate2 = math.log2(resid[1] / resid[2])
        assert min(rate, rate2) >= k  # at least k-th order consistency


class TestNonlinear:
    def test_zero_function(self):
        mesh = Mesh1D.uniform(0, TWO_PI, 8)
        f = DGFunction(mesh, 2, random_fields(8, 2, 1, seed=4)[0])
        nt = NonlinearTerm(lambda s: np.zeros_like(s))
        assert np.abs(apply_nonlinear(f, nt)).max() == 0.0

    def test_constant_f_on_constant_field(self):
        mesh = Mesh1D.uniform(0, TWO_PI, 8)
        coeffs = np.zeros((8, 3), dtype=complex)
        coeffs[:, 0] = 2.5
        f = DGFunction(mesh, 2, coeffs)
        nt = NonlinearTerm(lambda s: 3.0 * np.ones_like(s))
        r = apply_nonlinear(f, nt)
        assert np.abs(r[:, 0] - 1j * 3.0 * 2.5).max() < 1e-13
        assert np.abs(r[:, 1:]).max() < 1e-13

    def test_cubic_quintic_on_unit_wave(self):
        """f(s) = s + s^2 at |u| = 1: pointwise equals 2u at the nodes."""
        u = SmoothFunction(lambda x: np.exp(1j * x), lambda x: 1j * np.exp(1j * x))
        mesh = Mesh1D.uniform(0, TWO_PI, 40)
        k = 2
        basis = Basis(k)
        f = l2_project(u, mesh, k)
        vals = f.cell_values(basis)
        g = (np.abs(vals) ** 2 + np.abs(vals) ** 4) * vals
        # |u_h| = 1 up to the projection error, so g is 2 u_h to O(h^{k+1})
        assert np.abs(g - 2 * vals).max() < 50 * (TWO_PI / 40) ** (k + 1)


class TestEnergy:
    def test_unit_constant(self):
        mesh = Mesh1D.uniform(0, TWO_PI, 12)
        coeffs = np.zeros((12, 3), dtype=complex)
        coeffs[:, 0] = 1.0
        assert energy(DGFunction(mesh, 2, coeffs)) == pytest.approx(TWO_PI, rel=1e-14)

    def test_quadratic_scaling(self):
        mesh = Mesh1D.uniform(0, TWO_PI, 12)
        c = random_fields(12, 2, 1, seed=5)[0]
        e1 = energy(DGFunction(mesh, 2, c))
        e2 = energy(DGFunction(mesh, 2, 2 * c))
        assert e2 == pytest.approx(4 * e1, rel=1e-13)

    def test_projected_plane_wave(self):
        u = SmoothFunction(lambda x: np.exp(1j * x), lambda x: 1j * np.exp(1j * x))
        mesh = Mesh1D.uniform(0, TWO_PI, 40)
        f = l2_project(u, mesh, 2)
        assert energy(f) == pytest.approx(TWO_PI, rel=1e-6)

    def test_energy_matches_measure(self):
        # energy of the field equals the squared L2 norm of (f - 0)
        mesh = Mesh1D.uniform(0, TWO_PI, 9)
        f = DGFunction(mesh, 2, random_fields(9, 2, 1, seed=6)[0])
        zero = SmoothFunction(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x))
        assert measure_error(f, zero).l2 ** 2 == pytest.approx(energy(f), rel=1e-12)
