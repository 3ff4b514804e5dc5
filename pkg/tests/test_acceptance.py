"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
line (run with -s to see them alongside the pytest verdicts).

The reference tables referred to by the bundled study names live in
src/uwdg/studies/*.cfg together with their expected error/order columns.
"""

import contextlib
import math
import time

import numpy as np
import pytest

from uwdg.errors import SingularSystemError
from uwdg.fluxes import FluxParams, diagnose
from uwdg.imex import evolve
from uwdg.meshbasis import Mesh1D
from uwdg.operator import assemble_linear
from uwdg.problems import get_problem
from uwdg.projection import (
    assemble_global_system,
    dense_oracle,
    measure_error,
    project_star,
    project_star_local,
    projection_residuals,
    solve_structured,
)
from uwdg.studies import (
    check_table_against_expectations,
    load_bundled_config,
    run_energy_study,
    run_projection_study,
    run_soliton,
    run_study,
)

TWO_PI = 2 * math.pi


@contextlib.contextmanager
def criterion(num: int, title: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {num} ({title}): FAIL")
        raise
    print(f"ACCEPTANCE {num} ({title}): PASS")


def run_table_and_check(name: str, jobs: int = 1, time_cap: float = None):
    cfg = load_bundled_config(name)
    t0 = time.perf_counter()
    table = run_study(cfg, jobs=jobs)
    elapsed = time.perf_counter() - t0
    checks = check_table_against_expectations(cfg, table)
    bad = [c for c in checks if not c["ok"]]
    assert not bad, f"{name}: {bad}"
    if time_cap is not None:
        assert elapsed < time_cap, f"{name} took {elapsed:.1f} s"
    return table


class TestCriterion1ProjectionTables:
    """Optimal-order projection tables: orders within +-0.25 at the two
    largest refinements, each table under 60 s."""

    NAMES = [
        "t01_proj_local_const.cfg",
        "t02_proj_local_scaled.cfg",
        "t04_proj_local_reduced.cfg",
        "t05_proj_split_scaled.cfg",
        "t06_proj_scale_invariant.cfg",
        "t10_proj_central.cfg",
        "t11_proj_beta2_const.cfg",
    ]

    @pytest.mark.parametrize("name", NAMES)
    def test_table(self, name):
        run_table_and_check(name, time_cap=60.0)

    def test_report(self):
        with criterion(1, "projection table reproduction"):
            for name in self.NAMES:
                run_table_and_check(name, time_cap=60.0)


class TestCriterion2OrderReduction:
    """Order-reduction families, including the family whose measured order
    exceeds the stated estimate."""

    NAMES = [
        "t03_proj_supercloseness.cfg",
        "t07_proj_resonant_beta1.cfg",
        "t08_proj_resonant_beta2.cfg",
        "t09_proj_beyond_estimate.cfg",
        "t12_proj_unimodular.cfg",
    ]

    @pytest.mark.parametrize("name", NAMES)
    def test_table(self, name):
        run_table_and_check(name, time_cap=60.0)

    def test_exception_family_beats_stated_bound(self):
        # stated projection estimates give k+2+A1 = 2 (A1 = -2) and 1 (A1 = -3);
        # the runs must land a full order above
        cfg = load_bundled_config("t09_proj_beyond_estimate.cfg")
        table = run_projection_study(cfg)
        final = {}
        for row in sorted(table.rows, key=lambda r: r.n):
            if row.order_l2 is not None:
                final[row.leg] = row.order_l2
        assert final[0] >= 2.0 + 0.5  # A1 = -2: measured ~3
        assert final[1] >= 1.0 + 0.5  # A1 = -3: measured ~2

    def test_report(self):
        with criterion(2, "order-reduction families"):
            for name in self.NAMES:
                run_table_and_check(name)
            self.test_exception_family_beats_stated_bound()


def _sweep():
    from test_projection import oracle_sweep_cases, trig_poly

    return oracle_sweep_cases(), trig_poly


class TestCriterion3OracleEquivalence:
    def test_report(self):
        with criterion(3, "structured vs dense oracle"):
            cases, trig_poly = _sweep()
            assert len(cases) >= 50
            agreements = 0
            for label, k, n, pf in cases:
                h = TWO_PI / n
                p = pf(h)
                u = trig_poly(17 + 3 * n + k)
                mesh = Mesh1D.uniform(0, TWO_PI, n)
                d = diagnose(p, k, h, n)
                A, B, rhs, _ = assemble_global_system(u, p, mesh, k, allow_singular=True)
                if not d.exists:
                    with pytest.raises(SingularSystemError):
                        dense_oracle(A, B, rhs)
                    continue
                xd = dense_oracle(A, B, rhs)
                if d.case == "Local":
                    xs = project_star_local(u, p, mesh, k).coeffs[:, k - 1 :]
                else:
                    xs = solve_structured(A, B, rhs, d)
                assert np.abs(xs - xd).max() <= 1e-10 * np.abs(xd).max(), (label, k, n)
                agreements += 1
            assert agreements >= 40
            # non-existence verdicts coincide with dense singularity
            bad_combos = [
                (1, 8, FluxParams.real(0, 0, 0)),
                (1, 16, FluxParams.real(0, 0, 0)),
                (1, 40, FluxParams.real(0.0, 0.0, 1.0)),
            ]
            for n, m in ((12, 1), (16, 3), (20, 7)):
                c = (1 + math.cos(2 * math.pi * m / n)) / 2
                bad_combos.append((1, n, FluxParams.real(0.0, c * n / TWO_PI, 0.0)))
            for k, n, p in bad_combos:
                d = diagnose(p, k, TWO_PI / n, n)
                assert not d.exists
                u = trig_poly(n + 5)
                mesh = Mesh1D.uniform(0, TWO_PI, n)
                A, B, rhs, _ = assemble_global_system(u, p, mesh, k, allow_singular=True)
                with pytest.raises(SingularSystemError):
                    dense_oracle(A, B, rhs)


class TestCriterion4DefiningRelations:
    def test_report(self):
        with criterion(4, "defining-relation residuals"):
            _, trig_poly = _sweep()
            rng = np.random.default_rng(2024)
            param_pool = [
                lambda h: FluxParams.real(0, 0, 0),
                lambda h: FluxParams.real(0.25, 1.0, 1.0),
                lambda h: FluxParams.real(0.3, 0.4, 0.4),
                lambda h: FluxParams.real(0.0, 0.5 / h, h),
                lambda h: FluxParams.real(0.0, 0.7 / h, 0.0),
                lambda h: FluxParams.real(0.3, 0.4 / h, 0.4 * h),
            ]
            count = 0
            for trial in range(40):
                k = int(rng.integers(1, 4))
                n = int(rng.choice([15, 21, 33]))
                h = TWO_PI / n
                p = param_pool[trial % len(param_pool)](h)
                d = diagnose(p, k, h, n)
                if not d.exists:
                    continue
                u = trig_poly(1000 + trial)
                f = project_star(u, p, Mesh1D.uniform(0, TWO_PI, n), k)
                res = projection_residuals(f, u, p)
                xs = np.linspace(0, TWO_PI, 257)
                scale = max(
                    1.0,
                    float(np.abs(u.value(xs)).max()),
                    float(np.abs(u.derivative(xs)).max()),
                )
                assert res["hat"] <= 1e-9 * scale, (trial, res)
                assert res["tilde"] <= 1e-9 * scale, (trial, res)
                assert res["moment"] <= 1e-10 * scale, (trial, res)
                count += 1
            assert count >= 30


class TestCriterion5StabilityIdentities:
    def test_report(self):
        with criterion(5, "semi-discrete stability identities"):
            n, k = 24, 2
            mesh = Mesh1D.uniform(0, TWO_PI, n)
            w = mesh.cell_sizes[:, None] / (2 * np.arange(k + 1) + 1)[None, :]
            rng = np.random.default_rng(7)
            L_cons = assemble_linear(FluxParams.real(0.25, 1.0, 1.0), mesh, k)
            L_diss = assemble_linear(FluxParams(0.25, -0.25, 1 - 1j, 1 + 1j), mesh, k)
            for _ in range(100):
                c = rng.normal(size=(n, k + 1)) + 1j * rng.normal(size=(n, k + 1))
                norm2 = float(np.sum(w * np.abs(c) ** 2))
                q_cons = float(np.real(np.sum(w * L_cons.apply(c) * np.conj(c))))
                q_diss = float(np.real(np.sum(w * L_diss.apply(c) * np.conj(c))))
                assert abs(q_cons) <= 1e-11 * norm2
                assert q_diss <= 1e-12 * norm2


@pytest.mark.slow
class TestCriterion6EnergyStudy:
    def test_report(self):
        with criterion(6, "energy conservation study"):
            t0 = time.perf_counter()
            real = run_energy_study(load_bundled_config("energy_conserving.cfg"))
            cplx = run_energy_study(load_bundled_config("energy_dissipative.cfg"))
            elapsed = time.perf_counter() - t0
            drop_real = real["summary"]["norm_drop"]
            drop_cplx = cplx["summary"]["norm_drop"]
            assert drop_real <= 1e-7, drop_real
            assert 5.7e-4 / 3 <= drop_cplx <= 5.7e-4 * 3, drop_cplx
            assert elapsed < 600, f"energy study took {elapsed:.0f} s"


@pytest.mark.slow
class TestCriterion7SchemeTables:
    NAMES = [
        "t13_nls_central.cfg",
        "t14_nls_beta2_const.cfg",
        "t15_nls_local_const.cfg",
        "t16_nls_local_scaled.cfg",
        "t17_nls_resonant_beta1.cfg",
        "t18_nls_beyond_estimate.cfg",
    ]
    outcomes: dict = {}

    @pytest.mark.parametrize("name", NAMES)
    def test_table(self, name):
        self.outcomes[name] = False
        run_table_and_check(name, jobs=3)
        self.outcomes[name] = True

    def test_report(self):
        with criterion(7, "scheme convergence tables"):
            missing = [n for n in self.NAMES if not self.outcomes.get(n)]
            assert not missing, f"tables failed or skipped: {missing}"


class TestCriterion8TemporalOrder:
    def test_report(self):
        with criterion(8, "third-order time integration"):
            prob = get_problem("plane_cubic_quintic")
            k, n = 3, 64
            mesh = Mesh1D.uniform(0, TWO_PI, n)
            p = FluxParams.real(0, 0, 0)
            L = assemble_linear(p, mesh, k)
            init = project_star(prob.initial_condition(), p, mesh, k)
            dts = [0.02, 0.01, 0.005]
            errs = []
            for dt in dts:
                _, fin = evolve(init, 1.0, dt, L, prob.nonlinearity)
                errs.append(measure_error(fin, prob.at_time(1.0)).l2)
            slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
            assert abs(slope - 3.0) <= 0.2, slope


@pytest.mark.slow
class TestCriterion9Soliton:
    def test_report(self):
        with criterion(9, "soliton collision"):
            res = run_soliton(load_bundled_config("soliton_collision.cfg"))
            summary = res["summary"]
            snaps = {round(s["t"], 1): s for s in summary["snapshots"]}
            start = snaps[0.0]
            assert len(start["peaks"]) == 2
            assert abs(start["peaks"][0] + 10) <= 0.2
            assert abs(start["peaks"][1] - 10) <= 0.2
            mid = snaps[2.5]
            assert mid["max_abs_u"] > 1.9
            end = snaps[5.0]
            assert len(end["peaks"]) == 2
            assert 0.9 <= end["max_abs_u"] <= 1.1
            # both separated humps carry near-unit amplitude
            for s in res["snapshots"]:
                if round(s["t"], 1) == 5.0:
                    a = np.abs(s["u"])
                    for peak_x in end["peaks"]:
                        sel = np.abs(s["x"] - peak_x) < 1.0
                        assert 0.9 <= a[sel].max() <= 1.1
            assert summary["energy_drift_rel"] <= 0.01
