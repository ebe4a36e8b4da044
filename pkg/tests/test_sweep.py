"""Parameter sweep plans, execution and CSV emission."""

import math

import numpy as np
import pytest

from phasefrac.geometry import default_bcs, sent_mesh
from phasefrac.material import MaterialParams, critical_stress
from phasefrac.solver import ResolutionError, StepControl, run
from phasefrac.sweep import SweepPlan, SweepResult, SweepRow, run_sweep

BASE = MaterialParams(E=600.0, nu=0.2, Gc=0.13, ell=0.2, kappa=1e-7)


@pytest.fixture(scope="module")
def bench_mesh():
    # coarse, fast benchmark; plans override the resolution gate
    return sent_mesh(h_fine=0.04, h_coarse=0.12, band_halfheight=0.16)


def make_plan(mesh, axes, u_max=4.0e-2, n_steps=50, **kw):
    control = StepControl(u_max=u_max, n_steps_initial=n_steps)
    return SweepPlan(
        base=BASE, axes=axes, control=control, benchmark=mesh,
        override_resolution=True, **kw,
    )


class TestPlanValidation:
    def test_unknown_axis(self, bench_mesh):
        with pytest.raises(ValueError, match="unknown sweep axis"):
            make_plan(bench_mesh, [("nu", [0.2])])

    def test_nonpositive_value(self, bench_mesh):
        with pytest.raises(ValueError, match="non-positive"):
            make_plan(bench_mesh, [("Gc", [0.13, -0.1])])

    def test_duplicate_axis(self, bench_mesh):
        with pytest.raises(ValueError, match="twice"):
            make_plan(bench_mesh, [("Gc", [0.13]), ("Gc", [0.26])])

    def test_run_count_is_product(self, bench_mesh):
        plan = make_plan(bench_mesh, [("Gc", [0.1, 0.2]), ("ell", [0.2, 0.3, 0.4])])
        assert plan.n_runs == 6

    def test_resolution_precheck(self, bench_mesh):
        control = StepControl(u_max=1e-3, n_steps_initial=2)
        plan = SweepPlan(
            base=BASE, axes=[("ell", [0.05])], control=control, benchmark=bench_mesh
        )
        with pytest.raises(ResolutionError):
            run_sweep(plan)


class TestSweepExecution:
    def test_single_point_matches_direct_run(self, bench_mesh):
        u_max = 2.0e-2
        plan = make_plan(bench_mesh, [("Gc", [BASE.Gc])], u_max=u_max, n_steps=20)
        result = run_sweep(plan)
        assert len(result.rows) == 1
        control = StepControl(u_max=u_max, n_steps_initial=20)
        record = run(
            bench_mesh, BASE, default_bcs(bench_mesh, u_max), control,
            override_resolution=True,
        )
        assert result.rows[0].peak_force == record.peak_force
        assert result.rows[0].disp_at_peak == record.displacement_at_peak
        assert result.rows[0].converged

    def test_gc_monotonicity_and_sigma_column(self, bench_mesh, tmp_path):
        plan = make_plan(bench_mesh, [("Gc", [0.13, 0.26])], u_max=5.5e-2, n_steps=40)
        result = run_sweep(plan)
        assert len(result.rows) == 2
        assert result.all_converged
        assert result.rows[1].peak_force > result.rows[0].peak_force
        for row in result.rows:
            expected = math.sqrt(27 * row.E * row.Gc / (256 * row.ell))
            assert row.sigma_c == expected  # exact, by construction
        csv = tmp_path / "sweep.csv"
        result.to_csv(csv)
        lines = csv.read_text().strip().splitlines()
        assert lines[0] == "E,Gc,ell,sigma_c,peak_force,disp_at_peak,converged"
        assert len(lines) == 3
        assert lines[1].endswith("true")

    def test_worker_count_does_not_change_results(self, bench_mesh, tmp_path):
        plan = make_plan(bench_mesh, [("E", [500.0, 700.0])], u_max=1.2e-2, n_steps=10)
        seq = run_sweep(plan, workers=1)
        par = run_sweep(plan, workers=2)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        seq.to_csv(p1)
        par.to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_failed_runs_flagged_not_dropped(self, bench_mesh):
        control = StepControl(
            u_max=5.0e-2, n_steps_initial=5, max_newton_iters=1, max_cutbacks=1,
            stagger_max_passes=1,
        )
        plan = SweepPlan(
            base=BASE, axes=[("Gc", [0.13])], control=control,
            benchmark=bench_mesh, override_resolution=True,
        )
        result = run_sweep(plan)
        assert len(result.rows) == 1
        assert not result.rows[0].converged


class TestPlanPoints:
    def test_cartesian_order(self, bench_mesh):
        plan = make_plan(bench_mesh, [("Gc", [0.1, 0.2]), ("ell", [0.3, 0.4])])
        pts = list(plan.points())
        assert [(p.Gc, p.ell) for p in pts] == [
            (0.1, 0.3), (0.1, 0.4), (0.2, 0.3), (0.2, 0.4),
        ]
        assert all(p.E == BASE.E for p in pts)
