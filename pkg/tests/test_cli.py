"""End-to-end CLI behavior through the embedded service."""

import numpy as np
import pytest

from phasefrac.cli import main
from phasefrac.geometry import sent_mesh
from phasefrac.mesh import write_msh

RUN_CFG = """\
mesh:
  builtin: SENT
  scale: 1
material:
  E_MPa: 600.0
  nu: 0.2
  Gc_N_per_mm: 0.13
  ell_mm: 0.1
  kappa: 1.0e-7
control:
  u_max_mm: 0.008
  n_steps: 8
solver:
  mode: monolithic-full
output:
  vtk_every: 4
  csv: true
"""


def write_cfg(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestRunCommand:
    def test_successful_run_writes_declared_files(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, RUN_CFG)
        out = tmp_path / "out"
        rc = main(["run", str(cfg), "-o", str(out)])
        assert rc == 0
        assert (out / "force_displacement.csv").exists()
        assert (out / "summary.txt").exists()
        assert (out / "final.vtk").exists()
        summary = (out / "summary.txt").read_text()
        assert "sigma_c_MPa" in summary
        assert "wall_time_s" in summary
        assert "peak force" in capsys.readouterr().out

    def test_outputs_idempotent(self, tmp_path):
        cfg = write_cfg(tmp_path, RUN_CFG)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", str(cfg), "-o", str(out1)]) == 0
        assert main(["run", str(cfg), "-o", str(out2)]) == 0
        for name in ("force_displacement.csv", "final.vtk", "step_0004.vtk"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_malformed_config_exit_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "mesh:\n  builtin: [oops\n")
        rc = main(["run", str(cfg)])
        assert rc == 2
        assert "line" in capsys.readouterr().err

    def test_invalid_material_exit_2(self, tmp_path):
        cfg = write_cfg(tmp_path, RUN_CFG.replace("nu: 0.2", "nu: 0.7"))
        assert main(["run", str(cfg)]) == 2

    def test_resolution_violation_exit_3_and_override(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, RUN_CFG.replace("ell_mm: 0.1", "ell_mm: 0.05"))
        out = tmp_path / "res"
        rc = main(["run", str(cfg), "-o", str(out)])
        assert rc == 3
        assert "ell/5" in capsys.readouterr().err
        rc = main(["run", str(cfg), "-o", str(out), "--override-resolution"])
        assert rc == 0

    def test_solver_failure_exit_4(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            RUN_CFG.replace(
                "control:\n  u_max_mm: 0.008\n  n_steps: 8",
                "control:\n  u_max_mm: 0.02\n  n_steps: 4\n"
                "  max_newton_iters: 1\n  max_cutbacks: 1",
            ),
        )
        assert main(["run", str(cfg)]) == 4

    def test_mode_flag_overrides_config(self, tmp_path):
        cfg = write_cfg(tmp_path, RUN_CFG)
        rc = main(["run", str(cfg), "--mode", "staggered", "-o", str(tmp_path / "st")])
        assert rc == 0


SWEEP_CFG = """\
benchmark:
  builtin: SENT
material:
  E_MPa: 600.0
  nu: 0.2
  Gc_N_per_mm: 0.13
  ell_mm: 0.1
axes:
  Gc_N_per_mm: [0.1, 0.2]
  ell_mm: [0.1, 0.125]
control:
  u_max_mm: 0.004
  n_steps: 3
"""


class TestSweepCommand:
    def test_two_by_two_plan_gives_four_rows(self, tmp_path):
        cfg = write_cfg(tmp_path, SWEEP_CFG, "plan.yaml")
        out = tmp_path / "sw"
        rc = main(["sweep", str(cfg), "-o", str(out)])
        assert rc == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert len(lines) == 5  # header + 4 rows
        assert lines[0] == "E,Gc,ell,sigma_c,peak_force,disp_at_peak,converged"

    def test_nonpositive_value_fails_before_running(self, tmp_path):
        cfg = write_cfg(
            tmp_path, SWEEP_CFG.replace("[0.1, 0.2]", "[0.1, 0]"), "plan.yaml"
        )
        assert main(["sweep", str(cfg)]) == 2

    def test_single_point_plan_matches_run_peak(self, tmp_path):
        plan = SWEEP_CFG.replace(
            "axes:\n  Gc_N_per_mm: [0.1, 0.2]\n  ell_mm: [0.1, 0.125]",
            "axes:\n  Gc_N_per_mm: [0.13]",
        ).replace("u_max_mm: 0.004\n  n_steps: 3", "u_max_mm: 0.008\n  n_steps: 8")
        cfg = write_cfg(tmp_path, plan, "plan.yaml")
        out = tmp_path / "single"
        assert main(["sweep", str(cfg), "-o", str(out)]) == 0
        row = (out / "sweep.csv").read_text().strip().splitlines()[1]
        peak_sweep = float(row.split(",")[4])

        run_out = tmp_path / "direct"
        run_cfg = write_cfg(tmp_path, RUN_CFG)
        assert main(["run", str(run_cfg), "-o", str(run_out)]) == 0
        csv = (run_out / "force_displacement.csv").read_text().strip().splitlines()[1:]
        peak_run = max(float(r.split(",")[1]) for r in csv)
        assert peak_sweep == peak_run


class TestCheckmeshCommand:
    def test_builtin_pass(self, capsys):
        assert main(["checkmesh", "--builtin", "SENT", "--ell-mm", "0.1"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_file_fail(self, tmp_path, capsys):
        mesh = sent_mesh(h_fine=0.05)
        path = tmp_path / "m.msh"
        write_msh(mesh, path)
        rc = main(["checkmesh", str(path), "--ell-mm", "0.1"])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out

    def test_requires_exactly_one_source(self, capsys):
        assert main(["checkmesh", "--ell-mm", "0.1"]) == 2


class TestVerify1dCommand:
    def test_calibrated_pass(self, capsys):
        rc = main([
            "verify1d", "--E-MPa", "600", "--Gc-N-per-mm", "0.13",
            "--ell-mm", "0.5", "--steps", "150",
        ])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_invalid_poisson_exit_2(self):
        rc = main([
            "verify1d", "--E-MPa", "600", "--Gc-N-per-mm", "0.13",
            "--ell-mm", "0.5", "--nu", "0.6",
        ])
        assert rc == 2
