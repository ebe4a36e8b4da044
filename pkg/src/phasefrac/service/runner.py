"""Execution backend for service requests: builds meshes, runs the solver
and emits the declared output files.

Output files are written on the service side into the requested output
directory (service and client are expected to share a filesystem; the
bundled CLI embeds the service in-process). All data files are
byte-reproducible for identical requests; ``summary.txt`` additionally
reports the wall time and is the one file exempt from byte-identity.
"""

from __future__ import annotations

import time
from pathlib import Path

from ..geometry import builtin_geometry, default_bcs
from ..material import critical_stress
from ..mesh import MeshError, characteristic_size, read_gmsh
from ..postproc import (
    PostprocError,
    extract_crack_path,
    extract_crack_surface,
    force_displacement_csv,
    write_vtk,
)
from ..solver import BoundaryCondition, ResolutionError, run
from ..sweep import SweepPlan, run_sweep
from ..verify import verify_1d
from .jobs import JobError
from .schemas import (
    CheckMeshRequest,
    MeshSpec,
    RunRequest,
    SOLVER_MODES,
    StrengthRequest,
    SweepRequest,
    Verify1DRequest,
)


def build_mesh(spec: MeshSpec):
    try:
        if spec.builtin is not None:
            return builtin_geometry(spec.builtin, scale=spec.scale)
        path = Path(spec.file)
        if not path.exists():
            raise JobError("config", f"mesh file {spec.file!r} does not exist")
        return read_gmsh(path)
    except (MeshError, ValueError) as exc:
        raise JobError("config", f"cannot build mesh: {exc}") from None


def _write_summary(path: Path, entries: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, val in entries.items():
            fh.write(f"{key} = {val}\n")


def execute_strength(req: StrengthRequest) -> dict:
    return {"sigma_c_MPa": critical_stress(req.material.to_params())}


def execute_verify1d(req: Verify1DRequest) -> dict:
    out = verify_1d(req.material.to_params(), n_steps=req.n_steps)
    return {
        "sigma_c_analytic_MPa": out["sigma_c_analytic"],
        "sigma_c_fem_MPa": out["sigma_c_fem"],
        "peak_strain_analytic": out["peak_strain_analytic"],
        "peak_strain_fem": out["peak_strain_fem"],
        "rel_err_stress": out["rel_err_stress"],
        "rel_err_strain": out["rel_err_strain"],
        "passed": out["passed"],
    }


def execute_checkmesh(req: CheckMeshRequest) -> dict:
    mesh = build_mesh(req.mesh)
    region = req.region
    if region is None and "crack_zone" in mesh.node_sets:
        region = "crack_zone"
    try:
        report = characteristic_size(mesh, req.ell_mm, region)
    except MeshError as exc:
        raise JobError("config", str(exc)) from None
    return {
        "h_min": report.h_min,
        "h_max": report.h_max,
        "h_crackzone": report.h_crackzone,
        "ratio": report.ratio,
        "passed": report.passed,
    }


def execute_run(req: RunRequest) -> dict:
    t0 = time.perf_counter()
    params = req.material.to_params()
    sigma_c = critical_stress(params)
    mesh = build_mesh(req.mesh)
    control = req.control.to_control()
    if req.bcs is not None:
        bcs = [BoundaryCondition(b.node_set, b.component, b.value_mm) for b in req.bcs]
    else:
        try:
            bcs = default_bcs(mesh, control.u_max)
        except MeshError as exc:
            raise JobError("config", str(exc)) from None

    out_dir = None
    files: list[str] = []
    if req.output_dir:
        out_dir = Path(req.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    def snapshot_writer(state, step_rec):
        if out_dir and req.output.vtk_every and step_rec.step % req.output.vtk_every == 0:
            path = out_dir / f"step_{step_rec.step:04d}.vtk"
            write_vtk(mesh, state.phi, state.u, path)
            files.append(str(path))

    try:
        record = run(
            mesh, params, bcs, control,
            mode=SOLVER_MODES[req.mode],
            phi_form=req.phi_form,
            override_resolution=req.override_resolution,
            on_step=snapshot_writer,
        )
    except ResolutionError as exc:
        if out_dir:
            # calibration context must survive failed runs
            _write_summary(
                out_dir / "summary.txt",
                {"sigma_c_MPa": f"{sigma_c:.9g}", "error": str(exc)},
            )
        raise JobError("resolution", str(exc)) from None
    except ValueError as exc:
        raise JobError("config", str(exc)) from None

    wall = time.perf_counter() - t0
    result = {
        "completed": record.completed,
        "failure": record.failure,
        "n_steps": len(record.steps),
        "peak_force_N": record.peak_force,
        "displacement_at_peak_mm": record.displacement_at_peak,
        "sigma_c_MPa": sigma_c,
        "max_phi": float(record.state.phi.max()) if record.state else 0.0,
        "wall_time_s": wall,
        "curve": {
            "displacement_mm": [s.displacement for s in record.steps],
            "force_N": [s.force for s in record.steps],
        },
        "notes": [],
    }

    if out_dir:
        if req.output.csv:
            csv_path = out_dir / "force_displacement.csv"
            force_displacement_csv(record, csv_path)
            files.append(str(csv_path))
        if req.output.vtk_every:
            final = out_dir / "final.vtk"
            write_vtk(mesh, record.state.phi, record.state.u, final)
            files.append(str(final))
        if req.output.crack_path and mesh.dim == 2:
            try:
                path = extract_crack_path(
                    mesh, record.state.phi, threshold=req.output.crack_threshold
                )
                cp = out_dir / "crack_path.csv"
                with open(cp, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write("x_mm,y_mm\n")
                    for x, y in path.points:
                        fh.write(f"{x:.9g},{y:.9g}\n")
                files.append(str(cp))
            except PostprocError as exc:
                result["notes"].append(f"crack path not extracted: {exc}")
        if req.output.crack_surface and mesh.dim == 3:
            try:
                surf = extract_crack_surface(
                    mesh, record.state.phi,
                    threshold=req.output.crack_threshold,
                    spacing=req.output.surface_spacing_mm,
                )
                cs = out_dir / "crack_surface.csv"
                surf.to_csv(cs)
                files.append(str(cs))
            except PostprocError as exc:
                result["notes"].append(f"crack surface not extracted: {exc}")
        _write_summary(
            out_dir / "summary.txt",
            {
                "peak_force_N": f"{record.peak_force:.9g}",
                "displacement_at_peak_mm": f"{record.displacement_at_peak:.9g}",
                "sigma_c_MPa": f"{sigma_c:.9g}",
                "wall_time_s": f"{wall:.3f}",
                "n_steps": len(record.steps),
                "completed": record.completed,
                **({"failure": record.failure} if record.failure else {}),
            },
        )
        files.append(str(out_dir / "summary.txt"))
    result["files"] = files

    if not record.completed:
        raise JobError("solver", record.failure or "run did not complete", result)
    return result


def execute_sweep(req: SweepRequest) -> dict:
    t0 = time.perf_counter()
    mesh = build_mesh(req.mesh)
    axis_map = {"E_MPa": "E", "Gc_N_per_mm": "Gc", "ell_mm": "ell"}
    axes = [(axis_map[k], list(v)) for k, v in req.axes.items()]
    try:
        plan = SweepPlan(
            base=req.material.to_params(),
            axes=axes,
            control=req.control.to_control(),
            benchmark=mesh,
            mode=SOLVER_MODES[req.mode],
            override_resolution=req.override_resolution,
        )
        result = run_sweep(plan, workers=req.workers)
    except ResolutionError as exc:
        raise JobError("resolution", str(exc)) from None
    except ValueError as exc:
        raise JobError("config", str(exc)) from None

    files = []
    if req.output_dir:
        out_dir = Path(req.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "sweep.csv"
        result.to_csv(csv_path)
        files.append(str(csv_path))
    return {
        "rows": [
            {
                "E_MPa": r.E,
                "Gc_N_per_mm": r.Gc,
                "ell_mm": r.ell,
                "sigma_c_MPa": r.sigma_c,
                "peak_force_N": r.peak_force,
                "disp_at_peak_mm": r.disp_at_peak,
                "converged": r.converged,
            }
            for r in result.rows
        ],
        "all_converged": result.all_converged,
        "wall_time_s": time.perf_counter() - t0,
        "files": files,
    }
