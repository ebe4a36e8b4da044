"""Pydantic request/response models for the solver service.

Field names carry physical units (``E_MPa``, ``Gc_N_per_mm``, ...) so a
request can never silently mix unit systems.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field, model_validator

from ..material import MaterialParams
from ..solver import StepControl

SOLVER_MODES = {
    "monolithic-full": "monolithic_full",
    "monolithic-block": "monolithic_block",
    "staggered": "staggered",
}


class MaterialSchema(BaseModel):
    E_MPa: float = Field(gt=0)
    nu: float = Field(gt=-1.0, lt=0.5)
    Gc_N_per_mm: float = Field(gt=0)
    ell_mm: float = Field(gt=0)
    kappa: float = Field(default=1e-7, gt=0, lt=1e-2)

    def to_params(self) -> MaterialParams:
        return MaterialParams(
            E=self.E_MPa, nu=self.nu, Gc=self.Gc_N_per_mm,
            ell=self.ell_mm, kappa=self.kappa,
        )


class MeshSpec(BaseModel):
    builtin: Optional[str] = None
    file: Optional[str] = None
    scale: float = Field(default=1.0, ge=1.0)

    @model_validator(mode="after")
    def _exactly_one_source(self):
        if (self.builtin is None) == (self.file is None):
            raise ValueError("specify exactly one of 'builtin' or 'file'")
        return self


class ControlSchema(BaseModel):
    u_max_mm: float = Field(ge=0)
    n_steps: int = Field(default=100, gt=0)
    cutback_factor: float = Field(default=0.5, gt=0, lt=1)
    max_cutbacks: int = Field(default=8, gt=0)
    newton_tol_rel: float = Field(default=1e-6, gt=0)
    newton_tol_abs: float = Field(default=1e-8, gt=0)
    max_newton_iters: int = Field(default=20, gt=0)

    def to_control(self) -> StepControl:
        return StepControl(
            u_max=self.u_max_mm,
            n_steps_initial=self.n_steps,
            cutback_factor=self.cutback_factor,
            max_cutbacks=self.max_cutbacks,
            newton_tol_rel=self.newton_tol_rel,
            newton_tol_abs=self.newton_tol_abs,
            max_newton_iters=self.max_newton_iters,
        )


class BcSchema(BaseModel):
    node_set: str
    component: str = Field(pattern="^u[xyz]$")
    value_mm: float


class OutputSchema(BaseModel):
    vtk_every: int = Field(default=0, ge=0)
    csv: bool = True
    crack_path: bool = False
    crack_surface: bool = False
    surface_spacing_mm: float = Field(default=0.1, gt=0)
    crack_threshold: float = Field(default=0.95, gt=0, le=1)


class RunRequest(BaseModel):
    """Complete configuration of one simulation run."""

    mesh: MeshSpec
    material: MaterialSchema
    control: ControlSchema
    bcs: Optional[list[BcSchema]] = None
    mode: str = Field(default="monolithic-full")
    phi_form: str = Field(default="direct", pattern="^(direct|heat)$")
    override_resolution: bool = False
    output: OutputSchema = OutputSchema()
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _known_mode(self):
        if self.mode not in SOLVER_MODES:
            raise ValueError(
                f"unknown mode {self.mode!r}; choose from {sorted(SOLVER_MODES)}"
            )
        return self


class CurveSchema(BaseModel):
    displacement_mm: list[float]
    force_N: list[float]


class RunResult(BaseModel):
    completed: bool
    failure: Optional[str] = None
    n_steps: int
    peak_force_N: float
    displacement_at_peak_mm: float
    sigma_c_MPa: float
    max_phi: float
    wall_time_s: float
    curve: CurveSchema
    files: list[str] = []


class SweepRequest(BaseModel):
    mesh: MeshSpec
    material: MaterialSchema
    control: ControlSchema
    axes: dict[str, list[float]]  # keys: E_MPa, Gc_N_per_mm, ell_mm
    mode: str = "monolithic-full"
    override_resolution: bool = False
    workers: int = Field(default=1, gt=0)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _validate(self):
        if self.mode not in SOLVER_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        known = {"E_MPa", "Gc_N_per_mm", "ell_mm"}
        for key, values in self.axes.items():
            if key not in known:
                raise ValueError(f"unknown axis {key!r}; choose from {sorted(known)}")
            if not values or any(v <= 0 for v in values):
                raise ValueError(f"axis {key!r} needs positive values")
        return self


class SweepRowSchema(BaseModel):
    E_MPa: float
    Gc_N_per_mm: float
    ell_mm: float
    sigma_c_MPa: float
    peak_force_N: float
    disp_at_peak_mm: float
    converged: bool


class SweepResultSchema(BaseModel):
    rows: list[SweepRowSchema]
    all_converged: bool
    wall_time_s: float
    files: list[str] = []


class StrengthRequest(BaseModel):
    material: MaterialSchema


class StrengthResponse(BaseModel):
    sigma_c_MPa: float


class Verify1DRequest(BaseModel):
    material: MaterialSchema
    n_steps: int = Field(default=300, gt=0)


class Verify1DResponse(BaseModel):
    sigma_c_analytic_MPa: float
    sigma_c_fem_MPa: float
    peak_strain_analytic: float
    peak_strain_fem: float
    rel_err_stress: float
    rel_err_strain: float
    passed: bool


class CheckMeshRequest(BaseModel):
    mesh: MeshSpec
    ell_mm: float = Field(gt=0)
    region: Optional[str] = None


class ResolutionSchema(BaseModel):
    h_min: float
    h_max: float
    h_crackzone: float
    ratio: float
    passed: bool


class JobCreated(BaseModel):
    job_id: str


class JobStatus(BaseModel):
    job_id: str
    kind: str
    state: str  # queued | running | succeeded | failed
    error: Optional[str] = None
    error_kind: Optional[str] = None  # config | resolution | solver
    result: Optional[dict] = None


class HealthResponse(BaseModel):
    status: str
    version: str
