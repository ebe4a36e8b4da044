"""FastAPI application exposing the fracture solver.

Quick computations (strength, the single-element 1D check, mesh
resolution reports) are synchronous endpoints; simulations and sweeps are
submitted as jobs and polled at ``/jobs/{job_id}``.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from .jobs import JobError, JobStore
from .runner import (
    execute_checkmesh,
    execute_run,
    execute_strength,
    execute_sweep,
    execute_verify1d,
)
from .schemas import (
    CheckMeshRequest,
    HealthResponse,
    JobCreated,
    JobStatus,
    ResolutionSchema,
    RunRequest,
    StrengthRequest,
    StrengthResponse,
    SweepRequest,
    Verify1DRequest,
    Verify1DResponse,
)


def create_app(max_workers: int = 2) -> FastAPI:
    app = FastAPI(
        title="phasefrac",
        version=__version__,
        description="Phase field brittle fracture solver service",
    )
    store = JobStore(max_workers=max_workers)
    app.state.jobs = store

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/strength", response_model=StrengthResponse)
    def strength(req: StrengthRequest):
        return StrengthResponse(**execute_strength(req))

    @app.post("/verify1d", response_model=Verify1DResponse)
    def verify1d(req: Verify1DRequest):
        return Verify1DResponse(**execute_verify1d(req))

    @app.post("/check-mesh", response_model=ResolutionSchema)
    def check_mesh(req: CheckMeshRequest):
        try:
            return ResolutionSchema(**execute_checkmesh(req))
        except JobError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.post("/jobs/run", response_model=JobCreated, status_code=202)
    def submit_run(req: RunRequest):
        job_id = store.submit("run", lambda: execute_run(req))
        return JobCreated(job_id=job_id)

    @app.post("/jobs/sweep", response_model=JobCreated, status_code=202)
    def submit_sweep(req: SweepRequest):
        job_id = store.submit("sweep", lambda: execute_sweep(req))
        return JobCreated(job_id=job_id)

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job_status(job_id: str):
        job = store.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        return JobStatus(**job)

    return app
