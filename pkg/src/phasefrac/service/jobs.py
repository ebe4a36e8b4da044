"""Minimal in-memory job store backed by a thread pool.

Simulation runs are long; the service accepts them as jobs and clients
poll for completion. Job state lives in process memory, which matches the
intended deployment (one service per workstation, co-located with its
output directories).
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional


class JobError(Exception):
    """Job failure with a machine-readable kind (config/resolution/solver)."""

    def __init__(self, kind: str, message: str, result: Optional[dict] = None):
        super().__init__(message)
        self.kind = kind
        self.result = result


@dataclass
class Job:
    job_id: str
    kind: str
    state: str = "queued"
    error: Optional[str] = None
    error_kind: Optional[str] = None
    result: Optional[dict] = None
    _done: threading.Event = field(default_factory=threading.Event)

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "error": self.error,
            "error_kind": self.error_kind,
            "result": self.result,
        }


class JobStore:
    def __init__(self, max_workers: int = 2):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max_workers)

    def submit(self, kind: str, fn) -> str:
        """Queue ``fn`` (returning a result dict) and return the job id."""
        job = Job(job_id=uuid.uuid4().hex, kind=kind)
        with self._lock:
            self._jobs[job.job_id] = job

        def _task():
            with self._lock:
                job.state = "running"
            try:
                result = fn()
            except JobError as exc:
                with self._lock:
                    job.state = "failed"
                    job.error = str(exc)
                    job.error_kind = exc.kind
                    job.result = exc.result
            except Exception as exc:  # noqa: BLE001 - jobs must never kill the pool
                with self._lock:
                    job.state = "failed"
                    job.error = f"{type(exc).__name__}: {exc}"
                    job.error_kind = "solver"
            else:
                with self._lock:
                    job.state = "succeeded"
                    job.result = result
            finally:
                job._done.set()

        self._pool.submit(_task)
        return job.job_id

    def get(self, job_id: str) -> Optional[dict]:
        with self._lock:
            job = self._jobs.get(job_id)
            return job.to_dict() if job else None

    def wait(self, job_id: str, timeout: Optional[float] = None) -> Optional[dict]:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            return None
        job._done.wait(timeout)
        return self.get(job_id)

    def shutdown(self):
        self._pool.shutdown(wait=False)
