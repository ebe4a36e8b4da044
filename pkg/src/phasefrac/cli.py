"""Batch command line client for the solver service.

The CLI is a thin HTTP client: every command talks to the service API.
By default it embeds the service in-process (no server required, output
files land on the local filesystem); ``--server URL`` points it at a
running ``phasefrac serve`` instance instead.

Exit codes for ``run``: 0 success, 2 configuration error, 3 resolution
check failure, 4 solver failure (partial outputs retained).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
import time

import httpx

from . import __version__
from .config import ConfigError, load_run_request, load_sweep_request

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_RESOLUTION = 3
EXIT_SOLVER = 4

_KIND_EXIT = {"config": EXIT_CONFIG, "resolution": EXIT_RESOLUTION, "solver": EXIT_SOLVER}


class ServiceClient:
    """Synchronous client over HTTP or an embedded in-process app."""

    def __init__(self, base_url: str | None = None, threads: int = 2):
        self.base_url = base_url
        self._transport = None
        if base_url is None:
            from .service import create_app

            self._transport = httpx.ASGITransport(app=create_app(max_workers=threads))

    def request(self, method: str, path: str, payload=None) -> tuple[int, dict]:
        if self._transport is not None:
            async def _go():
                async with httpx.AsyncClient(
                    transport=self._transport, base_url="http://phasefrac", timeout=None
                ) as client:
                    resp = await client.request(method, path, json=payload)
                    return resp.status_code, resp.json()

            return asyncio.run(_go())
        with httpx.Client(base_url=self.base_url, timeout=None) as client:
            resp = client.request(method, path, json=payload)
            return resp.status_code, resp.json()

    def post(self, path: str, payload: dict) -> tuple[int, dict]:
        return self.request("POST", path, payload)

    def get(self, path: str) -> tuple[int, dict]:
        return self.request("GET", path)

    def run_job(self, path: str, payload: dict, poll: float = 0.25) -> dict:
        """Submit a job and poll until it finishes; returns the job status."""
        status, body = self.post(path, payload)
        if status != 202:
            raise ClientError(status, body)
        job_id = body["job_id"]
        while True:
            status, body = self.get(f"/jobs/{job_id}")
            if status != 200:
                raise ClientError(status, body)
            if body["state"] in ("succeeded", "failed"):
                return body
            time.sleep(poll)


class ClientError(Exception):
    def __init__(self, status: int, body):
        super().__init__(f"service returned {status}: {body}")
        self.status = status
        self.body = body


def _fail_config(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_run(args) -> int:
    try:
        req = load_run_request(args.config)
    except ConfigError as exc:
        return _fail_config(str(exc))
    payload = req.model_dump()
    if args.output is not None:
        payload["output_dir"] = args.output
    if args.override_resolution:
        payload["override_resolution"] = True
    if args.mode is not None:
        payload["mode"] = args.mode
    client = ServiceClient(args.server, threads=args.threads)
    try:
        job = client.run_job("/jobs/run", payload)
    except ClientError as exc:
        if exc.status == 422:
            return _fail_config(json.dumps(exc.body))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    result = job.get("result") or {}
    if job["state"] == "failed":
        print(f"run failed ({job.get('error_kind')}): {job.get('error')}", file=sys.stderr)
        return _KIND_EXIT.get(job.get("error_kind"), EXIT_FAIL)
    print(f"completed {result['n_steps']} steps")
    print(f"peak force          : {result['peak_force_N']:.6g} N")
    print(f"displacement at peak: {result['displacement_at_peak_mm']:.6g} mm")
    print(f"implied strength    : {result['sigma_c_MPa']:.6g} MPa")
    print(f"wall time           : {result['wall_time_s']:.2f} s")
    for note in result.get("notes", []):
        print(f"note: {note}")
    for f in result.get("files", []):
        print(f"wrote {f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        req = load_sweep_request(args.plan)
    except ConfigError as exc:
        return _fail_config(str(exc))
    payload = req.model_dump()
    if args.output is not None:
        payload["output_dir"] = args.output
    if args.threads is not None:
        payload["workers"] = args.threads
    if args.override_resolution:
        payload["override_resolution"] = True
    client = ServiceClient(args.server, threads=max(args.threads or 1, 1))
    try:
        job = client.run_job("/jobs/sweep", payload)
    except ClientError as exc:
        if exc.status == 422:
            return _fail_config(json.dumps(exc.body))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if job["state"] == "failed":
        print(f"sweep failed ({job.get('error_kind')}): {job.get('error')}", file=sys.stderr)
        return _KIND_EXIT.get(job.get("error_kind"), EXIT_FAIL)
    result = job["result"]
    header = f"{'E_MPa':>10} {'Gc_N_per_mm':>12} {'ell_mm':>8} {'sigma_c':>9} {'peak_N':>10} {'ok':>3}"
    print(header)
    for row in result["rows"]:
        print(
            f"{row['E_MPa']:>10.4g} {row['Gc_N_per_mm']:>12.4g} {row['ell_mm']:>8.4g} "
            f"{row['sigma_c_MPa']:>9.4g} {row['peak_force_N']:>10.5g} "
            f"{'yes' if row['converged'] else 'NO':>3}"
        )
    for f in result.get("files", []):
        print(f"wrote {f}")
    if not result["all_converged"]:
        print("error: one or more sweep runs failed", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify1d(args) -> int:
    payload = {
        "material": {
            "E_MPa": args.E_MPa,
            "nu": args.nu,
            "Gc_N_per_mm": args.Gc_N_per_mm,
            "ell_mm": args.ell_mm,
            "kappa": args.kappa,
        },
        "n_steps": args.steps,
    }
    client = ServiceClient(args.server, threads=args.threads)
    status, body = client.post("/verify1d", payload)
    if status == 422:
        return _fail_config(json.dumps(body))
    if status != 200:
        print(f"error: service returned {status}: {body}", file=sys.stderr)
        return EXIT_FAIL
    print(f"analytic peak stress: {body['sigma_c_analytic_MPa']:.6g} MPa")
    print(f"FEM peak stress     : {body['sigma_c_fem_MPa']:.6g} MPa "
          f"(rel err {body['rel_err_stress']:.2e})")
    print(f"analytic peak strain: {body['peak_strain_analytic']:.6g}")
    print(f"FEM peak strain     : {body['peak_strain_fem']:.6g} "
          f"(rel err {body['rel_err_strain']:.2e})")
    print("PASS" if body["passed"] else "FAIL")
    return EXIT_OK if body["passed"] else EXIT_FAIL


def cmd_checkmesh(args) -> int:
    mesh = {"builtin": args.builtin, "scale": args.scale} if args.builtin else {"file": args.mesh}
    payload = {"mesh": mesh, "ell_mm": args.ell_mm, "region": args.region}
    client = ServiceClient(args.server, threads=args.threads)
    status, body = client.post("/check-mesh", payload)
    if status == 422:
        return _fail_config(json.dumps(body))
    if status == 400:
        return _fail_config(body.get("detail", str(body)))
    if status != 200:
        print(f"error: service returned {status}: {body}", file=sys.stderr)
        return EXIT_FAIL
    print(f"h_min       : {body['h_min']:.6g} mm")
    print(f"h_max       : {body['h_max']:.6g} mm")
    print(f"h_crackzone : {body['h_crackzone']:.6g} mm")
    print(f"ell / h     : {body['ratio']:.4g}  (rule: >= 5)")
    print("PASS" if body["passed"] else "FAIL")
    return EXIT_OK if body["passed"] else EXIT_FAIL


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(max_workers=args.threads), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasefrac",
        description="Phase field fracture solver: batch client and service",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--server", default=None, metavar="URL",
                       help="service URL (default: run the service in-process)")
        p.add_argument("--threads", type=int, default=2,
                       help="worker threads for the embedded service / sweep workers")

    p = sub.add_parser("run", help="run one simulation from a YAML config")
    p.add_argument("config", help="run configuration file")
    p.add_argument("--output", "-o", default=None, metavar="DIR",
                   help="output directory (overrides the config)")
    p.add_argument("--override-resolution", action="store_true",
                   help="skip the ell/5 mesh resolution check")
    p.add_argument("--mode", default=None,
                   choices=["monolithic-full", "monolithic-block", "staggered"])
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep from a YAML plan")
    p.add_argument("plan", help="sweep plan file")
    p.add_argument("--output", "-o", default=None, metavar="DIR")
    p.add_argument("--override-resolution", action="store_true")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify1d", help="single-element check against the 1D solution")
    p.add_argument("--E-MPa", dest="E_MPa", type=float, required=True)
    p.add_argument("--nu", type=float, default=0.2)
    p.add_argument("--Gc-N-per-mm", dest="Gc_N_per_mm", type=float, required=True)
    p.add_argument("--ell-mm", dest="ell_mm", type=float, required=True)
    p.add_argument("--kappa", type=float, default=1e-7)
    p.add_argument("--steps", type=int, default=300)
    common(p)
    p.set_defaults(func=cmd_verify1d)

    p = sub.add_parser("checkmesh", help="report the ell/5 resolution rule")
    p.add_argument("mesh", nargs="?", default=None, help="Gmsh MSH 2.2 file")
    p.add_argument("--builtin", default=None, help="built-in geometry name instead of a file")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--ell-mm", dest="ell_mm", type=float, required=True)
    p.add_argument("--region", default=None, help="node set to check (default: crack_zone)")
    common(p)
    p.set_defaults(func=cmd_checkmesh)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8432)
    p.add_argument("--threads", type=int, default=2)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "checkmesh" and (args.mesh is None) == (args.builtin is None):
        print("error: give either a mesh file or --builtin NAME", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
