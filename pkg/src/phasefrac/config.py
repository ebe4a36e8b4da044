"""Declarative YAML run/sweep configurations.

A run configuration is a single YAML file; all physical quantities carry
their unit in the key name (``E_MPa``, ``Gc_N_per_mm``, ``u_max_mm``) so
the kJ/m^2 vs N/mm ambiguity cannot arise. Parse errors report the
offending line; semantic errors report the offending key.

Example run configuration::

    mesh:
      builtin: SENT          # or  file: path/to/mesh.msh
      scale: 1
    material:
      E_MPa: 600.0
      nu: 0.2
      Gc_N_per_mm: 0.13
      ell_mm: 0.1
      kappa: 1.0e-7
    control:
      u_max_mm: 0.012
      n_steps: 80
    solver:
      mode: monolithic-full  # monolithic-full | monolithic-block | staggered
      phi_form: direct       # direct | heat
      override_resolution: false
    bcs:                     # optional; defaults come with builtin specimens
      - {node_set: load_line, component: uy, value_mm: 0.012}
    output:
      vtk_every: 0
      csv: true
      crack_path: false
      crack_surface: false
      surface_spacing_mm: 0.1

Example sweep plan::

    benchmark: {builtin: HC, scale: 1}
    material: {E_MPa: 600.0, nu: 0.2, Gc_N_per_mm: 0.13, ell_mm: 0.5}
    axes:
      Gc_N_per_mm: [0.13, 0.26]
    control: {u_max_mm: 0.3, n_steps: 100}
    workers: 2
"""

from __future__ import annotations

from pathlib import Path

import yaml
from pydantic import ValidationError

from .service.schemas import RunRequest, SweepRequest


class ConfigError(Exception):
    """Unreadable or invalid configuration file."""


def load_yaml(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"{path}: {where}{exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return doc


def _validation_message(path, exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return f"{path}: invalid configuration: " + "; ".join(lines)


def load_run_request(path) -> RunRequest:
    """Parse and validate a run configuration file."""
    doc = load_yaml(path)
    solver = doc.pop("solver", {}) or {}
    payload = dict(doc)
    for key in ("mode", "phi_form", "override_resolution"):
        if key in solver:
            payload[key] = solver[key]
    try:
        req = RunRequest(**payload)
    except ValidationError as exc:
        raise ConfigError(_validation_message(path, exc)) from None
    if req.mesh.file is not None and not Path(req.mesh.file).exists():
        raise ConfigError(f"{path}: mesh.file {req.mesh.file!r} does not exist")
    return req


def load_sweep_request(path) -> SweepRequest:
    """Parse and validate a sweep plan file."""
    doc = load_yaml(path)
    if "benchmark" in doc and "mesh" not in doc:
        doc["mesh"] = doc.pop("benchmark")
    try:
        return SweepRequest(**doc)
    except ValidationError as exc:
        raise ConfigError(_validation_message(path, exc)) from None
