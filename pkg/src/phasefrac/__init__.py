"""Phase field brittle fracture solver (AT2, volumetric-deviatoric split)."""

from .assembly import BoundaryCondition, DofMap
from .geometry import builtin_geometry, sent_mesh, three_point_bending_mesh
from .material import MaterialParams, critical_stress, homogeneous_1d, peak_strain
from .mesh import Mesh, ResolutionReport, characteristic_size, read_gmsh, write_msh
from .solver import (
    ResolutionError,
    SimulationRecord,
    SolverError,
    StepControl,
    reaction_force,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition",
    "DofMap",
    "MaterialParams",
    "Mesh",
    "ResolutionError",
    "ResolutionReport",
    "SimulationRecord",
    "SolverError",
    "StepControl",
    "builtin_geometry",
    "characteristic_size",
    "critical_stress",
    "homogeneous_1d",
    "peak_strain",
    "reaction_force",
    "read_gmsh",
    "run",
    "sent_mesh",
    "three_point_bending_mesh",
    "write_msh",
]
