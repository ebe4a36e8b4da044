"""Single-element uniaxial check against the homogeneous 1D solution.

A single hexahedron is stretched along x with traction-free lateral faces,
which reproduces the homogeneous uniaxial-stress state for any Poisson's
ratio: the axial response follows ``sigma = (1 - phi)^2 E eps`` with
``phi = E eps^2 ell / (Gc + E eps^2 ell)``, peaking at the analytic
strength. The check drives the element well past the peak and compares the
discrete peak stress and peak strain with the closed forms.
"""

from __future__ import annotations

import numpy as np

from .assembly import BoundaryCondition
from .material import MaterialParams, critical_stress, homogeneous_1d, peak_strain
from .mesh import ElementBlock, Mesh
from .solver import StepControl, run


def uniaxial_element_mesh() -> Mesh:
    """Unit cube hex8 with face node sets for uniaxial-stress loading."""
    nodes = np.array(
        [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
            [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
        ],
        dtype=float,
    )
    conn = np.array([[0, 1, 2, 3, 4, 5, 6, 7]])
    xs = nodes[:, 0]
    sets = {
        "x0": np.nonzero(xs == 0.0)[0],
        "x1": np.nonzero(xs == 1.0)[0],
        "y0": np.nonzero(nodes[:, 1] == 0.0)[0],
        "z0": np.nonzero(nodes[:, 2] == 0.0)[0],
    }
    return Mesh(nodes=nodes, blocks=[ElementBlock("hex8", conn)], node_sets=sets)


def verify_1d(
    params: MaterialParams,
    n_steps: int = 300,
    eps_factor: float = 2.47,  # keeps the analytic peak off the step grid
    mode: str = "monolithic_full",
) -> dict:
    """Run the single-element uniaxial test and compare with closed forms.

    Returns a dict with the analytic and discrete peak stress/strain, the
    relative errors, the force-displacement samples and a ``passed`` flag
    (both errors below 1%).
    """
    mesh = uniaxial_element_mesh()
    eps_c = peak_strain(params)
    sigma_c = critical_stress(params)
    u_max = eps_factor * eps_c  # unit edge length
    bcs = [
        BoundaryCondition("x0", "ux", 0.0),
        BoundaryCondition("x1", "ux", u_max),
        BoundaryCondition("y0", "uy", 0.0),
        BoundaryCondition("z0", "uz", 0.0),
    ]
    control = StepControl(u_max=u_max, n_steps_initial=n_steps)
    record = run(mesh, params, bcs, control, mode=mode, override_resolution=True)
    if not record.completed:
        raise RuntimeError(f"uniaxial run failed: {record.failure}")

    # unit cross section: the reaction force is the axial stress
    strains = record.displacements
    stresses = record.forces
    i_peak = int(np.argmax(stresses))
    fem_sigma = float(stresses[i_peak])
    fem_eps = float(strains[i_peak])
    err_sigma = abs(fem_sigma - sigma_c) / sigma_c
    err_eps = abs(fem_eps - eps_c) / eps_c
    return {
        "sigma_c_analytic": sigma_c,
        "sigma_c_fem": fem_sigma,
        "peak_strain_analytic": eps_c,
        "peak_strain_fem": fem_eps,
        "rel_err_stress": err_sigma,
        "rel_err_strain": err_eps,
        "passed": bool(err_sigma < 0.01 and err_eps < 0.01),
        "strains": strains,
        "stresses": stresses,
        "record": record,
    }


def analytic_curve(params: MaterialParams, strains) -> np.ndarray:
    """Homogeneous 1D stresses at the given strain samples."""
    _, sigma = homogeneous_1d(params, np.asarray(strains, dtype=float))
    return sigma
