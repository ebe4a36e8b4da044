"""Element-level kinematics: shape functions, quadrature and B-matrices.

Supported element kinds are linear Lagrange elements: ``tri3``, ``quad4``,
``tet4`` and ``hex8``. All quadrature rules are full-integration rules for
these elements (1-point for simplices, 2-per-direction Gauss for tensor
elements).

Voigt convention
----------------
Strains and stresses use Voigt vectors with engineering shear
(``gamma_xy = 2 eps_xy``):

* 2D plane strain: ``(xx, yy, zz, xy)`` -- the ``zz`` slot is carried
  explicitly (and is zero for the strain) so that the full 3D trace is
  available to the constitutive split.
* 3D: ``(xx, yy, zz, xy, xz, yz)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NODES_PER_KIND = {"tri3": 3, "quad4": 4, "tet4": 4, "hex8": 8}
KIND_DIM = {"tri3": 2, "quad4": 2, "tet4": 3, "hex8": 3}

#: Number of Voigt components used for each spatial dimension.
VOIGT_SIZE = {2: 4, 3: 6}

_G = 1.0 / np.sqrt(3.0)


@dataclass(frozen=True)
class QuadRule:
    """Quadrature rule in parent coordinates.

    Attributes
    ----------
    points : ndarray, shape (nqp, dim)
        Parent-element coordinates of the integration points.
    weights : ndarray, shape (nqp,)
        Weights; they sum to the parent-element measure.
    """

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.weights)


def _tensor_rule(dim: int) -> QuadRule:
    axes = [np.array([-_G, _G])] * dim
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return QuadRule(points=pts, weights=np.ones(len(pts)))


_QUAD_RULES = {
    "tri3": QuadRule(points=np.array([[1 / 3, 1 / 3]]), weights=np.array([0.5])),
    "quad4": _tensor_rule(2),
    "tet4": QuadRule(points=np.array([[0.25, 0.25, 0.25]]), weights=np.array([1 / 6])),
    "hex8": _tensor_rule(3),
}

# Parent-node coordinates, fixed orderings (VTK-compatible).
_PARENT_NODES = {
    "tri3": np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    "quad4": np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]),
    "tet4": np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    "hex8": np.array(
        [
            [-1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0],
            [1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
            [1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, 1.0],
        ]
    ),
}


def quad_rule(kind: str) -> QuadRule:
    """Return the full-integration quadrature rule for an element kind."""
    try:
        return _QUAD_RULES[kind]
    except KeyError:
        raise ValueError(f"unknown element kind {kind!r}") from None


def shape_eval(kind: str, xi) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate shape functions and their parent-space gradients.

    Parameters
    ----------
    kind : str
        Element kind.
    xi : array_like
        Parent coordinates, length 2 or 3. Must lie inside (or on the
        boundary of) the parent element, tolerance 1e-12.

    Returns
    -------
    N : ndarray, shape (n_nodes,)
        Shape function values (partition of unity).
    dN : ndarray, shape (n_nodes, dim)
        Derivatives with respect to the parent coordinates.
    """
    xi = np.asarray(xi, dtype=float)
    tol = 1e-12
    if kind == "tri3":
        x, y = xi
        if x < -tol or y < -tol or x + y > 1 + tol:
            raise ValueError(f"point {xi} outside parent triangle")
        N = np.array([1 - x - y, x, y])
        dN = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    elif kind == "tet4":
        x, y, z = xi
        if x < -tol or y < -tol or z < -tol or x + y + z > 1 + tol:
            raise ValueError(f"point {xi} outside parent tetrahedron")
        N = np.array([1 - x - y - z, x, y, z])
        dN = np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    elif kind in ("quad4", "hex8"):
        if np.any(np.abs(xi) > 1 + tol):
            raise ValueError(f"point {xi} outside parent cube")
        nodes = _PARENT_NODES[kind]
        dim = nodes.shape[1]
        # N_a = prod_d (1 + xi_d * node_ad) / 2
        terms = (1.0 + nodes * xi) / 2.0  # (n_nodes, dim)
        N = terms.prod(axis=1)
        dN = np.empty_like(nodes)
        for d in range(dim):
            others = np.delete(terms, d, axis=1).prod(axis=1)
            dN[:, d] = nodes[:, d] / 2.0 * others
    else:
        raise ValueError(f"unknown element kind {kind!r}")
    return N, dN


@dataclass
class ElementKinematics:
    """Discrete kinematic operators at one integration point.

    Attributes
    ----------
    N : ndarray, shape (n_nodes,)
        Shape function values.
    B_u : ndarray, shape (n_voigt, dim * n_nodes)
        Strain-displacement matrix (Voigt, engineering shear). In 2D the
        ``zz`` row is identically zero (plane strain).
    B_phi : ndarray, shape (dim, n_nodes)
        Spatial gradient matrix for a scalar nodal field.
    detJxW : float
        Jacobian determinant times quadrature weight.
    """

    N: np.ndarray
    B_u: np.ndarray
    B_phi: np.ndarray
    detJxW: float


def _build_B_u(dNdx: np.ndarray) -> np.ndarray:
    """Assemble the Voigt strain-displacement matrix from shape gradients."""
    n, dim = dNdx.shape
    nv = VOIGT_SIZE[dim]
    B = np.zeros((nv, dim * n))
    if dim == 2:
        B[0, 0::2] = dNdx[:, 0]
        B[1, 1::2] = dNdx[:, 1]
        # row 2 (zz) stays zero: plane strain
        B[3, 0::2] = dNdx[:, 1]
        B[3, 1::2] = dNdx[:, 0]
    else:
        B[0, 0::3] = dNdx[:, 0]
        B[1, 1::3] = dNdx[:, 1]
        B[2, 2::3] = dNdx[:, 2]
        B[3, 0::3] = dNdx[:, 1]
        B[3, 1::3] = dNdx[:, 0]
        B[4, 0::3] = dNdx[:, 2]
        B[4, 2::3] = dNdx[:, 0]
        B[5, 1::3] = dNdx[:, 2]
        B[5, 2::3] = dNdx[:, 1]
    return B


def element_kinematics(kind: str, coords: np.ndarray, qp: int) -> ElementKinematics:
    """Kinematic operators for one element at one quadrature point.

    Parameters
    ----------
    kind : str
        Element kind.
    coords : ndarray, shape (n_nodes, dim)
        Physical node coordinates in element ordering.
    qp : int
        Quadrature point index within :func:`quad_rule`.

    Raises
    ------
    ValueError
        If the Jacobian determinant is not strictly positive.
    """
    rule = quad_rule(kind)
    N, dN = shape_eval(kind, rule.points[qp])
    J = dN.T @ coords  # J[i, j] = d x_j / d xi_i
    detJ = np.linalg.det(J)
    if detJ <= 0.0:
        raise ValueError(f"singular or inverted element: det J = {detJ:.3e}")
    dNdx = dN @ np.linalg.inv(J)
    return ElementKinematics(
        N=N,
        B_u=_build_B_u(dNdx),
        B_phi=dNdx.T.copy(),
        detJxW=detJ * rule.weights[qp],
    )


def kinematics_at(element, mesh, qp: int) -> ElementKinematics:
    """Kinematics for ``element`` of ``mesh`` at quadrature point ``qp``."""
    return element_kinematics(element.kind, mesh.nodes[element.node_ids], qp)


def strain(kin: ElementKinematics, u_nodal: np.ndarray) -> np.ndarray:
    """Small-strain Voigt vector from nodal displacements.

    ``u_nodal`` is the flat element displacement vector (node-major,
    component-minor). Plane strain carries an explicit zero ``zz`` slot.
    """
    u_nodal = np.asarray(u_nodal, dtype=float).ravel()
    if u_nodal.size != kin.B_u.shape[1]:
        raise ValueError(
            f"displacement vector length {u_nodal.size} does not match "
            f"B matrix columns {kin.B_u.shape[1]}"
        )
    return kin.B_u @ u_nodal


def batch_kinematics(kind: str, coords: np.ndarray):
    """Vectorized kinematics for a block of same-kind elements.

    Parameters
    ----------
    kind : str
        Element kind.
    coords : ndarray, shape (ne, n_nodes, dim)
        Node coordinates of every element in the block.

    Returns
    -------
    N : ndarray, shape (nqp, n_nodes)
    B_u : ndarray, shape (ne, nqp, n_voigt, dim * n_nodes)
    B_phi : ndarray, shape (ne, nqp, dim, n_nodes)
    detJxW : ndarray, shape (ne, nqp)

    Raises
    ------
    ValueError
        If any element has a non-positive Jacobian determinant.
    """
    rule = quad_rule(kind)
    ne, n, dim = coords.shape
    nv = VOIGT_SIZE[dim]
    nqp = rule.n_points
    N_all = np.empty((nqp, n))
    B_u = np.empty((ne, nqp, nv, dim * n))
    B_phi = np.empty((ne, nqp, dim, n))
    detJxW = np.empty((ne, nqp))
    for q in range(nqp):
        N, dN = shape_eval(kind, rule.points[q])
        N_all[q] = N
        J = np.einsum("ai,eaj->eij", dN, coords)
        detJ = np.linalg.det(J)
        if np.any(detJ <= 0.0):
            bad = int(np.argmax(detJ <= 0.0))
            raise ValueError(
                f"non-positive Jacobian (det J = {detJ[bad]:.3e}) in element "
                f"{bad} of a {kind} block"
            )
        dNdx = np.einsum("ai,eij->eaj", dN, np.linalg.inv(J))
        detJxW[:, q] = detJ * rule.weights[q]
        B_phi[:, q] = np.transpose(dNdx, (0, 2, 1))
        Bq = np.zeros((ne, nv, dim * n))
        if dim == 2:
            Bq[:, 0, 0::2] = dNdx[:, :, 0]
            Bq[:, 1, 1::2] = dNdx[:, :, 1]
            Bq[:, 3, 0::2] = dNdx[:, :, 1]
            Bq[:, 3, 1::2] = dNdx[:, :, 0]
        else:
            Bq[:, 0, 0::3] = dNdx[:, :, 0]
            Bq[:, 1, 1::3] = dNdx[:, :, 1]
            Bq[:, 2, 2::3] = dNdx[:, :, 2]
            Bq[:, 3, 0::3] = dNdx[:, :, 1]
            Bq[:, 3, 1::3] = dNdx[:, :, 0]
            Bq[:, 4, 0::3] = dNdx[:, :, 2]
            Bq[:, 4, 2::3] = dNdx[:, :, 0]
            Bq[:, 5, 1::3] = dNdx[:, :, 2]
            Bq[:, 5, 2::3] = dNdx[:, :, 1]
        B_u[:, q] = Bq
    return N_all, B_u, B_phi, detJxW
