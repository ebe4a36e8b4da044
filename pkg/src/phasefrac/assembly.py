"""Global residual and tangent assembly for the coupled problem.

DOF layout: displacement DOFs first (node-major, component-minor), then
one phase field DOF per node. Element contributions are evaluated in
vectorized form over per-kind blocks and scattered with a precomputed
sparsity pattern; the same physics is also exposed per element
(:func:`element_residual`, :func:`element_tangent`) as the reference path
used by the verification tests.

The phase field block can be assembled through two algebraically
equivalent routes: the direct damage-equation form, and the
heat-conduction form (unit conductivity, nonlinear source) scaled by
``Gc * ell``. Both are kept as independent code paths so they can
cross-validate each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .elements import VOIGT_SIZE, batch_kinematics, element_kinematics, quad_rule
from .material import MaterialParams, QuadState, _VOIGT_OPS, split, split_arrays
from .mesh import Mesh

COMPONENT_INDEX = {"ux": 0, "uy": 1, "uz": 2}

COUPLING_MODES = ("full", "block_diagonal")


@dataclass(frozen=True)
class BoundaryCondition:
    """Prescribed displacement on a named node set.

    ``value`` is the displacement (mm) at load factor 1; the applied value
    scales linearly with the load factor.
    """

    node_set: str
    component: str
    value: float

    def __post_init__(self):
        if self.component not in COMPONENT_INDEX:
            raise ValueError(f"unknown component {self.component!r}")


class DofMap:
    """Global DOF numbering and the constrained set.

    Displacement DOF of node ``n``, component ``c`` is ``dim * n + c``;
    the phase field DOF of node ``n`` is ``n_u + n``. Every DOF is either
    free or constrained, never both.
    """

    def __init__(self, mesh: Mesh, bcs=()):
        self.dim = mesh.dim
        self.n_nodes = mesh.n_nodes
        self.n_u = self.dim * self.n_nodes
        self.n_dof = self.n_u + self.n_nodes

        dofs: dict[int, float] = {}
        for bc in bcs:
            comp = COMPONENT_INDEX[bc.component]
            if comp >= self.dim:
                raise ValueError(
                    f"component {bc.component!r} invalid for a {self.dim}D mesh"
                )
            for n in mesh.node_set(bc.node_set):
                d = self.dim * int(n) + comp
                if d in dofs and dofs[d] != bc.value:
                    raise ValueError(
                        f"DOF {d} constrained twice with conflicting values "
                        f"({dofs[d]} vs {bc.value})"
                    )
                dofs[d] = bc.value
        self.constrained_dofs = np.array(sorted(dofs), dtype=np.intp)
        self.constrained_values = np.array([dofs[d] for d in sorted(dofs)], dtype=float)
        self.free_mask = np.ones(self.n_dof, dtype=bool)
        self.free_mask[self.constrained_dofs] = False

    def u_dof(self, node: int, component: int) -> int:
        return self.dim * node + component

    def phi_dof(self, node: int) -> int:
        return self.n_u + node

    def prescribed(self, load_factor: float) -> np.ndarray:
        """Prescribed values of the constrained DOFs at a load factor."""
        return self.constrained_values * load_factor

    def set_dofs(self, node_set_ids, component: int) -> np.ndarray:
        """Displacement DOF ids of a node set for one component."""
        return self.dim * np.asarray(node_set_ids, dtype=np.intp) + component


@dataclass
class SparsePattern:
    """COO scatter pattern of the global Jacobian (union of element cliques)."""

    rows: np.ndarray
    cols: np.ndarray
    n_dof: int


@dataclass
class BlockData:
    """Precomputed kinematics and scatter indices for one element block."""

    kind: str
    conn: np.ndarray
    N: np.ndarray        # (nqp, nper)
    B_u: np.ndarray      # (ne, nqp, nv, dim * nper)
    B_phi: np.ndarray    # (ne, nqp, dim, nper)
    detJxW: np.ndarray   # (ne, nqp)
    dofs_u: np.ndarray   # (ne, dim * nper)
    dofs_phi: np.ndarray  # (ne, nper)
    edofs: np.ndarray    # (ne, dim * nper + nper)

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]

    @property
    def n_qp(self) -> int:
        return self.detJxW.shape[1]


def precompute(mesh: Mesh):
    """Precompute per-block kinematics and the global sparsity pattern.

    Returns ``(blocks, pattern)``. The mesh is immutable, so the result
    may be shared freely across solves.
    """
    dim = mesh.dim
    n_u = dim * mesh.n_nodes
    blocks = []
    rows_all, cols_all = [], []
    for block in mesh.blocks:
        conn = block.conn
        N, B_u, B_phi, detJxW = batch_kinematics(block.kind, mesh.nodes[conn])
        dofs_u = (dim * conn[:, :, None] + np.arange(dim)[None, None, :]).reshape(
            conn.shape[0], -1
        )
        dofs_phi = n_u + conn
        edofs = np.concatenate([dofs_u, dofs_phi], axis=1)
        blocks.append(
            BlockData(
                kind=block.kind,
                conn=conn,
                N=N,
                B_u=B_u,
                B_phi=B_phi,
                detJxW=detJxW,
                dofs_u=dofs_u,
                dofs_phi=dofs_phi,
                edofs=edofs,
            )
        )
        nloc = edofs.shape[1]
        rows_all.append(np.repeat(edofs, nloc, axis=1).ravel())
        cols_all.append(np.tile(edofs, (1, nloc)).ravel())
    pattern = SparsePattern(
        rows=np.concatenate(rows_all),
        cols=np.concatenate(cols_all),
        n_dof=n_u + mesh.n_nodes,
    )
    return blocks, pattern


def zero_history(blocks) -> list[np.ndarray]:
    """Fresh per-quadrature-point history storage for a block list."""
    return [np.zeros((b.n_elements, b.n_qp)) for b in blocks]


def _phi_terms_direct(params, N, w, phi_q, grad_phi, H_eff, B_phi):
    """Phase field residual/stiffness contributions, damage-equation form."""
    Gc, ell = params.Gc, params.ell
    coeff = (-2.0 * (1.0 - phi_q) * H_eff + Gc / ell * phi_q) * w
    R = np.einsum("eq,qa->ea", coeff, N)
    R += Gc * ell * np.einsum("eqda,eqd,eq->ea", B_phi, grad_phi, w)
    Kpp = np.einsum("qa,qb,eq->eab", N, N, (2.0 * H_eff + Gc / ell) * w)
    Kpp += Gc * ell * np.einsum("eqda,eqdb,eq->eab", B_phi, B_phi, w)
    return R, Kpp


def _phi_terms_heat(params, N, w, phi_q, grad_phi, H_eff, B_phi):
    """Same contributions through the heat-conduction form, scaled by Gc*ell."""
    Gc, ell = params.Gc, params.ell
    r = 2.0 * (1.0 - phi_q) * H_eff / (ell * Gc) - phi_q / ell**2
    dr = -2.0 * H_eff / (ell * Gc) - 1.0 / ell**2
    R = np.einsum("eqda,eqd,eq->ea", B_phi, grad_phi, w)
    R -= np.einsum("eq,qa->ea", r * w, N)
    Kpp = np.einsum("eqda,eqdb,eq->eab", B_phi, B_phi, w)
    Kpp -= np.einsum("qa,qb,eq->eab", N, N, dr * w)
    return Gc * ell * R, Gc * ell * Kpp


def assemble(
    mesh: Mesh,
    dofmap: DofMap,
    u: np.ndarray,
    phi: np.ndarray,
    history,
    params: MaterialParams,
    coupling: str = "full",
    phi_form: str = "direct",
    data=None,
):
    """Assemble the raw global residual and tangent.

    Parameters
    ----------
    u, phi : ndarray
        Current displacement vector (``n_u``) and nodal phase field
        (``n_nodes``).
    history : list of ndarray
        Committed history field per block, shape ``(ne, nqp)``. The
        effective driving force at each point is
        ``max(history, psi_plus(current strain))``.
    coupling : {"full", "block_diagonal"}
        ``full`` adds the displacement/phase-field coupling blocks, with
        the phase-to-displacement block gated by history activation
        (``psi_plus > stored H``); ``block_diagonal`` keeps only the two
        diagonal blocks.
    phi_form : {"direct", "heat"}
        Assembly route for the phase field block.

    Returns
    -------
    R : ndarray, shape (n_dof,)
        Raw residual (no constraint condensation).
    K : csr_matrix
        Raw tangent.
    """
    if coupling not in COUPLING_MODES:
        raise ValueError(f"unknown coupling mode {coupling!r}")
    if phi_form not in ("direct", "heat"):
        raise ValueError(f"unknown phi_form {phi_form!r}")
    if data is None:
        data = precompute(mesh)
    blocks, pattern = data

    Kmat, mu, kappa = params.K, params.mu, params.kappa
    nv = VOIGT_SIZE[mesh.dim]
    m, J_dev = _VOIGT_OPS[nv]
    M = np.outer(m, m)

    R = np.zeros(dofmap.n_dof)
    vals_all = []
    for b, H in zip(blocks, history):
        w = b.detJxW
        u_e = u[b.dofs_u]
        phi_e = phi[b.conn]
        eps = np.einsum("eqvj,ej->eqv", b.B_u, u_e)
        psi_p, _, sig_p, sig_m, pos = split_arrays(eps, Kmat, mu)
        phi_q = np.einsum("qa,ea->eq", b.N, phi_e)
        grad_phi = np.einsum("eqda,ea->eqd", b.B_phi, phi_e)
        H_eff = np.maximum(H, psi_p)
        g = (1.0 - phi_q) ** 2 + kappa

        S = g[..., None] * sig_p + sig_m
        R_u = np.einsum("eqvj,eqv,eq->ej", b.B_u, S, w)

        phi_terms = _phi_terms_direct if phi_form == "direct" else _phi_terms_heat
        R_phi, Kpp = phi_terms(params, b.N, w, phi_q, grad_phi, H_eff, b.B_phi)

        posf = pos.astype(float)
        C_eff = (2.0 * mu * g)[..., None, None] * J_dev + (
            Kmat * (g * posf + (1.0 - posf))
        )[..., None, None] * M
        T = np.einsum("eqvw,eqwj->eqvj", C_eff, b.B_u)
        Kuu = np.einsum("eqvi,eqvj,eq->eij", b.B_u, T, w)

        ne = b.n_elements
        nu_e = b.dofs_u.shape[1]
        nloc = b.edofs.shape[1]
        K_e = np.zeros((ne, nloc, nloc))
        K_e[:, :nu_e, :nu_e] = Kuu
        K_e[:, nu_e:, nu_e:] = Kpp
        if coupling == "full":
            a = np.einsum("eqvi,eqv->eqi", b.B_u, sig_p)
            scale = -2.0 * (1.0 - phi_q) * w
            K_e[:, :nu_e, nu_e:] = np.einsum("eqi,qa,eq->eia", a, b.N, scale)
            active = (psi_p > H).astype(float)
            K_e[:, nu_e:, :nu_e] = np.einsum("qa,eqi,eq->eai", b.N, a, scale * active)

        R_e = np.concatenate([R_u, R_phi], axis=1)
        R += np.bincount(b.edofs.ravel(), weights=R_e.ravel(), minlength=dofmap.n_dof)
        vals_all.append(K_e.ravel())

    K = sp.coo_matrix(
        (np.concatenate(vals_all), (pattern.rows, pattern.cols)),
        shape=(pattern.n_dof, pattern.n_dof),
    ).tocsr()
    return R, K


def condense_constraints(K, R, x: np.ndarray, dofs, values):
    """Condense arbitrary single-DOF constraints into an assembled system.

    Constrained rows and columns are zeroed with a unit diagonal; the
    column coupling moves to the right-hand side so that solving
    ``K_c dx = -R_c`` yields exactly ``dx_c = value - x_c`` on the
    constrained set. ``R_c`` on that set equals ``x_c - value``.
    """
    dofs = np.asarray(dofs, dtype=np.intp)
    values = np.asarray(values, dtype=float)
    n = R.shape[0]
    wvec = np.zeros(n)
    wvec[dofs] = values - x[dofs]
    R_c = R + K @ wvec
    R_c[dofs] = x[dofs] - values
    free = np.ones(n)
    free[dofs] = 0.0
    keep = sp.diags(free)
    K_c = keep @ K @ keep + sp.diags(1.0 - free)
    return K_c.tocsc(), R_c


def condense(K, R, dofmap: DofMap, x: np.ndarray, load_factor: float):
    """Condense the boundary-condition constraints at a load factor."""
    return condense_constraints(
        K, R, x, dofmap.constrained_dofs, dofmap.prescribed(load_factor)
    )


def _history_values(states, n_qp: int) -> np.ndarray:
    if states is None:
        return np.zeros(n_qp)
    H = np.array(
        [s.H if isinstance(s, QuadState) else float(s) for s in states], dtype=float
    )
    if H.size != n_qp:
        raise ValueError(f"expected {n_qp} per-point states, got {H.size}")
    return H


def element_residual(element, mesh, u_nodal, phi_nodal, states, params, phi_form="direct"):
    """Reference single-element residual ``(R_u, R_phi)``.

    ``states`` holds the committed per-quadrature-point history (as
    :class:`~phasefrac.material.QuadState` or plain floats); the driving
    force uses ``max(stored H, current psi_plus)``.
    """
    rule = quad_rule(element.kind)
    H = _history_values(states, rule.n_points)
    u_nodal = np.asarray(u_nodal, dtype=float).ravel()
    phi_nodal = np.asarray(phi_nodal, dtype=float).ravel()
    Gc, ell = params.Gc, params.ell
    R_u = np.zeros(u_nodal.size)
    R_phi = np.zeros(phi_nodal.size)
    for q in range(rule.n_points):
        kin = element_kinematics(element.kind, mesh.nodes[element.node_ids], q)
        eps = kin.B_u @ u_nodal
        res = split(eps, params)
        phi_q = float(kin.N @ phi_nodal)
        grad = kin.B_phi @ phi_nodal
        H_eff = max(H[q], res.psi_plus)
        g = (1.0 - phi_q) ** 2 + params.kappa
        w = kin.detJxW
        R_u += w * (kin.B_u.T @ (g * res.sigma0_plus + res.sigma0_minus))
        if phi_form == "direct":
            R_phi += w * (
                (-2.0 * (1.0 - phi_q) * H_eff + Gc / ell * phi_q) * kin.N
                + Gc * ell * (kin.B_phi.T @ grad)
            )
        else:
            r = 2.0 * (1.0 - phi_q) * H_eff / (ell * Gc) - phi_q / ell**2
            R_phi += w * Gc * ell * (kin.B_phi.T @ grad - r * kin.N)
    return R_u, R_phi


def element_tangent(element, mesh, u_nodal, phi_nodal, states, params, coupling="full"):
    """Reference single-element tangent, DOFs ordered ``[u..., phi...]``."""
    if coupling not in COUPLING_MODES:
        raise ValueError(f"unknown coupling mode {coupling!r}")
    rule = quad_rule(element.kind)
    H = _history_values(states, rule.n_points)
    u_nodal = np.asarray(u_nodal, dtype=float).ravel()
    phi_nodal = np.asarray(phi_nodal, dtype=float).ravel()
    Gc, ell = params.Gc, params.ell
    n_u = u_nodal.size
    n_p = phi_nodal.size
    K_e = np.zeros((n_u + n_p, n_u + n_p))
    for q in range(rule.n_points):
        kin = element_kinematics(element.kind, mesh.nodes[element.node_ids], q)
        eps = kin.B_u @ u_nodal
        res = split(eps, params)
        phi_q = float(kin.N @ phi_nodal)
        H_eff = max(H[q], res.psi_plus)
        g = (1.0 - phi_q) ** 2 + params.kappa
        w = kin.detJxW
        C_eff = g * res.C0_plus + res.C0_minus
        K_e[:n_u, :n_u] += w * (kin.B_u.T @ C_eff @ kin.B_u)
        K_e[n_u:, n_u:] += w * (
            (2.0 * H_eff + Gc / ell) * np.outer(kin.N, kin.N)
            + Gc * ell * (kin.B_phi.T @ kin.B_phi)
        )
        if coupling == "full":
            a = kin.B_u.T @ res.sigma0_plus
            K_e[:n_u, n_u:] += w * (-2.0 * (1.0 - phi_q)) * np.outer(a, kin.N)
            if res.psi_plus > H[q]:
                K_e[n_u:, :n_u] += w * (-2.0 * (1.0 - phi_q)) * np.outer(kin.N, a)
    return K_e


def assemble_phi_heat(mesh: Mesh, dofmap: DofMap, u, phi, history, params, data=None):
    """Phase field block in the heat-conduction form (node-indexed, unscaled).

    Weak form of ``laplacian(phi) = -r(phi, H)`` with unit conductivity.
    Multiplying the returned residual and matrix by ``Gc * ell``
    reproduces the damage-equation phase field block exactly.
    """
    if data is None:
        data = precompute(mesh)
    blocks, _ = data
    n = mesh.n_nodes
    R = np.zeros(n)
    rows_all, cols_all, vals_all = [], [], []
    Gc, ell = params.Gc, params.ell
    for b, H in zip(blocks, history):
        w = b.detJxW
        u_e = u[b.dofs_u]
        phi_e = phi[b.conn]
        eps = np.einsum("eqvj,ej->eqv", b.B_u, u_e)
        psi_p, _, _, _, _ = split_arrays(eps, params.K, params.mu)
        H_eff = np.maximum(H, psi_p)
        phi_q = np.einsum("qa,ea->eq", b.N, phi_e)
        grad_phi = np.einsum("eqda,ea->eqd", b.B_phi, phi_e)
        r = 2.0 * (1.0 - phi_q) * H_eff / (ell * Gc) - phi_q / ell**2
        dr = -2.0 * H_eff / (ell * Gc) - 1.0 / ell**2
        R_e = np.einsum("eqda,eqd,eq->ea", b.B_phi, grad_phi, w)
        R_e -= np.einsum("eq,qa->ea", r * w, b.N)
        K_e = np.einsum("eqda,eqdb,eq->eab", b.B_phi, b.B_phi, w)
        K_e -= np.einsum("qa,qb,eq->eab", b.N, b.N, dr * w)
        R += np.bincount(b.conn.ravel(), weights=R_e.ravel(), minlength=n)
        nper = b.conn.shape[1]
        rows_all.append(np.repeat(b.conn, nper, axis=1).ravel())
        cols_all.append(np.tile(b.conn, (1, nper)).ravel())
        vals_all.append(K_e.ravel())
    K = sp.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(n, n),
    ).tocsr()
    return R, K


def update_history_arrays(mesh: Mesh, u, history, params, data=None):
    """Committed history after a converged step: running maximum of psi_plus."""
    if data is None:
        data = precompute(mesh)
    blocks, _ = data
    out = []
    for b, H in zip(blocks, history):
        eps = np.einsum("eqvj,ej->eqv", b.B_u, u[b.dofs_u])
        psi_p, _, _, _, _ = split_arrays(eps, params.K, params.mu)
        out.append(np.maximum(H, psi_p))
    return out


def energy_tallies(mesh: Mesh, u, phi, params, data=None):
    """Total elastic (degraded) and fracture surface energies.

    Returns ``(elastic, fracture)`` in N*mm (per mm thickness in 2D).
    """
    if data is None:
        data = precompute(mesh)
    blocks, _ = data
    elastic = 0.0
    fracture = 0.0
    for b in blocks:
        w = b.detJxW
        eps = np.einsum("eqvj,ej->eqv", b.B_u, u[b.dofs_u])
        psi_p, psi_m, _, _, _ = split_arrays(eps, params.K, params.mu)
        phi_e = phi[b.conn]
        phi_q = np.einsum("qa,ea->eq", b.N, phi_e)
        grad_phi = np.einsum("eqda,ea->eqd", b.B_phi, phi_e)
        g = (1.0 - phi_q) ** 2 + params.kappa
        elastic += float(((g * psi_p + psi_m) * w).sum())
        gamma = phi_q**2 / (2.0 * params.ell) + params.ell / 2.0 * (grad_phi**2).sum(
            axis=-1
        )
        fracture += float((params.Gc * gamma * w).sum())
    return elastic, fracture


def max_phi_nodes(phi: np.ndarray) -> float:
    return float(phi.max()) if phi.size else 0.0
