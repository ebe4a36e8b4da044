"""Constitutive point model for AT2 phase field fracture.

Implements the volumetric-deviatoric strain energy decomposition with a
Macaulay split on the trace, quadratic degradation with residual stiffness,
the history field that enforces damage irreversibility, the nonlinear
source term used by the heat-conduction form of the damage equation, and
the closed-form homogeneous 1D solution that ties the regularization
length to a material strength.

Units are N-mm-MPa throughout: ``E`` in MPa, ``Gc`` in N/mm (= kJ/m^2),
``ell`` in mm, energy densities in N/mm^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class MaterialParams:
    """Elastic and fracture parameters.

    Attributes
    ----------
    E : float
        Young's modulus (MPa).
    nu : float
        Poisson's ratio.
    Gc : float
        Critical energy release rate (N/mm).
    ell : float
        Phase field regularization length (mm).
    kappa : float
        Residual stiffness of the degradation function.
    """

    E: float
    nu: float
    Gc: float
    ell: float
    kappa: float = 1e-7

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"E must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"nu must lie in (-1, 0.5), got {self.nu}")
        if not self.Gc > 0:
            raise ValueError(f"Gc must be positive, got {self.Gc}")
        if not self.ell > 0:
            raise ValueError(f"ell must be positive, got {self.ell}")
        if not 0 < self.kappa < 1e-2:
            raise ValueError(f"kappa must be a small positive number, got {self.kappa}")

    @property
    def K(self) -> float:
        """Bulk modulus."""
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def mu(self) -> float:
        """Shear modulus."""
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        """First Lame constant."""
        return self.K - 2.0 * self.mu / 3.0

    def with_(self, **kwargs) -> "MaterialParams":
        return replace(self, **kwargs)


@dataclass
class QuadState:
    """Per-integration-point state.

    ``H`` is the running maximum of the tensile energy density over the
    converged load history; it never decreases.
    """

    H: float = 0.0
    phi: float = 0.0
    psi_plus: float = 0.0
    psi_minus: float = 0.0


@dataclass
class SplitResult:
    """Energies, stresses and tangents of the volumetric-deviatoric split."""

    psi_plus: float
    psi_minus: float
    sigma0_plus: np.ndarray
    sigma0_minus: np.ndarray
    C0_plus: np.ndarray
    C0_minus: np.ndarray


def _voigt_ops(nv: int):
    m = np.zeros(nv)
    m[:3] = 1.0
    # deviatoric projector in engineering-shear Voigt convention
    Is = np.eye(nv)
    Is[3:, 3:] *= 0.5
    J_dev = Is - np.outer(m, m) / 3.0
    return m, J_dev


_VOIGT_OPS = {4: _voigt_ops(4), 6: _voigt_ops(6)}


def split_arrays(eps: np.ndarray, K: float, mu: float):
    """Vectorized volumetric-deviatoric split over trailing Voigt axis.

    Parameters
    ----------
    eps : ndarray, shape (..., nv)
        Voigt strains with engineering shear; ``nv`` is 4 (plane strain,
        explicit zz slot) or 6.

    Returns
    -------
    psi_plus, psi_minus : ndarray, shape (...)
    sigma_plus, sigma_minus : ndarray, shape (..., nv)
    pos : ndarray of bool, shape (...)
        True where ``tr(eps) >= 0`` (the tie ``tr = 0`` is assigned to the
        positive branch).
    """
    eps = np.asarray(eps, dtype=float)
    nv = eps.shape[-1]
    if nv not in (4, 6):
        raise ValueError(f"expected Voigt vector of length 4 or 6, got {nv}")
    tr = eps[..., 0] + eps[..., 1] + eps[..., 2]
    pos = tr >= 0.0
    tr_p = np.where(pos, tr, 0.0)
    tr_m = np.where(pos, 0.0, tr)

    dev_n = eps[..., :3] - tr[..., None] / 3.0
    # tensor double contraction: shear slots hold gamma = 2 eps_shear
    dev_sq = (dev_n**2).sum(axis=-1) + 0.5 * (eps[..., 3:] ** 2).sum(axis=-1)

    psi_plus = 0.5 * K * tr_p**2 + mu * dev_sq
    psi_minus = 0.5 * K * tr_m**2

    sigma_plus = np.empty_like(eps)
    sigma_plus[..., :3] = K * tr_p[..., None] + 2.0 * mu * dev_n
    sigma_plus[..., 3:] = mu * eps[..., 3:]
    sigma_minus = np.zeros_like(eps)
    sigma_minus[..., :3] = K * tr_m[..., None]
    return psi_plus, psi_minus, sigma_plus, sigma_minus, pos


def split(eps, params: MaterialParams) -> SplitResult:
    """Volumetric-deviatoric split of one Voigt strain.

    The deviatoric energy goes entirely to the positive part; the
    volumetric energy is assigned by the sign of the full 3D trace
    (Macaulay brackets, ``tr = 0`` on the positive branch). Tangents are
    the exact stress derivatives on the respective trace branch.
    """
    eps = np.asarray(eps, dtype=float)
    psi_p, psi_m, sig_p, sig_m, pos = split_arrays(eps, params.K, params.mu)
    m, J_dev = _VOIGT_OPS[eps.shape[-1]]
    M = np.outer(m, m)
    if pos:
        C_p = params.K * M + 2.0 * params.mu * J_dev
        C_m = np.zeros_like(M)
    else:
        C_p = 2.0 * params.mu * J_dev
        C_m = params.K * M
    return SplitResult(
        psi_plus=float(psi_p),
        psi_minus=float(psi_m),
        sigma0_plus=sig_p,
        sigma0_minus=sig_m,
        C0_plus=C_p,
        C0_minus=C_m,
    )


def elastic_tensor(params: MaterialParams, nv: int) -> np.ndarray:
    """Undamaged isotropic stiffness in Voigt form (engineering shear)."""
    m, J_dev = _VOIGT_OPS[nv]
    return params.K * np.outer(m, m) + 2.0 * params.mu * J_dev


def degradation(phi: float, kappa: float) -> float:
    """Stiffness multiplier ``(1 - phi)^2 + kappa``."""
    return (1.0 - phi) ** 2 + kappa


def stress(eps, phi: float, params: MaterialParams) -> np.ndarray:
    """Damaged Cauchy stress: degraded tensile part plus intact compressive part."""
    res = split(eps, params)
    g = degradation(phi, params.kappa)
    return g * res.sigma0_plus + res.sigma0_minus


def update_history(state: QuadState, psi_plus: float) -> QuadState:
    """Commit a tensile energy density into the irreversibility record."""
    if psi_plus < 0:
        raise ValueError(f"psi_plus must be non-negative, got {psi_plus}")
    return QuadState(
        H=max(state.H, psi_plus),
        phi=state.phi,
        psi_plus=psi_plus,
        psi_minus=state.psi_minus,
    )


def heat_source(phi, H, params: MaterialParams):
    """Nonlinear source term of the heat-conduction form of the damage equation.

    Returns ``(r, dr_dphi)`` with

    .. code-block:: text

        r = 2 (1 - phi) H / (ell Gc) - phi / ell^2
        dr/dphi = -2 H / (ell Gc) - 1 / ell^2

    Both terms of the derivative are negative, so the source is strictly
    decreasing in ``phi``.
    """
    H = np.asarray(H, dtype=float)
    if np.any(H < 0):
        raise ValueError("history field must be non-negative")
    r = 2.0 * (1.0 - phi) * H / (params.ell * params.Gc) - phi / params.ell**2
    dr_dphi = -2.0 * H / (params.ell * params.Gc) - 1.0 / params.ell**2
    return r, dr_dphi


def critical_stress(params: MaterialParams) -> float:
    """Material strength implied by the regularization length.

    Peak stress of the homogeneous 1D coupled solution:
    ``sigma_c = sqrt(27 E Gc / (256 ell))``.
    """
    return math.sqrt(27.0 * params.E * params.Gc / (256.0 * params.ell))


def homogeneous_1d(params: MaterialParams, eps):
    """Homogeneous 1D coupled solution under monotone uniaxial loading.

    With ``H = psi_0 = E eps^2 / 2`` the damage equilibrium gives

    ``phi = E eps^2 ell / (Gc + E eps^2 ell)``,  ``sigma = (1 - phi)^2 E eps``.

    The maximum of ``sigma`` over ``eps`` equals :func:`critical_stress`
    and is attained at ``eps = sqrt(Gc / (3 E ell))``.

    Accepts scalar or array ``eps >= 0``; returns ``(phi, sigma)``.
    """
    eps = np.asarray(eps, dtype=float)
    if np.any(eps < 0):
        raise ValueError("monotone loading assumed: eps must be non-negative")
    drive = params.E * eps**2 * params.ell
    phi = drive / (params.Gc + drive)
    sigma = (1.0 - phi) ** 2 * params.E * eps
    if eps.ndim == 0:
        return float(phi), float(sigma)
    return phi, sigma


def peak_strain(params: MaterialParams) -> float:
    """Strain at which the homogeneous 1D stress peaks."""
    return math.sqrt(params.Gc / (3.0 * params.E * params.ell))
