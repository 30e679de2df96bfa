"""Discrete XY energy, its angle gradient, and continuum reference energies.

The energy of a discrete field is the stiffness-weighted sum over edges
(1/2) sum_{i,j} kappa_ij |v(i) - v(j)|^2, which coincides with the Dirichlet
integral of the piecewise-affine interpolant over the polyhedral surface.
All evaluations are sparse and exact; quadrature of the interpolant appears
only in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HairyBallUnsupported, LengthMismatch, QuadratureTooCoarse
from .surface import Sphere


@dataclass
class EnergyBreakdown:
    total: float
    per_region: dict = field(default_factory=dict)
    renormalized_remainder: float = 0.0
    log_eps: float = 0.0

    def as_dict(self):
        return {
            "total": self.total,
            "per_region": self.per_region,
            "renormalized_remainder": self.renormalized_remainder,
            "log_eps": self.log_eps,
        }


def xy_energy(tri, realized, region=None):
    """(1/2) sum of kappa_ij |v_i - v_j|^2, optionally over a triangle subset.

    The regional form accumulates per-triangle cotangent contributions, so
    energies over disjoint regions add up to the full sum.
    """
    if len(realized) != tri.n_vertices:
        raise LengthMismatch("field and mesh have different lengths")
    if region is None:
        # 1 - v_i . v_j summed with edge weights
        i, j = tri.edges[:, 0], tri.edges[:, 1]
        dots = np.einsum("ij,ij->i", realized[i], realized[j])
        return float(np.sum(tri.kappa * (1.0 - dots)))
    region = np.asarray(region, dtype=np.int64)
    t = tri.triangles[region]
    w = tri.tri_weights[region]
    total = 0.0
    for k, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        dots = np.einsum("ij,ij->i", realized[t[:, a]], realized[t[:, b]])
        total += np.sum(w[:, k] * (1.0 - dots))
    return float(total)


def xy_gradient(tri, frames, theta_or_field):
    """Exact dE/dtheta_i of the XY energy under the angle parametrization."""
    theta = getattr(theta_or_field, "theta", theta_or_field)
    if len(theta) != tri.n_vertices:
        raise LengthMismatch("field and mesh have different lengths")
    c = np.cos(theta)[:, None]
    s = np.sin(theta)[:, None]
    v = c * frames.e1 + s * frames.e2
    t = -s * frames.e1 + c * frames.e2
    neigh = tri.adjacency @ v
    return -np.einsum("ij,ij->i", t, neigh)


def energy_and_gradient(tri, frames, theta):
    """One-pass energy and gradient (shares the sparse matvec)."""
    c = np.cos(theta)[:, None]
    s = np.sin(theta)[:, None]
    v = c * frames.e1 + s * frames.e2
    t = -s * frames.e1 + c * frames.e2
    neigh = tri.adjacency @ v
    kappa_total = float(tri.kappa.sum())
    e = kappa_total - 0.5 * float(np.einsum("ij,ij->", v, neigh))
    g = -np.einsum("ij,ij->i", t, neigh)
    return e, g


def renormalized_remainder(energy, eps, K):
    """energy - K pi log(1/eps)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return float(energy - K * np.pi * np.log(1.0 / eps))


# ---------------------------------------------------------------------------
# continuum energies by parameter-grid quadrature
def _surface_derivative_frames(surface, U, V):
    Xu, Xv = surface.chart_partials(U, V)
    E = np.einsum("ij,ij->i", Xu, Xu)
    F = np.einsum("ij,ij->i", Xu, Xv)
    G = np.einsum("ij,ij->i", Xv, Xv)
    return Xu, Xv, E, F, G


def extrinsic_energy(surface, field_fn, resolution=128, dgamma_weight=0.5):
    """integral of |Du|^2 + weight * |dgamma[u]|^2 over M by midpoint quadrature.

    The covariant derivative is the tangential projection of the directional
    derivatives of the field; the shape-operator term is analytic.  The
    default weight 1/2 is the nematic-shell convention; weight 1 gives the
    full ambient Dirichlet split (the discrete-energy limit uses that one,
    see ambient_dirichlet_energy).
    """
    if resolution < 32:
        raise QuadratureTooCoarse("resolution must be at least 32")
    if isinstance(surface, Sphere):
        raise HairyBallUnsupported("no smooth unit tangent field exists on chi != 0")
    (u0, u1), (v0, v1) = surface.param_domain
    n = int(resolution)
    uu = u0 + (u1 - u0) * (np.arange(n) + 0.5) / n
    vv = v0 + (v1 - v0) * (np.arange(n) + 0.5) / n
    U, V = np.meshgrid(uu, vv, indexing="ij")
    U, V = U.ravel(), V.ravel()
    pts = surface.chart(U, V)
    nrm = surface.normal_of_params(U, V)
    Xu, Xv, E, F, G = _surface_derivative_frames(surface, U, V)
    dA = np.sqrt(np.maximum(E * G - F * F, 0.0))

    hu = 1e-6 * (u1 - u0)
    hv = 1e-6 * (v1 - v0)
    dU_du = (field_fn(surface.chart(U + hu, V)) - field_fn(surface.chart(U - hu, V))) / (2 * hu)
    dU_dv = (field_fn(surface.chart(U, V + hv)) - field_fn(surface.chart(U, V - hv))) / (2 * hv)

    # orthonormal tangent directions in coefficient space
    sqE = np.sqrt(E)
    L = np.sqrt(np.maximum(G - F * F / E, 1e-300))
    d1 = dU_du / sqE[:, None]
    d2 = (dU_dv - (F / E)[:, None] * dU_du) / L[:, None]

    def tangential_sq(d):
        nn = np.einsum("ij,ij->i", d, nrm)
        return np.einsum("ij,ij->i", d, d) - nn * nn

    D_sq = tangential_sq(d1) + tangential_sq(d2)
    u_vec = field_fn(pts)
    u_tan = u_vec - nrm * np.einsum("ij,ij->i", u_vec, nrm)[:, None]
    dg = surface._dgamma(U, V, u_tan)
    dg_sq = np.einsum("ij,ij->i", dg, dg)

    cell = (u1 - u0) * (v1 - v0) / n**2
    return float(np.sum((D_sq + dgamma_weight * dg_sq) * dA) * cell)


def ambient_dirichlet_energy(surface, field_fn, resolution=128):
    """(1/2) integral |grad_s u|^2 dS: the continuum limit of the XY energy."""
    return 0.5 * extrinsic_energy(surface, field_fn, resolution, dgamma_weight=1.0)


# ---------------------------------------------------------------------------
# interpolant diagnostics
def interpolant_gradient_sq(tri, realized):
    """|grad v_hat|^2 per triangle (constant on each triangle)."""
    g = tri.hat_gradients_all()
    v = realized[tri.triangles]  # (F, 3 corners, 3 comps)
    grad = np.einsum("tkc,tkd->tcd", v, g)  # sum_k v_k (x) g_k
    return np.einsum("tcd,tcd->t", grad, grad)


def interpolant_normal_defect(tri, realized):
    """max |v_hat . gamma| at barycentres: O(eps) by the interpolant bounds."""
    vbar = realized[tri.triangles].mean(axis=1)
    bary = tri.surface.project(tri.barycentres())
    u, v = tri.surface.params_of(bary)
    n = tri.surface.normal_of_params(u, v)
    return float(np.abs(np.einsum("ij,ij->i", vbar, n)).max())


def gl_pointwise_constant(tri, realized):
    """Measured constant C in (1 - |v_hat|^2)^2 <= C eps^2 |grad v_hat|^2.

    Evaluated at triangle barycentres; triangles with (numerically) constant
    field contribute 0/0 and are skipped.
    """
    vbar = realized[tri.triangles].mean(axis=1)
    defect = (1.0 - np.einsum("ij,ij->i", vbar, vbar)) ** 2
    grad_sq = interpolant_gradient_sq(tri, realized)
    eps = tri.mesh_size
    mask = grad_sq > 1e-12
    ratio = defect[mask] / (eps**2 * grad_sq[mask])
    return float(ratio.max()) if np.any(mask) else 0.0
