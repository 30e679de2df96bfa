"""Discrete unit tangent vector fields and their constructions.

A field stores one angle per vertex; the realized vector at vertex i is
cos(theta_i) e1(i) + sin(theta_i) e2(i) in the per-vertex orthonormal frame,
so unit norm and tangency hold exactly by construction.  Frame-to-frame
comparisons go through the parallel-transport angle of each edge (minimal
rotation carrying gamma(i) onto gamma(j)); all angle differences are wrapped
to (-pi, pi].
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import (
    BadBarycentric,
    ChargeMismatch,
    LengthMismatch,
    VanishingField,
)
from .surface import GraphBump, Torus

FRAME_FALLBACK_TOL = 1e-6


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, float) + np.pi, 2 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2 * np.pi, w)


def _unit(a, axis=-1):
    return a / np.linalg.norm(a, axis=axis, keepdims=True)


@dataclass(frozen=True)
class FrameField:
    """Per-vertex right-handed orthonormal tangent frames."""

    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray

    def __len__(self):
        return len(self.e1)


@dataclass(frozen=True)
class DiscreteField:
    """Per-vertex angles, stored unwrapped in R."""

    theta: np.ndarray

    def __len__(self):
        return len(self.theta)


def build_frames(tri, reference_axis=(1.0, 0.0, 0.0)):
    """Project a fixed reference axis onto each tangent plane; gamma x e1 = e2.

    Vertices where the axis is within 1e-6 of the normal direction use the
    y axis instead (deterministic fallback).
    """
    gamma = tri.vertex_normals()
    a = np.asarray(reference_axis, float)
    e1 = a - gamma * (gamma @ a)[:, None]
    bad = np.linalg.norm(np.cross(np.broadcast_to(a, gamma.shape), gamma), axis=1) < FRAME_FALLBACK_TOL
    if np.any(bad):
        b = np.array([0.0, 1.0, 0.0]) if abs(a[1]) < 0.5 else np.array([0.0, 0.0, 1.0])
        e1[bad] = (b - gamma * (gamma @ b)[:, None])[bad]
    e1 = _unit(e1)
    return FrameField(e1=e1, e2=np.cross(gamma, e1), normal=gamma)


def realize(field, frames):
    """Per-vertex 3d unit tangent vectors of a discrete field."""
    if len(field) != len(frames):
        raise LengthMismatch("field and frames have different lengths")
    c = np.cos(field.theta)[:, None]
    s = np.sin(field.theta)[:, None]
    return c * frames.e1 + s * frames.e2


def angles_of_vectors(vectors, frames):
    """Angles of (tangent) vectors in the per-vertex frames."""
    return np.arctan2(
        np.einsum("ij,ij->i", vectors, frames.e2),
        np.einsum("ij,ij->i", vectors, frames.e1),
    )


def restrict_smooth(tri, frames, field_fn):
    """Discrete field sampling an analytic tangent field at the vertices."""
    v = np.asarray(field_fn(tri.vertices), float)
    if v.shape != tri.vertices.shape:
        raise LengthMismatch("analytic field returned wrong shape")
    nrm = np.linalg.norm(v, axis=1)
    if np.any(nrm < 1e-9):
        raise VanishingField(f"analytic field vanishes at vertex {int(np.argmin(nrm))}")
    return DiscreteField(theta=angles_of_vectors(v, frames))


def interpolant_eval(tri, realized, t, bary):
    """Piecewise-affine interpolant at barycentric coordinates of triangle t."""
    lam = np.asarray(bary, float)
    if lam.shape != (3,) or np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-9:
        raise BadBarycentric("coordinates must be nonnegative and sum to 1")
    idx = tri.triangles[t]
    return lam @ realized[idx]


# ---------------------------------------------------------------------------
# parallel transport along edges
def transport(frames, i_idx, j_idx):
    """Transport angle tau for directed vertex pairs (i -> j).

    The minimal rotation carrying gamma(i) onto gamma(j) maps e1(i) to a
    tangent vector at j whose frame angle is tau; a vector with angle t at i
    transports to angle t + tau at j.  Antisymmetric: tau(j->i) = -tau(i->j).
    """
    gi, gj = frames.normal[i_idx], frames.normal[j_idx]
    k = np.cross(gi, gj)
    s = np.linalg.norm(k, axis=1)
    c = np.einsum("ij,ij->i", gi, gj)
    v = frames.e1[i_idx]
    safe = np.maximum(s, 1e-300)[:, None]
    khat = k / safe
    rot = (
        v * c[:, None]
        + np.cross(khat, v) * s[:, None]
        + khat * (np.einsum("ij,ij->i", khat, v) * (1 - c))[:, None]
    )
    rot = np.where(s[:, None] < 1e-14, v, rot)
    return np.arctan2(
        np.einsum("ij,ij->i", rot, frames.e2[j_idx]),
        np.einsum("ij,ij->i", rot, frames.e1[j_idx]),
    )


def edge_transport(tri, frames):
    """tau for the canonical (i < j) edge orientation."""
    return transport(frames, tri.edges[:, 0], tri.edges[:, 1])


def triangle_transport(tri, frames):
    """tau for the directed edges (v0->v1, v1->v2, v2->v0) of every triangle."""
    t = tri.triangles
    return (
        transport(frames, t[:, 0], t[:, 1]),
        transport(frames, t[:, 1], t[:, 2]),
        transport(frames, t[:, 2], t[:, 0]),
    )


def triangle_holonomy(tri, frames):
    """Wrapped transport angle around each triangle; sums to 2 pi chi."""
    t01, t12, t20 = triangle_transport(tri, frames)
    return wrap_angle(t01 + t12 + t20)


# ---------------------------------------------------------------------------
# defect ansatz
def _connection_field(tri, frames, defect_tris, charges):
    """Least-squares edge 1-form with prescribed circulation around triangles.

    Circulation of the returned per-edge angles r around triangle T equals
    2 pi d_T - holonomy(T), so integrating theta along a spanning tree yields
    a field with winding d_T exactly at the prescribed triangles and zero
    elsewhere.  This is the curl-constrained ("as smooth as possible")
    realization of kappa-weighted harmonic angle interpolation; solving for
    single-valued angles directly would pin spurious branch-cut defects.
    """
    F = tri.n_triangles
    hol = triangle_holonomy(tri, frames)
    b = -hol
    for T, d in zip(defect_tris, charges):
        b[T] += 2 * np.pi * d
    # circulation operator: rows triangles, columns canonical edges
    t = tri.triangles
    sgn = np.empty((F, 3))
    for k, (a, bb) in enumerate(((0, 1), (1, 2), (2, 0))):
        sgn[:, k] = np.where(t[:, a] < t[:, bb], 1.0, -1.0)
    # tri.tri_edges[:, k] is the edge opposite corner k = (k+1, k+2)
    cols = np.stack([tri.tri_edges[:, 2], tri.tri_edges[:, 0], tri.tri_edges[:, 1]], axis=1)
    rows = np.repeat(np.arange(F), 3)
    C = sparse.csr_matrix(
        (sgn.ravel(), (rows, cols.ravel())), shape=(F, tri.n_edges)
    )
    # min ||r||^2 s.t. C r = b; one redundant row per closed component
    keep = np.arange(F - 1) if tri.closed else np.arange(F)
    Cr = C[keep]
    lam = spsolve((Cr @ Cr.T).tocsc(), b[keep])
    return C, np.asarray(Cr.T @ lam)


def _integrate_tree(tri, tau_edges, r):
    """theta by integrating tau + r over a BFS spanning tree from vertex 0."""
    nv = tri.n_vertices
    theta = np.zeros(nv)
    seen = np.zeros(nv, bool)
    adj = [[] for _ in range(nv)]
    for k, (i, j) in enumerate(tri.edges):
        adj[i].append((j, k, 1.0))
        adj[j].append((i, k, -1.0))
    q = deque([0])
    seen[0] = True
    while q:
        i = q.popleft()
        for j, k, sgn in adj[i]:
            if not seen[j]:
                seen[j] = True
                theta[j] = theta[i] + sgn * (tau_edges[k] + r[k])
                q.append(j)
    if not seen.all():
        raise ValueError("mesh is not connected")
    return theta


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def default_smooth_field(surface):
    """A canonical nonvanishing analytic tangent field on a chi = 0 surface."""
    if isinstance(surface, Torus):
        def major(pts):
            u, _ = surface.params_of(np.atleast_2d(pts))
            return np.stack([-np.sin(u), np.cos(u), np.zeros_like(u)], axis=-1)
        return major
    if isinstance(surface, GraphBump):
        def along_x(pts):
            pts = np.atleast_2d(pts)
            u, v = surface.params_of(pts)
            n = surface.normal_of_params(u, v)
            a = np.array([1.0, 0.0, 0.0])
            t = a - n * n[:, :1]
            return t
        return along_x
    raise ChargeMismatch("no global nonvanishing field exists when chi != 0")


def hedgehog_ansatz(tri, frames, defects, disc_radius=None):
    """Discrete field with prescribed unit-charge defects.

    ``defects`` is a sequence of (position, charge) with charges in {-1, +1}
    summing to chi(M).  Inside a geodesic disc of radius disc_radius/2 around
    each defect the angles follow the normal-coordinate profile z/|z| (its
    conjugate for charge -1); outside, the curl-constrained harmonic
    interpolation supplies the transition, and a collar blends the two.
    An empty defect list (chi = 0 only) reduces to restricting a canonical
    nonvanishing smooth field.
    """
    surf = tri.surface
    chi = surf.euler_characteristic
    if len(defects) == 0:
        if chi != 0:
            raise ChargeMismatch(f"charges sum to 0 but chi = {chi}")
        return restrict_smooth(tri, frames, default_smooth_field(surf))

    centers = [np.asarray(p, float) for p, _ in defects]
    charges = [int(d) for _, d in defects]
    if sum(charges) != chi:
        raise ChargeMismatch(f"charges sum to {sum(charges)} but chi = {chi}")
    if any(abs(d) != 1 for d in charges):
        raise ChargeMismatch("only unit charges are supported")

    # geodesic separation fixes the disc radius
    if len(centers) > 1:
        sep = min(
            surf.geodesic_distance(centers[a], centers[b])
            for a in range(len(centers))
            for b in range(a + 1, len(centers))
        )
    else:
        sep = surf.injectivity_radius
    max_disc = min(sep / 4.0, 0.5 * surf.injectivity_radius)
    sigma = disc_radius if disc_radius is not None else max_disc
    if sigma > max_disc + 1e-12:
        raise ValueError("disc_radius violates the separation precondition")
    sigma = max(sigma, min(4.0 * tri.mesh_size, max_disc))

    # transition field via the connection solve, defects at nearest triangles
    bary = tri.barycentres()
    defect_tris = []
    for c in centers:
        defect_tris.append(int(np.argmin(np.linalg.norm(bary - c, axis=1))))
    if len(set(defect_tris)) != len(defect_tris):
        raise ValueError("two defect centers fall in the same triangle")
    tau_edges = edge_transport(tri, frames)
    _, r = _connection_field(tri, frames, defect_tris, charges)
    theta = _integrate_tree(tri, tau_edges, r)

    # overlay the exact normal-coordinate profile inside each disc
    for c, d in zip(centers, charges):
        dist = surf.geodesic_distances(c, tri.vertices)
        inside = dist < sigma
        if not np.any(inside):
            continue
        idx = np.flatnonzero(inside)
        basis = surf.tangent_basis_at(surf.project(c))
        z = surf.local_coords(surf.project(c), tri.vertices[idx], basis=basis)
        phi = np.arctan2(z[:, 1], z[:, 0])
        # radial/azimuthal directions at each vertex (chord-projected radial)
        g = frames.normal[idx]
        radial = tri.vertices[idx] - surf.project(c)
        radial = radial - g * np.einsum("ij,ij->i", radial, g)[:, None]
        small = np.linalg.norm(radial, axis=1) < 1e-12
        radial[small] = frames.e1[idx][small]
        radial = _unit(radial)
        azim = np.cross(g, radial)
        # angle of the profile in the (radial, azim) frame: (d - 1) * phi
        beta = (d - 1) * phi
        vec = np.cos(beta)[:, None] * radial + np.sin(beta)[:, None] * azim
        theta_disc = np.arctan2(
            np.einsum("ij,ij->i", vec, frames.e2[idx]),
            np.einsum("ij,ij->i", vec, frames.e1[idx]),
        )
        mismatch = wrap_angle(theta[idx] - theta_disc)
        collar = dist[idx] >= sigma / 2
        offset = np.arctan2(np.sin(mismatch[collar]).mean(), np.cos(mismatch[collar]).mean()) if np.any(collar) else 0.0
        resid = wrap_angle(mismatch - offset)
        if np.abs(resid).max() > 0.8 * np.pi:
            # blending would tear the field across the residual branch cut;
            # keep the transition field here (winding is already exact)
            continue
        ramp = _smoothstep((dist[idx] - sigma / 2) / (sigma / 2))
        theta[idx] = theta_disc + offset + ramp * resid
    return DiscreteField(theta=theta)


# ---------------------------------------------------------------------------
# serialization
def save_field_csv(path, tri, field):
    from .io import atomic_write_text

    lines = [f"# mesh_sha256={tri.content_hash()}", "vertex_index,theta"]
    lines += [f"{i},{th:.17g}" for i, th in enumerate(field.theta)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_field_csv(path, tri):
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header.startswith("# mesh_sha256="):
            raise ValueError("missing mesh hash header")
        if header.split("=", 1)[1] != tri.content_hash():
            raise ValueError("field file does not match this mesh")
        fh.readline()  # column header
        theta = np.empty(tri.n_vertices)
        count = 0
        for line in fh:
            i_str, th_str = line.strip().split(",")
            theta[int(i_str)] = float(th_str)
            count += 1
    if count != tri.n_vertices:
        raise LengthMismatch("field file row count does not match the mesh")
    return DiscreteField(theta=theta)
