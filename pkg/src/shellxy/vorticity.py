"""Discrete vorticity, per-triangle windings, and defect detection.

Two topological observables are computed per triangle: the discrete
vorticity mu_hat (cyclic cross-product sums of vertex spins weighted by
averaged normals, a discrete Jacobian) and the integer winding obtained by
transporting angle differences around the triangle.  Defects are clusters of
nonzero-winding triangles merged by geodesic proximity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousWinding, CoreOverlap, UnresolvedRegion
from .field import realize, triangle_transport, wrap_angle

WINDING_RESIDUAL_MAX = 0.45


def mu_hat(tri, realized):
    """Per-triangle discrete vorticity from averaged normals and spin crosses.

    Interior-edge terms cancel pairwise, so the total over a closed mesh is
    zero to roundoff.
    """
    gam = tri.vertex_normals()[tri.triangles]
    v = realized[tri.triangles]
    total = np.zeros(tri.n_triangles)
    for k in range(3):
        gm = 0.5 * (gam[:, k] + gam[:, (k + 1) % 3])
        total += np.einsum("ij,ij->i", gm, np.cross(v[:, k], v[:, (k + 1) % 3]))
    return total


def triangle_windings(tri, frames, theta_or_field):
    """Integer winding and rounding residual for every triangle.

    Edge angle differences are moved into a common frame with the
    parallel-transport correction before wrapping; the signed wrapped sums
    divided by 2 pi round to the windings.
    """
    theta = getattr(theta_or_field, "theta", theta_or_field)
    t01, t12, t20 = triangle_transport(tri, frames)
    t = tri.triangles
    d01 = wrap_angle(theta[t[:, 1]] - theta[t[:, 0]] - t01)
    d12 = wrap_angle(theta[t[:, 2]] - theta[t[:, 1]] - t12)
    d20 = wrap_angle(theta[t[:, 0]] - theta[t[:, 2]] - t20)
    s = (d01 + d12 + d20) / (2 * np.pi)
    w = np.rint(s).astype(np.int64)
    return w, np.abs(s - w)


def triangle_winding(tri, frames, field, t):
    """Winding of one triangle; raises when the rounding is ambiguous."""
    w, res = triangle_windings(tri, frames, field)
    if res[t] >= WINDING_RESIDUAL_MAX:
        raise AmbiguousWinding(
            f"triangle {t}: residual {res[t]:.3f} >= {WINDING_RESIDUAL_MAX}"
        )
    return int(w[t])


class UnionFind:
    """Union by size with path compression over integer items."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass
class Defect:
    position: np.ndarray
    charge: int
    cluster_triangles: np.ndarray
    core_radius: float

    def as_dict(self):
        return {
            "position": [float(x) for x in self.position],
            "charge": int(self.charge),
            "core_radius": float(self.core_radius),
        }


@dataclass
class DefectSet:
    defects: list

    def __len__(self):
        return len(self.defects)

    def charges(self):
        return [d.charge for d in self.defects]

    def total_charge(self):
        return sum(d.charge for d in self.defects)

    def as_list(self):
        return [d.as_dict() for d in self.defects]


@dataclass
class VorticityReport:
    mu_hat: np.ndarray
    winding: np.ndarray
    residual: np.ndarray
    defects: DefectSet
    core_flags: np.ndarray = field(default=None)


def detect_defects(tri, frames, theta_or_field, merge_radius=None):
    """Cluster nonzero-winding triangles by geodesic proximity.

    Cluster charge is the sum of member windings; the position is the
    area-weighted barycentre projected back to the surface.  Triangles whose
    winding residual exceeds the threshold are flagged; if the flagged
    triangles form a cluster of their own the region is unresolved.
    """
    theta = getattr(theta_or_field, "theta", theta_or_field)
    w, res = triangle_windings(tri, frames, theta)
    ambiguous = res >= WINDING_RESIDUAL_MAX
    if ambiguous.mean() > 0.01:
        raise AmbiguousWinding(
            f"{ambiguous.sum()} of {tri.n_triangles} triangles ambiguous"
        )
    if merge_radius is None:
        merge_radius = 3.0 * tri.mesh_size
    hot = np.flatnonzero((w != 0) | ambiguous)
    if len(hot) == 0:
        return DefectSet(defects=[])
    bary = tri.barycentres()[hot]
    uf = UnionFind(len(hot))
    surf = tri.surface
    for a in range(len(hot)):
        d = surf.geodesic_distances(surf.project(bary[a]), bary)
        for b in np.flatnonzero(d <= merge_radius):
            if b != a:
                uf.union(a, int(b))
    groups = {}
    for a in range(len(hot)):
        groups.setdefault(uf.find(a), []).append(a)
    defects = []
    for members in groups.values():
        tris = hot[np.array(members)]
        if np.all(ambiguous[tris]):
            raise UnresolvedRegion("ambiguous triangles form an isolated cluster")
        charge = int(w[tris].sum())
        areas = tri.areas[tris]
        pos = surf.project(np.average(tri.barycentres()[tris], axis=0, weights=areas))
        spread = np.linalg.norm(tri.barycentres()[tris] - pos, axis=1)
        core_radius = float(spread.max() + 0.5 * tri.diameters[tris].max())
        defects.append(
            Defect(position=pos, charge=charge, cluster_triangles=tris, core_radius=core_radius)
        )
    defects.sort(key=lambda d: (round(d.position[0], 9), round(d.position[1], 9), round(d.position[2], 9)))
    return DefectSet(defects=defects)


def vorticity_report(tri, frames, theta_or_field, merge_radius=None):
    """Full per-triangle report plus clustered defects."""
    theta = getattr(theta_or_field, "theta", theta_or_field)
    w, res = triangle_windings(tri, frames, theta)
    mh = mu_hat(tri, realize_like(tri, frames, theta))
    defects = detect_defects(tri, frames, theta, merge_radius=merge_radius)
    eps = tri.mesh_size
    t_eps = eps * np.log(max(1.0 / eps, np.e)) ** 2
    vbar = realize_like(tri, frames, theta)[tri.triangles].mean(axis=1)
    core_flags = np.linalg.norm(vbar, axis=1) < min(t_eps, 0.5)
    return VorticityReport(mu_hat=mh, winding=w, residual=res, defects=defects, core_flags=core_flags)


def realize_like(tri, frames, theta):
    from .field import DiscreteField

    return realize(DiscreteField(theta=np.asarray(theta, float)), frames)


def region_vorticity_check(tri, frames, theta_or_field, region, defects_in_region):
    """|sum_T mu_hat - (2 pi sum d_i - integral_region G)| for convergence studies.

    The Gauss-curvature integral uses midpoint quadrature of the analytic
    curvature at projected barycentres against polyhedral triangle areas.
    """
    region = np.asarray(region, dtype=np.int64)
    theta = getattr(theta_or_field, "theta", theta_or_field)
    surf = tri.surface

    # region boundary must stay clear of the defect cores
    edge_count = np.zeros(tri.n_edges, dtype=np.int64)
    np.add.at(edge_count, tri.tri_edges[region].ravel(), 1)
    rim_edges = np.flatnonzero(edge_count == 1)
    if len(rim_edges) > 0 and len(defects_in_region) > 0:
        rim_pts = tri.vertices[np.unique(tri.edges[rim_edges])]
        for d in defects_in_region:
            dist = surf.geodesic_distances(np.asarray(d.position, float), rim_pts)
            if dist.min() < 3.0 * tri.mesh_size:
                raise CoreOverlap("region boundary passes within 3 eps of a defect core")

    mh = mu_hat(tri, realize_like(tri, frames, theta))
    bary = surf.project(tri.barycentres()[region])
    u, v = surf.params_of(bary)
    G = surf.gauss_curvature_of_params(u, v)
    curv = float(np.sum(G * tri.areas[region]))
    charge = sum(int(d.charge) for d in defects_in_region)
    return float(abs(mh[region].sum() - (2 * np.pi * charge - curv)))
