"""Triangulations of a surface: generators, cotangent stiffness, hypothesis checks.

A triangulation is a collection of affine triangles in R^3 whose vertices lie
on the carrier surface.  Triangles are stored counter-clockwise with respect
to the outward normal at their barycentre.  The stiffness coefficient of an
edge is the accumulated cot(opposite angle)/2 over its incident triangles;
it is nonnegative exactly on weakly acute meshes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import (
    BallTooSmall,
    DegenerateTriangle,
    H4Unavailable,
    ResolutionTooLow,
    WrongSurfaceKind,
)
from .surface import GraphBump, Sphere, Surface, Torus

DEGENERATE_AREA_FACTOR = 1e-14


def _unit(a, axis=-1):
    return a / np.linalg.norm(a, axis=axis, keepdims=True)


class Triangulation:
    """Immutable triangle mesh with vertices on a surface.

    Derived quantities (edges, areas, stiffness) are computed once at
    construction; all arrays are read-only afterwards.
    """

    def __init__(self, surface: Surface, vertices, triangles, lineage=None, closed=None):
        self.surface = surface
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.lineage = lineage or {}

        # orient every triangle CCW w.r.t. the outward normal at its barycentre;
        # very coarse meshes can have barycentres outside the tube, so fall
        # back to mean vertex normals there (same sign for any sane mesh)
        bary = vertices[triangles].mean(axis=1)
        try:
            u, v = surface.params_of(surface.project(bary))
            gamma_bary = surface.normal_of_params(u, v)
        except Exception:
            uv, vv = surface.params_of(vertices)
            gamma_bary = surface.normal_of_params(uv, vv)[triangles].mean(axis=1)
        n = np.cross(
            vertices[triangles[:, 1]] - vertices[triangles[:, 0]],
            vertices[triangles[:, 2]] - vertices[triangles[:, 0]],
        )
        flip = np.einsum("ij,ij->i", n, gamma_bary) < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]

        self.vertices = vertices
        self.triangles = triangles
        self._build_derived(closed)
        for arr in (self.vertices, self.triangles, self.edges, self.kappa,
                    self.tri_edges, self.tri_weights, self.areas, self.diameters):
            arr.setflags(write=False)

    # ------------------------------------------------------------------
    def _build_derived(self, closed):
        tris = self.triangles
        verts = self.vertices

        p = verts[tris]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        self.areas = 0.5 * np.linalg.norm(cross, axis=1)
        e01 = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        e12 = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        e20 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        self.diameters = np.maximum(np.maximum(e01, e12), e20)
        self.mesh_size = float(self.diameters.max())
        if np.any(self.areas <= DEGENERATE_AREA_FACTOR * self.mesh_size**2):
            raise DegenerateTriangle("triangle with (near-)zero area")

        # undirected edge table in lexicographic order; per-triangle edge ids
        raw = np.concatenate([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]])
        raw_sorted = np.sort(raw, axis=1)
        self.edges, inv, counts = np.unique(
            raw_sorted, axis=0, return_inverse=True, return_counts=True
        )
        if counts.max() > 2:
            raise ValueError("non-manifold edge: more than two incident triangles")
        self.tri_edges = inv.reshape(3, -1).T.copy()  # edge id opposite corner k
        self.boundary_edges = np.flatnonzero(counts == 1)
        is_closed = counts.min() == 2
        if closed is not None and closed != is_closed:
            raise ValueError("mesh closedness does not match expectation")
        self.closed = bool(is_closed)

        # per-corner cotangent weights: weight of the edge opposite corner k
        w = np.empty((len(tris), 3))
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            w[:, k] = 0.5 * np.einsum("ij,ij->i", a, b) / np.linalg.norm(np.cross(a, b), axis=1)
        self.tri_weights = w

        self.kappa = np.zeros(len(self.edges))
        np.add.at(self.kappa, self.tri_edges.ravel(order="F"), w.ravel(order="F"))

        i, j = self.edges[:, 0], self.edges[:, 1]
        nv = len(verts)
        self.adjacency = sparse.csr_matrix(
            (np.r_[self.kappa, self.kappa], (np.r_[i, j], np.r_[j, i])), shape=(nv, nv)
        )

    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def euler_number(self):
        return self.n_vertices - self.n_edges + self.n_triangles

    def barycentres(self):
        return self.vertices[self.triangles].mean(axis=1)

    def vertex_normals(self):
        u, v = self.surface.params_of(self.vertices)
        return self.surface.normal_of_params(u, v)

    def orientation_ok(self):
        bary = self.barycentres()
        u, v = self.surface.params_of(self.surface.project(bary))
        g = self.surface.normal_of_params(u, v)
        p = self.vertices[self.triangles]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return bool(np.all(np.einsum("ij,ij->i", n, g) > 0))

    def total_area(self):
        return float(self.areas.sum())

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        return h.hexdigest()

    def hat_gradients(self, t):
        """Gradients of the three hat functions on triangle t (rows)."""
        p = self.vertices[self.triangles[t]]
        n = np.cross(p[1] - p[0], p[2] - p[0])
        A2 = np.linalg.norm(n)
        nhat = n / A2
        g = np.empty((3, 3))
        for k in range(3):
            opp = p[(k + 2) % 3] - p[(k + 1) % 3]
            g[k] = np.cross(nhat, opp) / A2
        return g

    def hat_gradients_all(self):
        """(F, 3, 3) array of hat gradients for every triangle, cached."""
        if getattr(self, "_hat_grads", None) is None:
            p = self.vertices[self.triangles]
            n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
            A2 = np.linalg.norm(n, axis=1, keepdims=True)
            nhat = n / A2
            g = np.empty((self.n_triangles, 3, 3))
            for k in range(3):
                opp = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
                g[:, k, :] = np.cross(nhat, opp) / A2
            g.setflags(write=False)
            self._hat_grads = g
        return self._hat_grads

    def laplacian(self):
        """Weighted graph Laplacian with the stiffness coefficients."""
        W = self.adjacency
        d = np.asarray(W.sum(axis=1)).ravel()
        return sparse.diags(d) - W


def assemble_stiffness(tri):
    """Sparse symmetric stiffness map (i, j) -> kappa_ij.

    Assembly happens once at construction (per-triangle cotangent weights
    accumulated per edge in a fixed order); this accessor returns the matrix
    along with the per-edge array.
    """
    return tri.adjacency, tri.kappa


# ---------------------------------------------------------------------------
# generators
def _icosahedron():
    p = (1 + np.sqrt(5)) / 2
    v = np.array(
        [
            [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
            [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
            [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return _unit(v), f


def gen_icosphere(surface, level):
    """Icosahedron subdivided `level` times, vertices projected radially."""
    if not isinstance(surface, Sphere):
        raise WrongSurfaceKind("gen_icosphere requires a Sphere")
    if level < 0:
        raise ResolutionTooLow("level must be nonnegative")
    v, f = _icosahedron()
    for _ in range(level):
        verts = list(v)
        cache = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                cache[key] = len(verts)
                verts.append(_unit(verts[i] + verts[j]))
            return cache[key]

        nf = np.empty((4 * len(f), 3), dtype=np.int64)
        for t, (a, b, c) in enumerate(f):
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nf[4 * t : 4 * t + 4] = [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        v = np.array(verts)
        f = nf
    lineage = {"generator": "icosphere", "level": level}
    return Triangulation(surface, v * surface.radius, f, lineage=lineage)


_CUBE_FACES = (
    # (fixed axis, sign, axis of local i, axis of local j)
    (0, +1, 1, 2),
    (0, -1, 2, 1),
    (1, +1, 2, 0),
    (1, -1, 0, 2),
    (2, +1, 0, 1),
    (2, -1, 1, 0),
)


def gen_cubed_sphere(surface, n):
    """Inscribed cube, n x n squares per face, split into right triangles,
    vertices projected radially onto the sphere."""
    if not isinstance(surface, Sphere):
        raise WrongSurfaceKind("gen_cubed_sphere requires a Sphere")
    if n < 1:
        raise ResolutionTooLow("n must be >= 1")
    R = surface.radius
    t = np.linspace(-1.0, 1.0, n + 1)
    verts = []
    key_to_idx = {}
    grids = []

    def vid(q):
        key = tuple(np.round(q * 1e12).astype(np.int64))
        if key not in key_to_idx:
            key_to_idx[key] = len(verts)
            verts.append(_unit(q) * R)
        return key_to_idx[key]

    tris = []
    for ax, sgn, ai, aj in _CUBE_FACES:
        grid = np.empty((n + 1, n + 1), dtype=np.int64)
        for i in range(n + 1):
            for j in range(n + 1):
                q = np.zeros(3)
                q[ax] = sgn
                q[ai] = t[i]
                q[aj] = t[j]
                grid[i, j] = vid(q)
        grids.append(grid)
        for i in range(n):
            for j in range(n):
                q00, q10, q01, q11 = grid[i, j], grid[i + 1, j], grid[i, j + 1], grid[i + 1, j + 1]
                tris.append([q00, q10, q11])
                tris.append([q00, q11, q01])
    lineage = {"generator": "cubed_sphere", "n": n, "face_grids": grids}
    return Triangulation(surface, np.array(verts), np.array(tris), lineage=lineage)


def _grid_triangulation(points_fn, n_i, n_j, periodic):
    """Structured grid with alternating diagonal split."""
    if periodic:
        idx = lambda i, j: (i % n_i) * n_j + (j % n_j)
        grid = np.arange(n_i * n_j).reshape(n_i, n_j)
        cells_i, cells_j = n_i, n_j
    else:
        idx = lambda i, j: i * (n_j + 1) + j
        grid = np.arange((n_i + 1) * (n_j + 1)).reshape(n_i + 1, n_j + 1)
        cells_i, cells_j = n_i, n_j
    tris = []
    for i in range(cells_i):
        for j in range(cells_j):
            q00, q10 = idx(i, j), idx(i + 1, j)
            q01, q11 = idx(i, j + 1), idx(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris.append([q00, q10, q01])
                tris.append([q10, q11, q01])
            else:
                tris.append([q00, q10, q11])
                tris.append([q00, q11, q01])
    return points_fn(), np.array(tris), grid


def gen_torus_mesh(surface, n_major, n_minor):
    """Structured parametric torus grid with alternating diagonal split."""
    if not isinstance(surface, Torus):
        raise WrongSurfaceKind("gen_torus_mesh requires a Torus")
    if n_major < 3 or n_minor < 3:
        raise ResolutionTooLow("n_major and n_minor must be >= 3")

    def points():
        u = 2 * np.pi * np.arange(n_major) / n_major
        v = 2 * np.pi * np.arange(n_minor) / n_minor
        U, V = np.meshgrid(u, v, indexing="ij")
        return surface.chart(U.ravel(), V.ravel())

    verts, tris, grid = _grid_triangulation(points, n_major, n_minor, periodic=True)
    lineage = {"generator": "torus_grid", "n_major": n_major, "n_minor": n_minor, "grid": grid}
    return Triangulation(surface, verts, tris, lineage=lineage)


def gen_grid_mesh(surface, n):
    """Structured patch over the full parameter cell of a GraphBump (open mesh)."""
    if not isinstance(surface, GraphBump):
        raise WrongSurfaceKind("gen_grid_mesh requires a GraphBump")
    if n < 2:
        raise ResolutionTooLow("n must be >= 2")
    L = surface.period

    def points():
        t = L * np.arange(n + 1) / n
        U, V = np.meshgrid(t, t, indexing="ij")
        return surface.chart(U.ravel(), V.ravel())

    verts, tris, grid = _grid_triangulation(points, n, n, periodic=False)
    lineage = {"generator": "grid_patch", "n": n, "grid": grid}
    return Triangulation(surface, verts, tris, lineage=lineage)


def gen_uv_sphere(surface, n_u, n_v):
    """Latitude/longitude sphere mesh: a negative fixture.

    The triangle fans at the poles get thinner as the mesh is refined, so
    the quasi-uniformity hypothesis fails for large n.
    """
    if not isinstance(surface, Sphere):
        raise WrongSurfaceKind("gen_uv_sphere requires a Sphere")
    if n_u < 3 or n_v < 3:
        raise ResolutionTooLow("n_u and n_v must be >= 3")
    R = surface.radius
    verts = [np.array([0.0, 0.0, R]), np.array([0.0, 0.0, -R])]
    ring_index = np.empty((n_u - 1, n_v), dtype=np.int64)
    for i in range(1, n_u):
        th = np.pi * i / n_u
        for j in range(n_v):
            ph = 2 * np.pi * j / n_v
            ring_index[i - 1, j] = len(verts)
            verts.append(R * np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]))
    tris = []
    for j in range(n_v):
        tris.append([0, ring_index[0, j], ring_index[0, (j + 1) % n_v]])
        tris.append([1, ring_index[-1, (j + 1) % n_v], ring_index[-1, j]])
    for i in range(n_u - 2):
        for j in range(n_v):
            a, b = ring_index[i, j], ring_index[i, (j + 1) % n_v]
            c, d = ring_index[i + 1, j], ring_index[i + 1, (j + 1) % n_v]
            tris.append([a, c, d])
            tris.append([a, d, b])
    lineage = {"generator": "uv_sphere", "n_u": n_u, "n_v": n_v}
    return Triangulation(surface, np.array(verts), np.array(tris), lineage=lineage)


# ---------------------------------------------------------------------------
# hypothesis report
@dataclass
class HypothesisReport:
    h1: dict = field(default_factory=dict)
    h2: dict = field(default_factory=dict)
    h3: dict = field(default_factory=dict)
    h4: dict = field(default_factory=dict)

    def as_dict(self):
        return {"h1": self.h1, "h2": self.h2, "h3": self.h3, "h4": self.h4}


DEFAULT_THRESHOLDS = {
    "h1_lambda_max": 8.0,
    "h2_min_kappa": -1e-9,
    "h3_lip_sum_max": 4.0,
    "h4_metric_max": 1.0,
}


def _min_angles(tri):
    p = tri.vertices[tri.triangles]
    ang = np.empty((tri.n_triangles, 3))
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        c = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        ang[:, k] = np.arccos(np.clip(c, -1, 1))
    return ang.min(axis=1)


def _lipschitz_estimates(tri, samples_per_triangle=9, max_triangles=2000, seed=0):
    """Sampled Lipschitz constants of the projection polyhedron -> surface."""
    rng = np.random.default_rng(seed)
    nt = tri.n_triangles
    sel = np.arange(nt) if nt <= max_triangles else rng.choice(nt, max_triangles, replace=False)
    lam = np.array(
        [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.6, 0.3, 0.1],
         [0.1, 0.6, 0.3], [0.3, 0.1, 0.6], [0.4, 0.4, 0.2], [0.2, 0.4, 0.4],
         [1 / 3, 1 / 3, 1 / 3]][:samples_per_triangle]
    )
    p = tri.vertices[tri.triangles[sel]]
    pts = np.einsum("sk,tkj->tsj", lam, p)  # (T, S, 3)
    proj = tri.surface.project(pts.reshape(-1, 3)).reshape(pts.shape)
    lip_p = 0.0
    lip_p_inv = 0.0
    S = len(lam)
    for a in range(S):
        for b in range(a + 1, S):
            d0 = np.linalg.norm(pts[:, a] - pts[:, b], axis=1)
            d1 = np.linalg.norm(proj[:, a] - proj[:, b], axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                lip_p = max(lip_p, np.nanmax(d1 / d0))
                lip_p_inv = max(lip_p_inv, np.nanmax(d0 / d1))
    return float(lip_p), float(lip_p_inv)


def _h4_grids(coarse, fine):
    """Lattice index grids and blow-up base for the canonical correspondence."""
    lc, lf = coarse.lineage, fine.lineage
    gen = lc.get("generator")
    if gen != lf.get("generator"):
        raise H4Unavailable("meshes come from different generators")
    if gen == "cubed_sphere":
        if lf["n"] != 2 * lc["n"] or lc["n"] % 2 != 0:
            raise H4Unavailable("fine mesh is not the canonical 2x refinement")
        return lc["face_grids"][4], lf["face_grids"][4], None  # +z face, centred
    if gen in ("torus_grid", "grid_patch"):
        if gen == "torus_grid":
            ok = (lf["n_major"] == 2 * lc["n_major"] and lf["n_minor"] == 2 * lc["n_minor"]
                  and lc["n_major"] % 2 == 0 and lc["n_minor"] % 2 == 0)
        else:
            ok = lf["n"] == 2 * lc["n"] and lc["n"] % 2 == 0
        if not ok:
            raise H4Unavailable("fine mesh is not the canonical 2x refinement")
        return lc["grid"], lf["grid"], None
    raise H4Unavailable(f"no canonical self-similar correspondence for generator {gen!r}")


def h4_displacement(coarse, fine, base_point=None, window_cells=5):
    """Scale-invariance metric between two canonical refinements.

    Both meshes are pulled into normal coordinates around the base point
    (default: the lattice centre) and rescaled by their own mesh size.  The
    simplicial isomorphism matches equal lattice offsets from the base, so
    perfectly self-similar blow-ups give zero displacement.  The supremum is
    taken over a window of ``window_cells`` blown-up length units around the
    base; the returned value is that displacement times |log eps_coarse|.
    """
    gc, gf, _ = _h4_grids(coarse, fine)
    ci, cj = gc.shape[0] // 2, gc.shape[1] // 2
    surf = coarse.surface
    centre = np.asarray(base_point, float) if base_point is not None else coarse.vertices[gc[ci, cj]]
    basis = surf.tangent_basis_at(centre)

    # offsets covering the window in both grids
    reach_c = min(ci, cj, gc.shape[0] - 1 - ci, gc.shape[1] - 1 - cj)
    fi, fj = 2 * ci, 2 * cj
    reach_f = min(fi, fj, gf.shape[0] - 1 - fi, gf.shape[1] - 1 - fj)
    reach = min(reach_c, reach_f)
    off = np.arange(-reach, reach + 1)
    OA, OB = np.meshgrid(off, off, indexing="ij")
    ic = gc[ci + OA, cj + OB].ravel()
    jf = gf[fi + OA, fj + OB].ravel()

    zc = surf.local_coords(centre, coarse.vertices[ic], basis=basis) / coarse.mesh_size
    zf = surf.local_coords(centre, fine.vertices[jf], basis=basis) / fine.mesh_size
    keep = np.linalg.norm(zc, axis=1) <= window_cells
    if not np.any(keep):
        raise H4Unavailable("window contains no lattice vertices")
    disp = np.linalg.norm(zc[keep] - zf[keep], axis=1).max()
    return float(disp * abs(np.log(coarse.mesh_size)))


def validate_hypotheses(tri, family_context=None, thresholds=None, h4_base_point=None):
    """Evaluate (H1)-(H4) numeric estimates and pass flags for one mesh.

    H4 needs ``family_context``: the canonical refinement (same generator,
    doubled resolution).  H3 Lipschitz constants are sampled estimates, not
    certified bounds.
    """
    th = dict(DEFAULT_THRESHOLDS)
    th.update(thresholds or {})
    eps = tri.mesh_size
    min_angle = float(_min_angles(tri).min())
    lam = max(eps / tri.diameters.min(), 1.0 / min_angle)
    h1 = {"lambda_estimate": float(lam), "min_angle": min_angle, "pass": bool(lam <= th["h1_lambda_max"])}

    min_kappa = float(tri.kappa.min())
    h2 = {"min_kappa": min_kappa, "pass": bool(min_kappa >= th["h2_min_kappa"])}

    lip_p, lip_p_inv = _lipschitz_estimates(tri)
    h3 = {
        "lip_p": lip_p,
        "lip_p_inv": lip_p_inv,
        "pass": bool(lip_p + lip_p_inv <= th["h3_lip_sum_max"]),
    }

    if family_context is None:
        h4 = {"displacement_times_logeps": None, "pass": False, "evaluated": False,
              "reason": "no refinement context supplied"}
    else:
        try:
            m = h4_displacement(tri, family_context, base_point=h4_base_point)
            h4 = {"displacement_times_logeps": m, "pass": bool(m <= th["h4_metric_max"]),
                  "evaluated": True}
        except H4Unavailable as exc:
            h4 = {"displacement_times_logeps": None, "pass": False, "evaluated": False,
                  "reason": str(exc)}
    return HypothesisReport(h1=h1, h2=h2, h3=h3, h4=h4)


# ---------------------------------------------------------------------------
def discrete_ball(tri, center, delta):
    """Discrete geodesic ball: interior triangles and discrete boundary vertices.

    A triangle is interior when all three vertices lie within geodesic
    distance delta of the center (vertex test).  The discrete boundary is the
    set of interior-complex vertices on edges shared with the exterior.
    """
    center = np.asarray(center, float)
    surf = tri.surface
    if delta >= surf.diameter:
        return np.arange(tri.n_triangles), np.array([], dtype=np.int64)
    if delta >= surf.injectivity_radius:
        raise ValueError("delta must be below the injectivity radius")
    if delta <= 2 * tri.mesh_size:
        raise ValueError("delta must exceed twice the mesh size")
    dist = surf.geodesic_distances(center, tri.vertices)
    inside = dist < delta
    tri_mask = inside[tri.triangles].all(axis=1)
    interior = np.flatnonzero(tri_mask)
    if len(interior) < 3:
        raise BallTooSmall(f"only {len(interior)} interior triangles")
    # edges of the interior complex incident to exactly one interior triangle
    edge_count = np.zeros(tri.n_edges, dtype=np.int64)
    np.add.at(edge_count, tri.tri_edges[interior].ravel(), 1)
    rim = np.flatnonzero(edge_count == 1)
    boundary = np.unique(tri.edges[rim])
    return interior, boundary


def boundary_is_single_loop(tri, interior):
    """Check the rim of an interior triangle set is one closed vertex cycle."""
    edge_count = np.zeros(tri.n_edges, dtype=np.int64)
    np.add.at(edge_count, tri.tri_edges[interior].ravel(), 1)
    rim = tri.edges[edge_count == 1]
    if len(rim) == 0:
        return False
    verts, counts = np.unique(rim, return_counts=True)
    if not np.all(counts == 2):
        return False
    # walk the cycle
    adj = {}
    for a, b in rim:
        adj.setdefault(int(a), []).append(int(b))
        adj.setdefault(int(b), []).append(int(a))
    start = int(rim[0, 0])
    prev, cur = None, start
    seen = 1
    while True:
        nxt = [x for x in adj[cur] if x != prev]
        if not nxt:
            return False
        prev, cur = cur, nxt[0]
        if cur == start:
            break
        seen += 1
        if seen > len(verts):
            return False
    return seen == len(verts)


# ---------------------------------------------------------------------------
# OFF import/export (ASCII, full double precision)
def save_off(path, tri):
    from .io import atomic_write_text

    lines = ["OFF", f"{tri.n_vertices} {tri.n_triangles} {tri.n_edges}"]
    lines += [f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in tri.vertices]
    lines += [f"3 {t[0]} {t[1]} {t[2]}" for t in tri.triangles]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_off(path, surface):
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split()
    if tokens[0] != "OFF":
        raise ValueError("not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    k = 4
    verts = np.array(tokens[k : k + 3 * nv], dtype=float).reshape(nv, 3)
    k += 3 * nv
    tris = np.empty((nf, 3), dtype=np.int64)
    for t in range(nf):
        cnt = int(tokens[k])
        if cnt != 3:
            raise ValueError("only triangle faces are supported")
        tris[t] = [int(tokens[k + 1]), int(tokens[k + 2]), int(tokens[k + 3])]
        k += 4
    return Triangulation(surface, verts, tris)


# ---------------------------------------------------------------------------
def make_mesh(surface, spec):
    """Build a mesh from a JSON-style generator spec."""
    gen = spec.get("generator")
    if gen == "icosphere":
        return gen_icosphere(surface, spec["level"])
    if gen == "cubed_sphere":
        return gen_cubed_sphere(surface, spec["n"])
    if gen == "torus_grid":
        return gen_torus_mesh(surface, spec["n_major"], spec["n_minor"])
    if gen == "grid_patch":
        return gen_grid_mesh(surface, spec["n"])
    if gen == "uv_sphere":
        return gen_uv_sphere(surface, spec["n_u"], spec["n_v"])
    raise ValueError(f"unknown mesh generator {gen!r}")


def refine_spec(spec):
    """Generator spec of the canonical 2x refinement (for H4 contexts)."""
    gen = spec.get("generator")
    out = dict(spec)
    if gen == "icosphere":
        out["level"] = spec["level"] + 1
    elif gen == "cubed_sphere" or gen == "grid_patch":
        out["n"] = 2 * spec["n"]
    elif gen == "torus_grid":
        out["n_major"] = 2 * spec["n_major"]
        out["n_minor"] = 2 * spec["n_minor"]
    elif gen == "uv_sphere":
        out["n_u"] = 2 * spec["n_u"]
        out["n_v"] = 2 * spec["n_v"]
    else:
        raise ValueError(f"unknown mesh generator {gen!r}")
    return out
