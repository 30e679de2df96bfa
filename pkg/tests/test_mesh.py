"""Mesh generation, stiffness assembly and hypothesis certification tests."""

import numpy as np
import pytest

from shellxy.errors import BallTooSmall, H4Unavailable, ResolutionTooLow, WrongSurfaceKind
from shellxy.mesh import (
    Triangulation,
    boundary_is_single_loop,
    discrete_ball,
    gen_cubed_sphere,
    gen_grid_mesh,
    gen_icosphere,
    gen_torus_mesh,
    gen_uv_sphere,
    h4_displacement,
    load_off,
    save_off,
    validate_hypotheses,
)
from shellxy.surface import GraphBump, Sphere, Torus

SPHERE = Sphere(1.0)
TORUS = Torus(2.0, 0.5)


def flat_two_triangle_mesh():
    """Two unit right-isosceles triangles sharing their hypotenuse."""
    g = GraphBump(0.0, 0.25)  # period 4: the square fits inside the cell
    verts = np.array([[1, 1, 0], [2, 1, 0], [1, 2, 0], [2, 2, 0]], dtype=float)
    tris = np.array([[0, 1, 2], [1, 3, 2]])
    return Triangulation(g, verts, tris)


def stiffness_by_hat_integration(tri):
    """Oracle: kappa_ij = -sum_T area jump-free hat-gradient products."""
    nv = tri.n_vertices
    acc = {}
    for t in range(tri.n_triangles):
        g = tri.hat_gradients(t)
        A = tri.areas[t]
        idx = tri.triangles[t]
        for a in range(3):
            for b in range(a + 1, 3):
                key = (min(idx[a], idx[b]), max(idx[a], idx[b]))
                acc[key] = acc.get(key, 0.0) - A * float(g[a] @ g[b])
    out = np.zeros(tri.n_edges)
    lookup = {tuple(e): k for k, e in enumerate(tri.edges)}
    for key, val in acc.items():
        out[lookup[key]] = val
    return out


# ---------------------------------------------------------------- generators
def test_icosphere_level0_combinatorics():
    m = gen_icosphere(SPHERE, 0)
    assert (m.n_vertices, m.n_triangles, m.n_edges) == (12, 20, 30)


@pytest.mark.parametrize("level", [1, 2, 3])
def test_icosphere_subdivision_counts(level):
    m = gen_icosphere(SPHERE, level)
    assert m.n_triangles == 20 * 4**level
    assert m.n_vertices == 10 * 4**level + 2
    assert m.euler_number() == 2


def test_icosphere_level3_weakly_acute():
    m = gen_icosphere(SPHERE, 3)
    # observed and pinned: all stiffness coefficients are positive
    assert m.kappa.min() == pytest.approx(0.3356746837, abs=1e-6)
    assert m.kappa.min() >= 0.0


def test_cubed_sphere_n1():
    m = gen_cubed_sphere(SPHERE, 1)
    assert (m.n_vertices, m.n_triangles) == (8, 12)
    assert m.euler_number() == 2


@pytest.mark.parametrize("n", [2, 5, 16])
def test_cubed_sphere_euler(n):
    m = gen_cubed_sphere(SPHERE, n)
    assert m.n_vertices == 6 * n**2 + 2
    assert m.euler_number() == 2


def test_cubed_sphere_mesh_size_window():
    m = gen_cubed_sphere(SPHERE, 16)
    nominal = (np.pi / 2) / 16
    rep = validate_hypotheses(m)
    lam = rep.h1["lambda_estimate"]
    assert nominal / lam <= m.mesh_size <= nominal * lam
    # pinned observed value
    assert m.mesh_size == pytest.approx(0.17544, abs=2e-4)


def test_torus_mesh_euler():
    m = gen_torus_mesh(TORUS, 3, 3)
    assert (m.n_vertices, m.n_triangles, m.n_edges) == (9, 18, 27)
    assert m.euler_number() == 0


def test_torus_mesh_weak_acuteness_observed():
    m = gen_torus_mesh(TORUS, 64, 16)
    rep = validate_hypotheses(m)
    # rectangle diagonals give kappa = 0 up to roundoff; pinned observation
    assert rep.h2["min_kappa"] >= -1e-9
    assert rep.h2["pass"]


def test_torus_degenerate_config_rejected():
    with pytest.raises(ValueError):
        Torus(2.0, 2.5)


def test_torus_resolution_guard():
    with pytest.raises(ResolutionTooLow):
        gen_torus_mesh(TORUS, 2, 8)


def test_wrong_surface_kind():
    with pytest.raises(WrongSurfaceKind):
        gen_icosphere(TORUS, 1)
    with pytest.raises(WrongSurfaceKind):
        gen_torus_mesh(SPHERE, 8, 8)


def test_generator_determinism():
    a = gen_icosphere(SPHERE, 3)
    b = gen_icosphere(SPHERE, 3)
    assert a.content_hash() == b.content_hash()
    c = gen_cubed_sphere(SPHERE, 7)
    d = gen_cubed_sphere(SPHERE, 7)
    assert c.content_hash() == d.content_hash()


def test_orientation_invariant_after_generation():
    for m in (gen_icosphere(SPHERE, 2), gen_cubed_sphere(SPHERE, 4), gen_torus_mesh(TORUS, 12, 6)):
        assert m.orientation_ok()


# ---------------------------------------------------------------- stiffness
def test_two_triangle_stiffness_values():
    m = flat_two_triangle_mesh()
    lookup = {tuple(e): k for k, e in enumerate(m.edges)}
    hyp = m.kappa[lookup[(1, 2)]]
    assert hyp == pytest.approx(0.0, abs=1e-14)
    for leg in [(0, 1), (0, 2), (1, 3), (2, 3)]:
        assert m.kappa[lookup[leg]] == pytest.approx(0.5, abs=1e-14)


def test_stiffness_matches_hat_gradient_oracle():
    for m in (flat_two_triangle_mesh(), gen_icosphere(SPHERE, 1), gen_torus_mesh(TORUS, 6, 4)):
        oracle = stiffness_by_hat_integration(m)
        np.testing.assert_allclose(m.kappa, oracle, rtol=1e-12, atol=1e-13)


def test_row_sum_identity():
    m = gen_icosphere(SPHERE, 2)
    row = np.asarray(m.adjacency.sum(axis=1)).ravel()
    # sum_j kappa_ij = integral |grad hat_i|^2 > 0
    acc = np.zeros(m.n_vertices)
    for t in range(m.n_triangles):
        g = m.hat_gradients(t)
        for k in range(3):
            acc[m.triangles[t, k]] += m.areas[t] * float(g[k] @ g[k])
    np.testing.assert_allclose(row, acc, rtol=1e-11)
    assert row.min() > 0


def test_stiffness_exactness_identity():
    """Piecewise-affine Dirichlet integrals equal the kappa-weighted sums."""
    m = gen_icosphere(SPHERE, 3)
    rng = np.random.default_rng(11)
    for _ in range(3):
        phi = rng.normal(size=m.n_vertices)
        tau = rng.normal(size=m.n_vertices)
        quad = 0.0
        for t in range(m.n_triangles):
            g = m.hat_gradients(t)
            idx = m.triangles[t]
            gp = phi[idx] @ g
            gt = tau[idx] @ g
            quad += m.areas[t] * float(gp @ gt)
        i, j = m.edges[:, 0], m.edges[:, 1]
        ksum = float(np.sum(m.kappa * (phi[i] - phi[j]) * (tau[i] - tau[j])))
        assert abs(quad - ksum) / abs(quad) < 1e-10


def test_nonadjacent_kappa_absent():
    m = gen_icosphere(SPHERE, 1)
    W = m.adjacency.toarray()
    adj = np.zeros_like(W, dtype=bool)
    for t in m.triangles:
        for a in range(3):
            for b in range(3):
                if a != b:
                    adj[t[a], t[b]] = True
    assert np.all(W[~adj] == 0.0)


# ---------------------------------------------------------------- hypotheses
def test_validate_icosphere_passes_h123():
    fam = gen_icosphere(SPHERE, 4)
    rep = validate_hypotheses(gen_icosphere(SPHERE, 3), family_context=fam)
    assert rep.h1["pass"] and rep.h2["pass"] and rep.h3["pass"]
    assert not rep.h4["evaluated"]          # no canonical face-boundary correspondence
    assert "canonical" in rep.h4["reason"] or "correspondence" in rep.h4["reason"]


def test_validate_uv_sphere_fails_h1():
    m = gen_uv_sphere(SPHERE, 64, 64)
    rep = validate_hypotheses(m)
    assert not rep.h1["pass"]


def test_validate_grid_patch_h2_exact_zero():
    g = GraphBump(0.0, 0.15)
    m = gen_grid_mesh(g, 24)
    rep = validate_hypotheses(m)
    assert rep.h2["min_kappa"] == 0.0


def test_cubed_sphere_h2_fails():
    # radial projection of the face grids is not weakly acute: the right
    # angles near cube edges open beyond pi/2 (observed min kappa ~ -0.53)
    m = gen_cubed_sphere(SPHERE, 16)
    rep = validate_hypotheses(m)
    assert not rep.h2["pass"]
    assert rep.h2["min_kappa"] == pytest.approx(-0.5272, abs=1e-3)


def test_h4_cubed_sphere_decreasing():
    meshes = {n: gen_cubed_sphere(SPHERE, n) for n in (16, 32, 64, 128)}
    vals = [h4_displacement(meshes[n], meshes[2 * n]) for n in (16, 32, 64)]
    assert vals[0] > vals[1] > vals[2]
    # pinned observations
    np.testing.assert_allclose(vals, [1.9040, 0.5430, 0.1781], atol=2e-3)


def test_h4_unavailable_for_icosphere():
    with pytest.raises(H4Unavailable):
        h4_displacement(gen_icosphere(SPHERE, 2), gen_icosphere(SPHERE, 3))


# ---------------------------------------------------------------- balls, io
def test_discrete_ball_full_sphere():
    m = gen_icosphere(SPHERE, 2)
    interior, boundary = discrete_ball(m, np.array([0, 0, 1.0]), 0.99 * np.pi)
    assert len(interior) == m.n_triangles
    assert len(boundary) == 0


def test_discrete_ball_boundary_single_loop():
    m = gen_icosphere(SPHERE, 4)
    delta = 2.2 * m.mesh_size
    interior, boundary = discrete_ball(m, np.array([0, 0, 1.0]), delta)
    assert boundary_is_single_loop(m, interior)
    assert len(boundary) >= 3


def test_discrete_ball_too_small():
    m = gen_icosphere(SPHERE, 3)
    with pytest.raises((BallTooSmall, ValueError)):
        discrete_ball(m, m.vertices[0], 2.01 * m.mesh_size * 0.3)


def test_off_round_trip(tmp_path):
    m = gen_icosphere(SPHERE, 2)
    path = tmp_path / "mesh.off"
    save_off(path, m)
    m2 = load_off(path, SPHERE)
    assert m2.content_hash() == m.content_hash()
