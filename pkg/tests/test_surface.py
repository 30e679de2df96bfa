"""Surface kernel tests: closed forms checked against finite-difference oracles."""

import numpy as np
import pytest

from shellxy.errors import NotTangent, OutsideTubularNeighbourhood, PointOffSurface
from shellxy.surface import GraphBump, Sphere, Torus, make_surface


def fd_normal(surface, u, v, h=1e-6):
    """Oracle: unit cross product of finite-difference chart partials."""
    c = surface.chart
    xu = (c(u + h, v) - c(u - h, v)) / (2 * h)
    xv = (c(u, v + h) - c(u, v - h)) / (2 * h)
    n = np.cross(xu, xv)
    return n / np.linalg.norm(n)


def fd_gauss_curvature(surface, u, v, h=1e-5):
    """Oracle: det(II)/det(I) from finite differences of the chart."""
    c = surface.chart
    xu = (c(u + h, v) - c(u - h, v)) / (2 * h)
    xv = (c(u, v + h) - c(u, v - h)) / (2 * h)
    xuu = (c(u + h, v) - 2 * c(u, v) + c(u - h, v)) / h**2
    xvv = (c(u, v + h) - 2 * c(u, v) + c(u, v - h)) / h**2
    xuv = (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h)) / (4 * h**2)
    n = np.cross(xu, xv)
    n = n / np.linalg.norm(n)
    E, F, G = xu @ xu, xu @ xv, xv @ xv
    L, M, N = xuu @ n, xuv @ n, xvv @ n
    return (L * N - M * M) / (E * G - F * F)


def fd_shape_operator(surface, u, v, du, dv, h=1e-6):
    """Oracle: directional finite difference of the analytic normal."""
    n_plus = surface.normal_of_params(np.array([u + h * du]), np.array([v + h * dv]))[0]
    n_minus = surface.normal_of_params(np.array([u - h * du]), np.array([v - h * dv]))[0]
    return (n_plus - n_minus) / (2 * h)


SURFACES = [Sphere(1.0), Torus(2.0, 0.5), GraphBump(0.3, 0.15)]
PARAM_POINTS = [(0.8, 1.1), (1.9, 4.0), (2.3, 0.4)]


def test_sphere_trivial_normals():
    s = Sphere(1.0)
    np.testing.assert_allclose(s.normal(np.array([0.0, 0.0, 1.0])), [0, 0, 1], atol=1e-12)
    t = Torus(2.0, 0.5)
    np.testing.assert_allclose(t.normal(np.array([2.5, 0.0, 0.0])), [1, 0, 0], atol=1e-12)


@pytest.mark.parametrize("surface", SURFACES, ids=lambda s: s.kind)
def test_normal_matches_fd_cross_product(surface):
    (u0, u1), (v0, v1) = surface.param_domain
    for fu, fv in PARAM_POINTS:
        u = u0 + (u1 - u0) * fu / 3.0
        v = v0 + (v1 - v0) * fv / 5.0
        got = surface.normal_of_params(np.array([u]), np.array([v]))[0]
        want = fd_normal(surface, u, v)
        # orientation may differ from the raw cross product only by the
        # chart's handedness; our charts are all positively oriented
        assert np.linalg.norm(got - want) < 1e-6
        assert abs(np.linalg.norm(got) - 1.0) < 1e-12


def test_sphere_curvature_constant():
    s = Sphere(1.7)
    pts = s.chart(np.array([0.3, 1.2, 2.8]), np.array([0.1, 3.0, 5.5]))
    np.testing.assert_allclose(s.gauss_curvature(pts), 1 / 1.7**2, rtol=1e-12)


def test_torus_inner_equator_negative_curvature():
    t = Torus(2.0, 0.5)
    p = t.chart(np.array([0.4]), np.array([np.pi]))[0]
    assert t.gauss_curvature(p) < 0


@pytest.mark.parametrize("surface", SURFACES, ids=lambda s: s.kind)
def test_gauss_curvature_matches_fd_second_form(surface):
    (u0, u1), (v0, v1) = surface.param_domain
    for fu, fv in PARAM_POINTS:
        u = u0 + (u1 - u0) * fu / 3.0
        v = v0 + (v1 - v0) * fv / 5.0
        got = float(surface.gauss_curvature_of_params(np.array([u]), np.array([v]))[0])
        want = fd_gauss_curvature(surface, u, v)
        scale = max(abs(want), 1e-3)
        assert abs(got - want) / scale < 1e-5


def test_shape_operator_sphere_umbilic():
    s = Sphere(2.0)
    p = s.chart(np.array([1.0]), np.array([2.0]))[0]
    b = s.tangent_basis_at(p)
    X = 0.3 * b.e1 - 1.1 * b.e2
    np.testing.assert_allclose(s.shape_operator(p, X), X / 2.0, atol=1e-12)


def test_shape_operator_flat_limit_zero():
    g = GraphBump(0.0, 0.2)
    p = g.chart(np.array([1.0]), np.array([2.0]))[0]
    np.testing.assert_allclose(g.shape_operator(p, np.array([1.0, 0.5, 0.0])), 0.0, atol=1e-14)


@pytest.mark.parametrize("surface", [Torus(2.0, 0.5), GraphBump(0.3, 0.15)], ids=lambda s: s.kind)
def test_shape_operator_matches_fd_of_normal(surface):
    (u0, u1), (v0, v1) = surface.param_domain
    u = u0 + (u1 - u0) * 0.37
    v = v0 + (v1 - v0) * 0.62
    p = surface.chart(np.array([u]), np.array([v]))[0]
    Xu, Xv = surface.chart_partials(np.array([u]), np.array([v]))
    du, dv = 0.7, -0.4
    X = du * Xu[0] + dv * Xv[0]
    got = surface.shape_operator(p, X)
    want = fd_shape_operator(surface, u, v, du, dv)
    assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-5


def test_shape_operator_rejects_non_tangent():
    s = Sphere(1.0)
    p = np.array([0.0, 0.0, 1.0])
    with pytest.raises(NotTangent):
        s.shape_operator(p, np.array([0.0, 0.0, 1.0]))


def test_project_sphere_radial():
    s = Sphere(1.0)
    np.testing.assert_allclose(s.project(np.array([0.0, 0.0, 1.5])), [0, 0, 1], atol=1e-15)


def test_project_identity_on_surface():
    t = Torus(2.0, 0.5)
    p = t.chart(np.array([0.9]), np.array([2.2]))[0]
    np.testing.assert_allclose(t.project(p), p, atol=1e-14)


def test_project_torus_grid_search_oracle():
    t = Torus(2.0, 0.5)
    p = t.chart(np.array([1.1]), np.array([0.7]))[0]
    x = p + 0.2 * t.normal(p)
    q = t.project(x)
    # oracle: dense parameter grid admits no closer surface point
    n = 1500
    uu = np.linspace(0, 2 * np.pi, n, endpoint=False)
    vv = np.linspace(0, 2 * np.pi, n, endpoint=False)
    best = np.inf
    for v in vv[:: n // 300]:
        pts = t.chart(uu, np.full(n, v))
        best = min(best, np.linalg.norm(pts - x, axis=1).min())
    # refine around the putative minimiser
    u0, v0 = t.params_of(np.atleast_2d(q))
    uu = u0[0] + np.linspace(-0.01, 0.01, 400)
    vv = v0[0] + np.linspace(-0.01, 0.01, 400)
    U, V = np.meshgrid(uu, vv, indexing="ij")
    pts = t.chart(U.ravel(), V.ravel())
    best = min(best, np.linalg.norm(pts - x, axis=1).min())
    assert np.linalg.norm(q - x) <= best + 1e-7


def test_project_outside_tube_raises():
    t = Torus(2.0, 0.5)
    with pytest.raises(OutsideTubularNeighbourhood):
        t.project(np.array([0.0, 0.0, 5.0]))


def test_project_idempotent():
    s = Sphere(1.0)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(50, 3))
    x = x / np.linalg.norm(x, axis=1, keepdims=True) * rng.uniform(0.8, 1.2, 50)[:, None]
    q = s.project(x)
    np.testing.assert_allclose(s.project(q), q, atol=1e-14)


def test_geodesic_distance_sphere_exact():
    s = Sphere(1.0)
    assert abs(s.geodesic_distance(np.array([1, 0, 0.0]), np.array([0, 1, 0.0])) - np.pi / 2) < 1e-12
    p = s.chart(np.array([0.7]), np.array([1.0]))[0]
    assert s.geodesic_distance(p, p) == 0.0


def test_geodesic_distance_torus_minor_arc():
    t = Torus(2.0, 0.5)
    p = t.chart(np.array([0.0]), np.array([0.0]))[0]
    q = t.chart(np.array([0.0]), np.array([1.2]))[0]
    arc = 0.5 * 1.2  # parametric minor-circle arc length
    d = t.geodesic_distance(p, q)
    assert abs(d - arc) / arc < 0.02


def test_off_surface_point_rejected():
    s = Sphere(1.0)
    with pytest.raises(PointOffSurface):
        s.normal(np.array([0.0, 0.0, 1.5]))


def test_gauss_decomposition_orthogonality():
    """|grad_s u|^2 = |Du|^2 + |dgamma[u]|^2 for analytic tangent fields (FD check)."""
    t = Torus(2.0, 0.5)

    def field(pts):
        # smooth unit tangent field: normalized major direction rotated in-plane
        u, v = t.params_of(pts)
        Xu, Xv = t.chart_partials(u, v)
        e1 = Xu / np.linalg.norm(Xu, axis=1, keepdims=True)
        e2 = Xv / np.linalg.norm(Xv, axis=1, keepdims=True)
        a = 0.7 * np.sin(u) + v
        return np.cos(a)[:, None] * e1 + np.sin(a)[:, None] * e2

    h = 1e-5
    for (u, v) in [(0.4, 1.0), (2.0, 2.5), (5.0, 0.3)]:
        p = t.chart(np.array([u]), np.array([v]))[0]
        n = t.normal(p)
        basis = t.tangent_basis_at(p)
        grad_sq = 0.0
        D_sq = 0.0
        dg = t.shape_operator(p, field(np.atleast_2d(p))[0])
        for e in (basis.e1, basis.e2):
            # walk along the surface in direction e via projection
            pp = t.project(p + h * e)
            pm = t.project(p - h * e)
            dudir = (field(np.atleast_2d(pp))[0] - field(np.atleast_2d(pm))[0]) / (2 * h)
            grad_sq += dudir @ dudir
            tang = dudir - (dudir @ n) * n
            D_sq += tang @ tang
        rhs = D_sq + dg @ dg
        assert abs(grad_sq - rhs) / abs(grad_sq) < 1e-4


def test_gauss_bonnet_quadrature():
    for surf in (Sphere(1.3), Torus(2.0, 0.5), GraphBump(0.4, 0.2)):
        (u0, u1), (v0, v1) = surf.param_domain
        n = 400
        uu = u0 + (u1 - u0) * (np.arange(n) + 0.5) / n
        vv = v0 + (v1 - v0) * (np.arange(n) + 0.5) / n
        U, V = np.meshgrid(uu, vv, indexing="ij")
        Xu, Xv = surf.chart_partials(U.ravel(), V.ravel())
        dA = np.linalg.norm(np.cross(Xu, Xv), axis=1)
        G = surf.gauss_curvature_of_params(U.ravel(), V.ravel())
        total = (G * dA).sum() * (u1 - u0) * (v1 - v0) / n**2
        target = 2 * np.pi * surf.euler_characteristic
        scale = max(abs(target), (np.abs(G) * dA).sum() * (u1 - u0) * (v1 - v0) / n**2)
        assert abs(total - target) <= 0.005 * scale


def test_exp_log_round_trip_sphere():
    s = Sphere(1.0)
    p = s.chart(np.array([1.1]), np.array([0.4]))[0]
    basis = s.tangent_basis_at(p)
    coords = np.array([[0.3, -0.2], [0.0, 0.9], [1.5, 0.2]])
    pts = s.exp_map(p, coords, basis=basis)
    back = s.local_coords(p, pts, basis=basis)
    np.testing.assert_allclose(back, coords, atol=1e-10)


def test_exp_map_torus_arc_length():
    t = Torus(2.0, 0.5)
    p = t.chart(np.array([0.0]), np.array([0.0]))[0]
    basis = t.tangent_basis_at(p)
    # walk along the minor circle: at (u=0, v=0) the minor direction is +z
    c2 = basis.e2 @ np.array([0, 0, 1.0])
    c1 = basis.e1 @ np.array([0, 0, 1.0])
    coords = 0.6 * np.array([[c1, c2]])
    q = t.exp_map(p, coords)[0]
    want = t.chart(np.array([0.0]), np.array([0.6 / 0.5]))[0]
    assert np.linalg.norm(q - want) < 1e-6


def test_make_surface_from_config():
    s = make_surface({"kind": "sphere", "radius": 2.0})
    assert isinstance(s, Sphere) and s.radius == 2.0
    with pytest.raises(ValueError):
        make_surface({"kind": "torus", "major_radius": 1.0, "minor_radius": 1.5})
    with pytest.raises(ValueError):
        make_surface({"radius": 1.0})


def test_tangent_basis_right_handed():
    for surf in SURFACES:
        (u0, u1), (v0, v1) = surf.param_domain
        p = surf.chart(np.array([u0 + 0.3 * (u1 - u0)]), np.array([v0 + 0.7 * (v1 - v0)]))[0]
        assert surf.tangent_basis_at(p).is_orthonormal()
