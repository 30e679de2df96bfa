"""Analytic geometry kernel for closed parametric surfaces embedded in R^3.

Three surface kinds are supported: round spheres, tori of revolution and
periodic Gaussian graph bumps (flat-limit fixtures).  Every operation that
needs the unit normal, the Gauss curvature, the shape operator or the
nearest-point projection is backed by closed-form expressions, so the
downstream discrete machinery never differentiates the chart numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    NotTangent,
    OutsideTubularNeighbourhood,
    PointOffSurface,
)

ON_SURFACE_RTOL = 1e-9      # residual tolerance, relative to diameter
ORTHONORMALITY_TOL = 1e-10


def _unit(a, axis=-1):
    return a / np.linalg.norm(a, axis=axis, keepdims=True)


@dataclass(frozen=True)
class TangentBasis:
    """Right-handed orthonormal triple (e1, e2, normal) at a surface point."""

    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray

    def is_orthonormal(self, tol=ORTHONORMALITY_TOL):
        ok = abs(np.dot(self.e1, self.e2)) < tol
        ok &= np.linalg.norm(np.cross(self.e1, self.e2) - self.normal) < tol
        for v in (self.e1, self.e2, self.normal):
            ok &= abs(np.linalg.norm(v) - 1.0) < tol
        return bool(ok)


class Surface:
    """Base class: concrete kinds implement the chart and its invariants."""

    kind: str
    genus: int
    geodesic_reference_level = 96   # Dijkstra surrogate mesh resolution

    @property
    def euler_characteristic(self):
        return 2 - 2 * self.genus

    # -- interface implemented by subclasses ------------------------------
    def chart(self, u, v):
        raise NotImplementedError

    def params_of(self, points):
        """Inverse chart; points assumed on (or very near) the surface."""
        raise NotImplementedError

    def normal_of_params(self, u, v):
        raise NotImplementedError

    def gauss_curvature_of_params(self, u, v):
        raise NotImplementedError

    def project(self, points):
        raise NotImplementedError

    def geodesic_distances(self, p, points):
        """Distances from a single point p to an (N, 3) array of points."""
        raise NotImplementedError

    @property
    def param_domain(self):
        """((u0, u1), (v0, v1)) parameter rectangle."""
        raise NotImplementedError

    @property
    def diameter(self):
        raise NotImplementedError

    @property
    def metric_diameter(self):
        """Upper bound on the maximal geodesic distance between two points."""
        raise NotImplementedError

    @property
    def area(self):
        raise NotImplementedError

    @property
    def injectivity_radius(self):
        raise NotImplementedError

    @property
    def tubular_thickness(self):
        raise NotImplementedError

    # -- shared operations -------------------------------------------------
    def surface_residual(self, points):
        """Distance from each point to its projection."""
        q = self.project(points)
        return np.linalg.norm(np.atleast_2d(points) - np.atleast_2d(q), axis=1)

    def require_on_surface(self, points):
        res = self.surface_residual(points)
        tol = ON_SURFACE_RTOL * self.diameter
        if np.any(res > tol):
            raise PointOffSurface(
                f"projection residual {res.max():.3e} exceeds {tol:.3e}"
            )

    def normal(self, points):
        """Outward unit normal gamma at points on the surface."""
        pts = np.atleast_2d(np.asarray(points, float))
        self.require_on_surface(pts)
        u, v = self.params_of(pts)
        n = self.normal_of_params(u, v)
        return n[0] if np.ndim(points) == 1 else n

    def gauss_curvature(self, points):
        pts = np.atleast_2d(np.asarray(points, float))
        self.require_on_surface(pts)
        u, v = self.params_of(pts)
        g = self.gauss_curvature_of_params(u, v)
        return float(g[0]) if np.ndim(points) == 1 else g

    def shape_operator(self, p, X):
        """Differential of the normal, d(gamma)_p[X], for tangent X."""
        p = np.asarray(p, float)
        X = np.asarray(X, float)
        single = p.ndim == 1
        pts = np.atleast_2d(p)
        Xs = np.atleast_2d(X)
        self.require_on_surface(pts)
        u, v = self.params_of(pts)
        n = self.normal_of_params(u, v)
        nrm = np.linalg.norm(Xs, axis=1)
        if np.any(np.abs(np.einsum("ij,ij->i", Xs, n)) > 1e-9 * np.maximum(nrm, 1e-300)):
            raise NotTangent("input vector has a normal component")
        out = self._dgamma(u, v, Xs)
        return out[0] if single else out

    def _dgamma(self, u, v, X):
        """d(gamma)[X] from the chart: solve X = Xu*a + Xv*b, return Nu*a + Nv*b."""
        Xu, Xv = self.chart_partials(u, v)
        Nu, Nv = self.normal_partials(u, v)
        E = np.einsum("ij,ij->i", Xu, Xu)
        F = np.einsum("ij,ij->i", Xu, Xv)
        G = np.einsum("ij,ij->i", Xv, Xv)
        xu = np.einsum("ij,ij->i", X, Xu)
        xv = np.einsum("ij,ij->i", X, Xv)
        det = E * G - F * F
        a = (G * xu - F * xv) / det
        b = (E * xv - F * xu) / det
        return Nu * a[:, None] + Nv * b[:, None]

    def chart_partials(self, u, v):
        raise NotImplementedError

    def normal_partials(self, u, v):
        raise NotImplementedError

    def geodesic_distance(self, p, q):
        d = self.geodesic_distances(np.asarray(p, float), np.atleast_2d(np.asarray(q, float)))
        return float(d[0])

    # -- normal coordinates -------------------------------------------------
    def tangent_basis_at(self, p):
        p = np.asarray(p, float)
        n = self.normal(p)
        a = np.array([1.0, 0.0, 0.0])
        if np.linalg.norm(np.cross(a, n)) < 1e-6:
            a = np.array([0.0, 1.0, 0.0])
        e1 = _unit(a - np.dot(a, n) * n)
        return TangentBasis(e1=e1, e2=np.cross(n, e1), normal=n)

    def exp_map(self, p, coords, basis=None, with_velocity=False):
        """Geodesic exponential at p of 2d tangent coordinates (N, 2).

        Coordinates are taken in ``basis`` (default: tangent_basis_at(p)).
        Returns surface points; with ``with_velocity`` also the unit geodesic
        velocities at the endpoints.
        """
        basis = basis or self.tangent_basis_at(p)
        coords = np.atleast_2d(np.asarray(coords, float))
        rho = np.linalg.norm(coords, axis=1)
        direc = np.where(rho[:, None] > 0, coords / np.maximum(rho, 1e-300)[:, None], 0.0)
        vel3 = direc[:, :1] * basis.e1 + direc[:, 1:] * basis.e2
        pts, vels = self._exp_rays(p, vel3, rho)
        if with_velocity:
            return pts, vels
        return pts

    def _exp_rays(self, p, vel3, rho):
        """Integrate geodesics from p with initial unit velocities vel3, lengths rho."""
        u0, v0 = self.params_of(np.atleast_2d(p))
        Xu, Xv = self.chart_partials(u0, v0)
        E = float(Xu[0] @ Xu[0])
        F = float(Xu[0] @ Xv[0])
        G = float(Xv[0] @ Xv[0])
        det = E * G - F * F
        pu = np.einsum("ij,j->i", vel3, Xu[0])
        pv = np.einsum("ij,j->i", vel3, Xv[0])
        du = (G * pu - F * pv) / det
        dv = (E * pv - F * pu) / det
        n = len(rho)
        out_p = np.empty((n, 3))
        out_v = np.empty((n, 3))
        for k in range(n):
            if rho[k] == 0.0:
                out_p[k] = p
                out_v[k] = vel3[k]
                continue
            uk, vk, duk, dvk = self._integrate_geodesic(
                float(u0[0]), float(v0[0]), float(du[k]), float(dv[k]), float(rho[k])
            )
            Xu1, Xv1 = self.chart_partials(np.array([uk]), np.array([vk]))
            out_p[k] = self.chart(np.array([uk]), np.array([vk]))[0]
            out_v[k] = _unit(Xu1[0] * duk + Xv1[0] * dvk)
        return out_p, out_v

    def _integrate_geodesic(self, u, v, du, dv, length, steps_per_unit=None):
        """RK4 integration of the geodesic ODE in chart coordinates."""
        steps = max(24, int(np.ceil(length * (steps_per_unit or 200))))
        h = length / steps
        y = np.array([u, v, du, dv], float)

        def rhs(y):
            G = self.christoffel(y[0], y[1])
            du_, dv_ = y[2], y[3]
            acc_u = -(G[0, 0, 0] * du_ * du_ + 2 * G[0, 0, 1] * du_ * dv_ + G[0, 1, 1] * dv_ * dv_)
            acc_v = -(G[1, 0, 0] * du_ * du_ + 2 * G[1, 0, 1] * du_ * dv_ + G[1, 1, 1] * dv_ * dv_)
            return np.array([du_, dv_, acc_u, acc_v])

        for _ in range(steps):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return y[0], y[1], y[2], y[3]

    def christoffel(self, u, v):
        """Christoffel symbols Gamma[k, i, j] of the chart metric."""
        raise NotImplementedError

    def local_coords(self, p, points, basis=None):
        """2d coordinates of nearby points around p.

        Exact logarithm map where available (sphere, flat bump); otherwise
        first-order tangent-plane coordinates, adequate within O(rho^2).
        """
        basis = basis or self.tangent_basis_at(p)
        pts = np.atleast_2d(np.asarray(points, float))
        d = pts - np.asarray(p, float)
        return np.stack([d @ basis.e1, d @ basis.e2], axis=-1)


# ---------------------------------------------------------------------------
class Sphere(Surface):
    """Round sphere of given radius, centred at the origin."""

    kind = "sphere"
    genus = 0

    def __init__(self, radius):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)

    def __repr__(self):
        return f"Sphere(radius={self.radius})"

    @property
    def param_domain(self):
        return ((0.0, np.pi), (0.0, 2 * np.pi))

    @property
    def diameter(self):
        return 2 * self.radius

    @property
    def metric_diameter(self):
        return np.pi * self.radius

    @property
    def area(self):
        return 4 * np.pi * self.radius**2

    @property
    def injectivity_radius(self):
        return np.pi * self.radius

    @property
    def tubular_thickness(self):
        return 0.9 * self.radius

    def chart(self, u, v):
        """u = colatitude in [0, pi], v = longitude in [0, 2 pi)."""
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        R = self.radius
        return np.stack(
            [R * np.sin(u) * np.cos(v), R * np.sin(u) * np.sin(v), R * np.cos(u)], axis=-1
        )

    def chart_partials(self, u, v):
        R = self.radius
        Xu = np.stack([R * np.cos(u) * np.cos(v), R * np.cos(u) * np.sin(v), -R * np.sin(u)], -1)
        Xv = np.stack([-R * np.sin(u) * np.sin(v), R * np.sin(u) * np.cos(v), np.zeros_like(u)], -1)
        return Xu, Xv

    def params_of(self, points):
        pts = np.atleast_2d(points)
        r = np.linalg.norm(pts, axis=1)
        u = np.arccos(np.clip(pts[:, 2] / r, -1, 1))
        v = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
        return u, v

    def normal_of_params(self, u, v):
        return self.chart(u, v) / self.radius

    def normal_partials(self, u, v):
        Xu, Xv = self.chart_partials(u, v)
        return Xu / self.radius, Xv / self.radius

    def gauss_curvature_of_params(self, u, v):
        return np.full(np.shape(np.asarray(u)), 1.0 / self.radius**2)

    def _dgamma(self, u, v, X):
        return X / self.radius

    def project(self, points):
        pts = np.atleast_2d(np.asarray(points, float))
        r = np.linalg.norm(pts, axis=1)
        if np.any(np.abs(r - self.radius) > self.tubular_thickness):
            raise OutsideTubularNeighbourhood(
                f"distance {np.abs(r - self.radius).max():.3e} exceeds thickness"
            )
        out = pts * (self.radius / r)[:, None]
        return out[0] if np.ndim(points) == 1 else out

    def geodesic_distances(self, p, points):
        pts = np.atleast_2d(points)
        c = np.clip(pts @ np.asarray(p, float) / self.radius**2, -1, 1)
        return self.radius * np.arccos(c)

    # exact exponential / logarithm
    def _exp_rays(self, p, vel3, rho):
        R = self.radius
        t = rho / R
        pts = np.cos(t)[:, None] * p + (R * np.sin(t))[:, None] * vel3
        vels = -np.sin(t)[:, None] * (p / R) + np.cos(t)[:, None] * vel3
        zero = rho == 0
        if np.any(zero):
            pts[zero] = p
            vels[zero] = vel3[zero]
        return pts, vels

    def local_coords(self, p, points, basis=None):
        basis = basis or self.tangent_basis_at(p)
        pts = np.atleast_2d(np.asarray(points, float))
        R = self.radius
        c = np.clip(pts @ p / R**2, -1, 1)
        ang = np.arccos(c)
        tang = pts - c[:, None] * np.asarray(p, float)
        nrm = np.linalg.norm(tang, axis=1)
        safe = np.maximum(nrm, 1e-300)
        scale = R * ang / safe
        scale[nrm < 1e-300] = 0.0
        d = tang * scale[:, None]
        return np.stack([d @ basis.e1, d @ basis.e2], axis=-1)


# ---------------------------------------------------------------------------
class Torus(Surface):
    """Torus of revolution about the z axis; requires minor < major radius."""

    kind = "torus"
    genus = 1

    def __init__(self, major_radius, minor_radius):
        if minor_radius <= 0 or major_radius <= 0:
            raise ValueError("radii must be positive")
        if minor_radius >= major_radius:
            raise ValueError("self-intersecting torus: minor_radius >= major_radius")
        self.major_radius = float(major_radius)
        self.minor_radius = float(minor_radius)

    def __repr__(self):
        return f"Torus(major_radius={self.major_radius}, minor_radius={self.minor_radius})"

    @property
    def param_domain(self):
        return ((0.0, 2 * np.pi), (0.0, 2 * np.pi))

    @property
    def diameter(self):
        return 2 * (self.major_radius + self.minor_radius)

    @property
    def metric_diameter(self):
        return np.pi * (self.major_radius + 2 * self.minor_radius)

    @property
    def area(self):
        return 4 * np.pi**2 * self.major_radius * self.minor_radius

    @property
    def injectivity_radius(self):
        # conservative: half the minor half-circumference
        return 0.5 * np.pi * self.minor_radius

    @property
    def tubular_thickness(self):
        R, r = self.major_radius, self.minor_radius
        kmax = max(1.0 / r, 1.0 / (R - r))
        return 0.9 / kmax

    def chart(self, u, v):
        """u = angle around the z axis, v = angle around the tube."""
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        R, r = self.major_radius, self.minor_radius
        a = R + r * np.cos(v)
        return np.stack([a * np.cos(u), a * np.sin(u), r * np.sin(v)], axis=-1)

    def chart_partials(self, u, v):
        R, r = self.major_radius, self.minor_radius
        a = R + r * np.cos(v)
        z = np.zeros_like(np.asarray(u, float))
        Xu = np.stack([-a * np.sin(u), a * np.cos(u), z], -1)
        Xv = np.stack([-r * np.sin(v) * np.cos(u), -r * np.sin(v) * np.sin(u), r * np.cos(v)], -1)
        return Xu, Xv

    def params_of(self, points):
        pts = np.atleast_2d(points)
        u = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
        rho = np.hypot(pts[:, 0], pts[:, 1]) - self.major_radius
        v = np.mod(np.arctan2(pts[:, 2], rho), 2 * np.pi)
        return u, v

    def normal_of_params(self, u, v):
        return np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)], axis=-1)

    def normal_partials(self, u, v):
        z = np.zeros_like(np.asarray(u, float))
        Nu = np.stack([-np.cos(v) * np.sin(u), np.cos(v) * np.cos(u), z], -1)
        Nv = np.stack([-np.sin(v) * np.cos(u), -np.sin(v) * np.sin(u), np.cos(v)], -1)
        return Nu, Nv

    def gauss_curvature_of_params(self, u, v):
        R, r = self.major_radius, self.minor_radius
        return np.cos(v) / (r * (R + r * np.cos(v)))

    def project(self, points):
        pts = np.atleast_2d(np.asarray(points, float))
        u = np.arctan2(pts[:, 1], pts[:, 0])
        rho = np.hypot(pts[:, 0], pts[:, 1]) - self.major_radius
        d = np.hypot(rho, pts[:, 2])
        if np.any(np.abs(d - self.minor_radius) > self.tubular_thickness):
            raise OutsideTubularNeighbourhood("point outside the tubular neighbourhood")
        v = np.arctan2(pts[:, 2], rho)
        out = self.chart(u, v)
        return out[0] if np.ndim(points) == 1 else out

    def christoffel(self, u, v):
        R, r = self.major_radius, self.minor_radius
        a = R + r * np.cos(v)
        G = np.zeros((2, 2, 2))
        G[0, 0, 1] = G[0, 1, 0] = -r * np.sin(v) / a
        G[1, 0, 0] = a * np.sin(v) / r
        return G

    def geodesic_distances(self, p, points):
        return _graph_geodesic_distances(self, p, points, n=self.geodesic_reference_level)


# ---------------------------------------------------------------------------
class GraphBump(Surface):
    """Periodic Gaussian graph z = A exp(-|x - c|^2 / (2 w^2)) over a square cell.

    The period is fixed at 16 * width so the bump and its derivatives vanish
    to machine precision at the cell boundary; with the periodic
    identification the surface is a topological torus (chi = 0).  Meshes of
    this surface are generated as bounded patches since a flat torus does not
    embed isometrically in R^3.  The amplitude-0 instance is the flat plane
    used by planar fixtures.
    """

    kind = "graph_bump"
    genus = 1
    PERIOD_FACTOR = 16.0

    def __init__(self, amplitude, width):
        if width <= 0:
            raise ValueError("width must be positive")
        if amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        self.amplitude = float(amplitude)
        self.width = float(width)
        self.period = self.PERIOD_FACTOR * self.width
        self._kmax = None

    def __repr__(self):
        return f"GraphBump(amplitude={self.amplitude}, width={self.width})"

    @property
    def param_domain(self):
        return ((0.0, self.period), (0.0, self.period))

    @property
    def diameter(self):
        return float(np.hypot(np.sqrt(2) * self.period, self.amplitude))

    @property
    def metric_diameter(self):
        return np.sqrt(2) * self.period + 4 * self.amplitude

    @property
    def area(self):
        if self.amplitude == 0.0:
            return self.period**2
        n = 256
        t = (np.arange(n) + 0.5) * self.period / n
        uu, vv = np.meshgrid(t, t, indexing="ij")
        fu, fv = self._f_grad(uu.ravel(), vv.ravel())
        return float(np.sqrt(1 + fu**2 + fv**2).sum() * (self.period / n) ** 2)

    @property
    def injectivity_radius(self):
        return 0.45 * self.period

    @property
    def tubular_thickness(self):
        if self.amplitude == 0.0:
            return 0.45 * self.period
        return 0.9 / self._max_principal_curvature()

    def _max_principal_curvature(self):
        if self._kmax is None:
            n = 128
            t = (np.arange(n) + 0.5) * self.period / n
            uu, vv = np.meshgrid(t, t, indexing="ij")
            k = self._principal_curvature_bound(uu.ravel(), vv.ravel())
            self._kmax = float(k.max())
        return self._kmax

    def _principal_curvature_bound(self, u, v):
        fu, fv = self._f_grad(u, v)
        fuu, fuv, fvv = self._f_hess(u, v)
        w2 = 1 + fu**2 + fv**2
        # |II| / lambda_min(I) bounds |principal curvature|
        hnorm = np.sqrt(fuu**2 + 2 * fuv**2 + fvv**2) / np.sqrt(w2)
        return hnorm

    # Gaussian profile and derivatives; displacements wrapped into the cell.
    def _disp(self, u, v):
        c = 0.5 * self.period
        du = np.mod(np.asarray(u, float) - c + 0.5 * self.period, self.period) - 0.5 * self.period
        dv = np.mod(np.asarray(v, float) - c + 0.5 * self.period, self.period) - 0.5 * self.period
        return du, dv

    def _f(self, u, v):
        du, dv = self._disp(u, v)
        return self.amplitude * np.exp(-(du**2 + dv**2) / (2 * self.width**2))

    def _f_grad(self, u, v):
        du, dv = self._disp(u, v)
        f = self._f(u, v)
        w2 = self.width**2
        return -du * f / w2, -dv * f / w2

    def _f_hess(self, u, v):
        du, dv = self._disp(u, v)
        f = self._f(u, v)
        w2 = self.width**2
        fuu = f * (du**2 / w2 - 1) / w2
        fvv = f * (dv**2 / w2 - 1) / w2
        fuv = f * du * dv / w2**2
        return fuu, fuv, fvv

    def chart(self, u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        return np.stack([u, v, self._f(u, v)], axis=-1)

    def chart_partials(self, u, v):
        fu, fv = self._f_grad(u, v)
        one = np.ones_like(np.asarray(u, float))
        zero = np.zeros_like(one)
        Xu = np.stack([one, zero, fu], -1)
        Xv = np.stack([zero, one, fv], -1)
        return Xu, Xv

    def params_of(self, points):
        pts = np.atleast_2d(points)
        return pts[:, 0].astype(float), pts[:, 1].astype(float)

    def normal_of_params(self, u, v):
        fu, fv = self._f_grad(u, v)
        n = np.stack([-fu, -fv, np.ones_like(fu)], axis=-1)
        return _unit(n)

    def normal_partials(self, u, v):
        fu, fv = self._f_grad(u, v)
        fuu, fuv, fvv = self._f_hess(u, v)
        m = np.stack([-fu, -fv, np.ones_like(fu)], -1)
        mu = np.stack([-fuu, -fuv, np.zeros_like(fu)], -1)
        mv = np.stack([-fuv, -fvv, np.zeros_like(fu)], -1)
        nrm = np.linalg.norm(m, axis=-1, keepdims=True)
        gu = mu / nrm - m * (np.einsum("...i,...i->...", m, mu) / nrm[..., 0] ** 3)[..., None]
        gv = mv / nrm - m * (np.einsum("...i,...i->...", m, mv) / nrm[..., 0] ** 3)[..., None]
        return gu, gv

    def gauss_curvature_of_params(self, u, v):
        fu, fv = self._f_grad(u, v)
        fuu, fuv, fvv = self._f_hess(u, v)
        return (fuu * fvv - fuv**2) / (1 + fu**2 + fv**2) ** 2

    def project(self, points):
        pts = np.atleast_2d(np.asarray(points, float)).copy()
        u = np.mod(pts[:, 0], self.period)
        v = np.mod(pts[:, 1], self.period)
        if self.amplitude == 0.0:
            out = np.stack([u, v, np.zeros_like(u)], -1)
        else:
            # Newton iterations on grad of 0.5 |x - X(u,v)|^2
            z = pts[:, 2]
            for _ in range(30):
                f = self._f(u, v)
                fu, fv = self._f_grad(u, v)
                fuu, fuv, fvv = self._f_hess(u, v)
                ru = (u - pts[:, 0]) - (z - f) * fu
                rv = (v - pts[:, 1]) - (z - f) * fv
                juu = 1 + fu * fu - (z - f) * fuu
                juv = fu * fv - (z - f) * fuv
                jvv = 1 + fv * fv - (z - f) * fvv
                det = juu * jvv - juv**2
                du = (jvv * ru - juv * rv) / det
                dv = (juu * rv - juv * ru) / det
                u -= du
                v -= dv
                if max(np.abs(du).max(), np.abs(dv).max()) < 1e-14 * self.period:
                    break
            out = self.chart(u, v)
        d = np.linalg.norm(pts - out, axis=1)
        if np.any(d > self.tubular_thickness):
            raise OutsideTubularNeighbourhood("point outside the tubular neighbourhood")
        return out[0] if np.ndim(points) == 1 else out

    def christoffel(self, u, v):
        fu, fv = self._f_grad(u, v)
        fuu, fuv, fvv = self._f_hess(u, v)
        w2 = 1 + fu**2 + fv**2
        G = np.empty((2, 2, 2))
        G[0] = np.array([[fu * fuu, fu * fuv], [fu * fuv, fu * fvv]]) / w2
        G[1] = np.array([[fv * fuu, fv * fuv], [fv * fuv, fv * fvv]]) / w2
        return G

    def _exp_rays(self, p, vel3, rho):
        if self.amplitude == 0.0:
            pts = np.asarray(p, float) + rho[:, None] * vel3
            return pts, vel3.copy()
        return super()._exp_rays(p, vel3, rho)

    def local_coords(self, p, points, basis=None):
        if self.amplitude == 0.0:
            basis = basis or self.tangent_basis_at(p)
            pts = np.atleast_2d(np.asarray(points, float))
            d = pts - np.asarray(p, float)
            return np.stack([d @ basis.e1, d @ basis.e2], axis=-1)
        return super().local_coords(p, points, basis=basis)

    def geodesic_distances(self, p, points):
        if self.amplitude == 0.0:
            pts = np.atleast_2d(points)
            return np.linalg.norm(pts - np.asarray(p, float), axis=1)
        return _graph_geodesic_distances(self, p, points, n=self.geodesic_reference_level)


# ---------------------------------------------------------------------------
# Dijkstra surrogate for geodesic distances on surfaces without a closed form.
_GEO_CACHE = {}


def _reference_graph(surface, n=96):
    """Fine structured reference mesh (vertices + sparse edge-length graph)."""
    from scipy import sparse as sp

    key = (repr(surface), n)
    if key in _GEO_CACHE:
        return _GEO_CACHE[key]
    (u0, u1), (v0, v1) = surface.param_domain
    if isinstance(surface, Torus):
        nu, nv = 4 * n, n
        periodic = True
    else:
        nu = nv = n
        periodic = False
    uu = u0 + (u1 - u0) * np.arange(nu) / (nu if periodic else nu - 1)
    vv = v0 + (v1 - v0) * np.arange(nv) / (nv if periodic else nv - 1)
    U, V = np.meshgrid(uu, vv, indexing="ij")
    pts = surface.chart(U.ravel(), V.ravel())

    def vid(i, j):
        if periodic:
            return (i % nu) * nv + (j % nv)
        return i * nv + j

    rows, cols = [], []
    irange = range(nu) if periodic else range(nu - 1)
    jrange = range(nv) if periodic else range(nv - 1)
    # grid edges plus both diagonals of every cell
    for i in irange:
        for j in range(nv):
            rows.append(vid(i, j)); cols.append(vid(i + 1, j))
    for i in range(nu):
        for j in jrange:
            rows.append(vid(i, j)); cols.append(vid(i, j + 1))
    for i in irange:
        for j in jrange:
            rows.append(vid(i, j)); cols.append(vid(i + 1, j + 1))
            rows.append(vid(i + 1, j)); cols.append(vid(i, j + 1))
    rows = np.array(rows)
    cols = np.array(cols)
    w = np.linalg.norm(pts[rows] - pts[cols], axis=1)
    graph = sp.csr_matrix((np.r_[w, w], (np.r_[rows, cols], np.r_[cols, rows])), shape=(len(pts), len(pts)))
    from scipy.spatial import cKDTree

    entry = (pts, graph, cKDTree(pts))
    _GEO_CACHE[key] = entry
    return entry


def _graph_geodesic_distances(surface, p, points, n=96):
    """Dijkstra on a reference mesh; overestimates by O(reference mesh size)."""
    from scipy.sparse.csgraph import dijkstra

    pts_ref, graph, tree = _reference_graph(surface, n)
    src = tree.query(np.asarray(p, float))[1]
    dist = dijkstra(graph, directed=False, indices=src)
    q = np.atleast_2d(points)
    snap_d, snap_i = tree.query(q)
    return dist[snap_i] + snap_d + float(np.linalg.norm(pts_ref[src] - np.asarray(p, float)))


# ---------------------------------------------------------------------------
def make_surface(spec):
    """Build a surface from a JSON-style dict, e.g. {"kind": "sphere", "radius": 1.0}."""
    if "kind" not in spec:
        raise ValueError("surface spec missing 'kind'")
    kind = spec["kind"]
    if kind == "sphere":
        return Sphere(radius=spec["radius"])
    if kind == "torus":
        return Torus(major_radius=spec["major_radius"], minor_radius=spec["minor_radius"])
    if kind == "graph_bump":
        return GraphBump(amplitude=spec["amplitude"], width=spec["width"])
    raise ValueError(f"unknown surface kind {kind!r}")
