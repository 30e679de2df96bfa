"""Energy minimization over angle variables, plus core/annulus subproblems.

The optimization variable is the unconstrained angle vector, which removes
the unit-tangency constraint exactly.  The default solver is Polak-Ribiere
nonlinear conjugate gradient with Armijo backtracking; every accepted step
is non-increasing in energy and the whole iteration is deterministic given
the seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .energy import xy_energy
from .errors import BallTooSmall, LengthMismatch, NotConverged
from .field import DiscreteField, realize, triangle_transport, wrap_angle
from .mesh import discrete_ball
from .vorticity import WINDING_RESIDUAL_MAX


@dataclass
class SolveOptions:
    max_iters: int = 20000
    grad_tol: float = None        # default: 1e-8 * mean stiffness
    step_rule: str = "ncg"        # "ncg" | "bb" | "fixed"
    eta: float = 0.1              # step size for step_rule == "fixed"
    seed: int = 0
    restarts: int = 1
    monitor_charge: bool = True
    record_every: int = 1
    checkpoint_every: int = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.step_rule not in ("ncg", "bb", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass
class SolveTrace:
    iterates: list = field(default_factory=list)   # (iteration, energy, grad_norm)
    converged: bool = False
    wall_time: float = 0.0
    flagged_iterations: list = field(default_factory=list)

    def final_energy(self):
        return self.iterates[-1][1] if self.iterates else np.nan

    def final_grad_norm(self):
        return self.iterates[-1][2] if self.iterates else np.nan


ARMIJO_C = 1e-4


def _descend(value_grad, x0, opts, tol, callback=None):
    """Shared descent engine over a flat variable vector.

    value_grad(x) -> (energy, gradient); gradient entries of fixed variables
    must be zero.  Accepted steps never increase the energy (backtracking).
    """
    x = x0.copy()
    e, g = value_grad(x)
    d = -g
    step = 1.0
    trace = SolveTrace()
    start = time.perf_counter()
    it = 0
    while True:
        gn = float(np.abs(g).max())
        if it % opts.record_every == 0 or gn <= tol or it >= opts.max_iters:
            trace.iterates.append((it, float(e), gn))
        if callback is not None:
            callback(it, x, e, gn)
        if gn <= tol:
            trace.converged = True
            break
        if it >= opts.max_iters:
            break

        if opts.step_rule == "fixed":
            x_new = x - opts.eta * g
            e_new, g_new = value_grad(x_new)
            if e_new > e:
                # halve until non-increasing (keeps the descent invariant)
                eta = opts.eta
                for _ in range(60):
                    eta *= 0.5
                    x_new = x - eta * g
                    e_new, g_new = value_grad(x_new)
                    if e_new <= e:
                        break
                if e_new > e:
                    trace.iterates.append((it + 1, float(e), gn))
                    break
            x, e, g = x_new, e_new, g_new
            it += 1
            continue

        noise = 4.0 * np.finfo(float).eps * (abs(e) + 1.0)
        accepted = False
        steepest_tried = False
        dg = float(d @ g)
        if dg >= 0:
            d = -g
            dg = float(d @ g)
            steepest_tried = True
        while True:
            st = step
            for _ in range(60):
                x_new = x + st * d
                e_new, g_new = value_grad(x_new)
                # Armijo with an absolute allowance at float resolution
                if e_new <= e + ARMIJO_C * st * dg + noise and np.any(x_new != x):
                    accepted = True
                    break
                st *= 0.5
            if accepted or steepest_tried:
                break
            d = -g
            dg = float(d @ g)
            steepest_tried = True
        if not accepted:
            # no measurable progress along steepest descent: at the float floor
            trace.iterates.append((it + 1, float(e), gn))
            break
        if opts.step_rule == "bb":
            s = x_new - x
            y = g_new - g
            yy = float(y @ y)
            bb = float(s @ y) / yy if yy > 0 else st
            d_next = -g_new
            step = abs(bb) if np.isfinite(bb) and bb != 0 else st * 2
        else:
            beta = max(0.0, float(g_new @ (g_new - g)) / max(float(g @ g), 1e-300))
            d_next = -g_new + beta * d
            step = st * 2.0
        x, e, g, d = x_new, e_new, g_new, d_next
        it += 1
    trace.wall_time = time.perf_counter() - start
    return x, e, g, trace


def _charge_monitor(tri, frames):
    """Closure computing (total winding, any ambiguous) cheaply per iterate."""
    t01, t12, t20 = triangle_transport(tri, frames)
    t = tri.triangles

    def monitor(theta):
        d01 = wrap_angle(theta[t[:, 1]] - theta[t[:, 0]] - t01)
        d12 = wrap_angle(theta[t[:, 2]] - theta[t[:, 1]] - t12)
        d20 = wrap_angle(theta[t[:, 0]] - theta[t[:, 2]] - t20)
        s = (d01 + d12 + d20) / (2 * np.pi)
        w = np.rint(s)
        ambiguous = np.abs(s - w) >= WINDING_RESIDUAL_MAX
        return int(w.sum()), bool(ambiguous.any())

    return monitor


def region_operator(tri, region):
    """Stiffness adjacency and edge arrays, optionally restricted to triangles."""
    if region is None:
        return tri.adjacency, tri.edges[:, 0], tri.edges[:, 1], tri.kappa
    region = np.asarray(region, dtype=np.int64)
    t = tri.triangles[region]
    w = tri.tri_weights[region]
    rows, cols, vals = [], [], []
    for k, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        rows.append(t[:, a])
        cols.append(t[:, b])
        vals.append(w[:, k])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    nv = tri.n_vertices
    W = sparse.csr_matrix(
        (np.r_[vals, vals], (np.r_[rows, cols], np.r_[cols, rows])), shape=(nv, nv)
    )
    return W, rows, cols, vals


def _xy_value_grad(frames, W, ei, ej, kap, free_mask=None):
    """Energy as a positive edge-wise sum (well-conditioned near minima);
    gradient via one sparse matvec."""
    e1, e2 = frames.e1, frames.e2

    def value_grad(theta):
        c = np.cos(theta)[:, None]
        s = np.sin(theta)[:, None]
        v = c * e1 + s * e2
        t = -s * e1 + c * e2
        e = float(np.sum(kap * (1.0 - np.einsum("ij,ij->i", v[ei], v[ej]))))
        g = -np.einsum("ij,ij->i", t, W @ v)
        if free_mask is not None:
            g[~free_mask] = 0.0
        return e, g

    return value_grad


def default_grad_tol(tri):
    return 1e-8 * float(tri.kappa.mean())


def minimize(tri, frames, init, opts=None, region=None, fixed_mask=None, checkpoint_fn=None):
    """First-order critical point of the XY energy from a given start field.

    Returns (DiscreteField, SolveTrace); a failed tolerance leaves
    trace.converged False and returns the best iterate (no exception).
    ``region`` restricts the energy to a triangle subset; ``fixed_mask``
    marks Dirichlet vertices whose angles are never touched.
    """
    opts = opts or SolveOptions()
    theta0 = np.asarray(getattr(init, "theta", init), float).copy()
    if len(theta0) != tri.n_vertices:
        raise LengthMismatch("init length does not match the mesh")
    tol = opts.grad_tol if opts.grad_tol is not None else default_grad_tol(tri)
    W, ei, ej, kap = region_operator(tri, region)
    free = None if fixed_mask is None else ~np.asarray(fixed_mask, bool)
    if free is not None and not free.any():
        trace = SolveTrace(converged=True)
        e = xy_energy(tri, realize(DiscreteField(theta=theta0), frames), region=region)
        trace.iterates.append((0, float(e), 0.0))
        return DiscreteField(theta=theta0), trace

    # restrict the working set to vertices coupled by W (cheap for small
    # regions); fixed vertices inside it keep masked gradients
    if region is not None:
        active = np.unique(tri.triangles[np.asarray(region, dtype=np.int64)])
        lift = np.full(tri.n_vertices, -1, dtype=np.int64)
        lift[active] = np.arange(len(active))
        Wa = W[active][:, active]
        frames_a = type(frames)(e1=frames.e1[active], e2=frames.e2[active], normal=frames.normal[active])
        free_a = None if free is None else free[active]
        value_grad = _xy_value_grad(frames_a, Wa, lift[ei], lift[ej], kap, free_mask=free_a)
        x0 = theta0[active]
    else:
        value_grad = _xy_value_grad(frames, W, ei, ej, kap, free_mask=free)
        x0 = theta0

    monitor = _charge_monitor(tri, frames) if opts.monitor_charge and region is None else None
    flagged = []
    state = {"last_charge": None}

    def expand(x):
        if region is None:
            return x
        out = theta0.copy()
        out[active] = x
        return out

    def callback(it, x, e, gn):
        if monitor is not None:
            charge, ambiguous = monitor(x)
            if ambiguous or (state["last_charge"] is not None and charge != state["last_charge"]):
                flagged.append(it)
            state["last_charge"] = charge
        if checkpoint_fn is not None and opts.checkpoint_every and it > 0 and it % opts.checkpoint_every == 0:
            checkpoint_fn(it, DiscreteField(theta=expand(x).copy()))

    xsol, e, g, trace = _descend(value_grad, x0, opts, tol, callback=callback)
    theta = expand(xsol)
    trace.flagged_iterations = flagged
    if fixed_mask is not None:
        # fixed entries are bit-exact by construction (gradient masked, but
        # assert the contract cheaply)
        theta[np.asarray(fixed_mask, bool)] = theta0[np.asarray(fixed_mask, bool)]
    return DiscreteField(theta=theta), trace


def minimize_dirichlet(tri, frames, init, fixed_vertices, opts=None, region=None):
    """Minimize with prescribed angles on a vertex subset."""
    fixed_mask = np.zeros(tri.n_vertices, dtype=bool)
    fixed_mask[np.asarray(fixed_vertices, dtype=np.int64)] = True
    if not fixed_mask.any():
        raise ValueError("fixed_vertices must be nonempty")
    return minimize(tri, frames, init, opts=opts, region=region, fixed_mask=fixed_mask)


def random_field(tri, rng):
    """Uniform random angles in (-pi, pi]."""
    return DiscreteField(theta=rng.uniform(-np.pi, np.pi, tri.n_vertices))


def minimize_restarts(tri, frames, opts, init_fields=None):
    """Independent seeded restarts; returns (best field, best trace, all traces).

    Restart k uses the seeded generator spawn (opts.seed, k); the lowest
    final energy wins.
    """
    best = None
    runs = []
    for k in range(opts.restarts):
        if init_fields is not None:
            init = init_fields[k]
        else:
            rng = np.random.default_rng([opts.seed, k])
            init = random_field(tri, rng)
        f, tr = minimize(tri, frames, init, opts=opts)
        runs.append((f, tr))
        if best is None or tr.final_energy() < runs[best][1].final_energy():
            best = k
    return runs[best][0], runs[best][1], runs


# ---------------------------------------------------------------------------
# annulus problem in normal-coordinate polar grid
@dataclass
class AnnulusField:
    surface: object
    center: np.ndarray
    delta: float
    r_grid: np.ndarray          # (n_r + 1,)
    phi_grid: np.ndarray        # (n_phi,)
    psi: np.ndarray             # (n_r + 1, n_phi) angles relative to the polar frame
    eta_value: float

    def vectors_at(self, points):
        """Unit tangent vectors of the minimizer at surface points."""
        pts = np.atleast_2d(np.asarray(points, float))
        surf = self.surface
        z = surf.local_coords(self.center, pts)
        rho = np.linalg.norm(z, axis=1)
        phi = np.mod(np.arctan2(z[:, 1], z[:, 0]), 2 * np.pi)
        # bilinear interpolation of psi (periodic in phi, clamped in r)
        n_phi = len(self.phi_grid)
        dphi = 2 * np.pi / n_phi
        fi = phi / dphi
        i0 = np.floor(fi).astype(int) % n_phi
        ti = fi - np.floor(fi)
        rr = np.clip(rho, self.r_grid[0], self.r_grid[-1])
        dr = self.r_grid[1] - self.r_grid[0]
        fk = (rr - self.r_grid[0]) / dr
        k0 = np.minimum(np.floor(fk).astype(int), len(self.r_grid) - 2)
        tk = fk - k0
        p = self.psi
        psi = ((1 - tk) * ((1 - ti) * p[k0, i0] + ti * p[k0, (i0 + 1) % n_phi])
               + tk * ((1 - ti) * p[k0 + 1, i0] + ti * p[k0 + 1, (i0 + 1) % n_phi]))
        # radial/azimuthal frame at the query points
        gam_u, gam_v = surf.params_of(surf.project(pts))
        gam = surf.normal_of_params(gam_u, gam_v)
        radial = pts - self.center
        radial = radial - gam * np.einsum("ij,ij->i", radial, gam)[:, None]
        radial = radial / np.linalg.norm(radial, axis=1, keepdims=True)
        azim = np.cross(gam, radial)
        return np.cos(psi)[:, None] * radial + np.sin(psi)[:, None] * azim


def annulus_minimizer(surface, center, delta, resolution=256, opts=None):
    """Minimal extrinsic energy over index-1 unit tangent fields on A(delta/2, delta).

    The field angle is written as polar angle + periodic correction on a
    geodesic polar grid, which enforces the index constraint exactly; the
    energy is the quadrature of |grad_s w|^2 / 2 on bond differences.
    Returns (AnnulusField, eta).
    """
    if resolution < 64:
        raise ValueError("resolution must be at least 64")
    if delta >= surface.injectivity_radius:
        raise ValueError("delta must be below the injectivity radius")
    center = surface.project(np.asarray(center, float))
    n_phi = int(resolution)
    n_r = max(16, n_phi // 4)
    r = np.linspace(delta / 2, delta, n_r + 1)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    basis = surface.tangent_basis_at(center)

    # grid points and polar frames, built per azimuthal ray
    pts = np.empty((n_r + 1, n_phi, 3))
    rad = np.empty((n_r + 1, n_phi, 3))
    for l, ph in enumerate(phi):
        coords = np.stack([r * np.cos(ph), r * np.sin(ph)], axis=-1)
        p, vel = surface.exp_map(center, coords, basis=basis, with_velocity=True)
        pts[:, l] = p
        rad[:, l] = vel
    u, v = surface.params_of(pts.reshape(-1, 3))
    gam = surface.normal_of_params(u, v).reshape(n_r + 1, n_phi, 3)
    # orthonormalize radial against the normal (exp velocities are tangent
    # already; this guards the generic integrator)
    rad = rad - gam * np.einsum("klj,klj->kl", rad, gam)[..., None]
    rad /= np.linalg.norm(rad, axis=-1, keepdims=True)
    azi = np.cross(gam, rad)

    dphi = 2 * np.pi / n_phi
    dr = r[1] - r[0]
    J = np.linalg.norm(np.roll(pts, -1, axis=1) - np.roll(pts, 1, axis=1), axis=-1) / (2 * dphi)

    # bond coefficients (midpoint metric, trapezoid radial weights)
    c_rad = dphi * 0.5 * (J[:-1] + J[1:]) / dr                     # (n_r, n_phi)
    w_k = np.full(n_r + 1, dr)
    w_k[0] = w_k[-1] = dr / 2
    J_mid = 0.5 * (J + np.roll(J, -1, axis=1))
    c_ang = w_k[:, None] / (dphi * J_mid)                          # (n_r + 1, n_phi)

    shape = (n_r + 1, n_phi)

    def value_grad(x):
        psi = x.reshape(shape)
        w = np.cos(psi)[..., None] * rad + np.sin(psi)[..., None] * azi
        t = -np.sin(psi)[..., None] * rad + np.cos(psi)[..., None] * azi
        e = 0.0
        g = np.zeros(shape)
        # radial bonds
        diff = np.einsum("klj,klj->kl", w[:-1], w[1:])
        e += float(np.sum(c_rad * (1.0 - diff)))
        gr = np.einsum("klj,klj->kl", t[:-1], w[1:])
        g[:-1] -= c_rad * gr
        g[1:] -= c_rad * np.einsum("klj,klj->kl", t[1:], w[:-1])
        # angular bonds
        wn = np.roll(w, -1, axis=1)
        diff = np.einsum("klj,klj->kl", w, wn)
        e += float(np.sum(c_ang * (1.0 - diff)))
        g -= c_ang * np.einsum("klj,klj->kl", t, wn)
        g -= np.roll(c_ang * np.einsum("klj,klj->kl", np.roll(t, -1, axis=1), w), 1, axis=1)
        return e, g.ravel()

    opts = opts or SolveOptions(max_iters=2000, grad_tol=1e-10)
    x0 = np.zeros(shape).ravel()
    x, e, g, trace = _descend(value_grad, x0, opts, opts.grad_tol or 1e-10)
    if not trace.converged and float(np.abs(g).max()) > 1e-6:
        raise NotConverged("annulus minimization did not reach tolerance")
    psi = x.reshape(shape)
    return AnnulusField(surface=surface, center=center, delta=delta, r_grid=r,
                        phi_grid=phi, psi=psi, eta_value=float(e)), float(e)


# ---------------------------------------------------------------------------
def hedgehog_boundary_angles(tri, frames, center, vertex_idx):
    """Radial (charge +1) profile angles at given vertices."""
    g = frames.normal[vertex_idx]
    radial = tri.vertices[vertex_idx] - np.asarray(center, float)
    radial = radial - g * np.einsum("ij,ij->i", radial, g)[:, None]
    nrm = np.linalg.norm(radial, axis=1)
    small = nrm < 1e-12
    radial[small] = frames.e1[vertex_idx][small]
    radial = radial / np.maximum(np.linalg.norm(radial, axis=1, keepdims=True), 1e-300)
    return np.arctan2(
        np.einsum("ij,ij->i", radial, frames.e2[vertex_idx]),
        np.einsum("ij,ij->i", radial, frames.e1[vertex_idx]),
    )


def core_energy(meshes, frames_list, center, delta, boundary="annulus",
                annulus_resolution=256, opts=None, seed=0):
    """Dirichlet core-energy study across refinement levels.

    For each mesh the discrete geodesic ball carries boundary data from the
    annulus minimizer (or the radial hedgehog), the interior is minimized,
    and the remainder gamma(eps, delta) - pi log(delta/eps) is recorded.
    The interior init is the hedgehog plus a small seeded perturbation:
    perfectly symmetric inits sit on lattice saddle points that plain descent
    cannot leave.  Returns a list of rows {eps, gamma, remainder} plus the
    successive absolute remainder differences.
    """
    center = np.asarray(center, float)
    coarse_eps = max(m.mesh_size for m in meshes)
    if delta <= 4 * coarse_eps:
        raise BallTooSmall("delta must exceed 4x the coarsest mesh size")
    surf = meshes[0].surface
    ann = None
    if boundary == "annulus":
        ann, _ = annulus_minimizer(surf, center, delta, resolution=annulus_resolution)
    elif boundary != "hedgehog":
        raise ValueError("boundary must be 'annulus' or 'hedgehog'")

    rows = []
    for level, (tri, frames) in enumerate(zip(meshes, frames_list)):
        interior, bnd = discrete_ball(tri, center, delta)
        theta = hedgehog_boundary_angles(tri, frames, center, np.arange(tri.n_vertices))
        if ann is not None:
            vecs = ann.vectors_at(tri.vertices[bnd])
            theta[bnd] = np.arctan2(
                np.einsum("ij,ij->i", vecs, frames.e2[bnd]),
                np.einsum("ij,ij->i", vecs, frames.e1[bnd]),
            )
        # free = ball-complex vertices minus the discrete boundary
        in_complex = np.zeros(tri.n_vertices, dtype=bool)
        in_complex[tri.triangles[interior].ravel()] = True
        fixed = ~in_complex
        fixed[bnd] = True
        free = in_complex & ~fixed
        rng = np.random.default_rng([seed, level])
        theta[free] += rng.uniform(-0.2, 0.2, int(free.sum()))
        o = opts or SolveOptions(max_iters=50000, grad_tol=1e-6, monitor_charge=False)
        f, trace = minimize(tri, frames, DiscreteField(theta=theta), opts=o,
                            region=interior, fixed_mask=fixed)
        gamma = xy_energy(tri, realize(f, frames), region=interior)
        rem = gamma - np.pi * np.log(delta / tri.mesh_size)
        rows.append({"eps": tri.mesh_size, "gamma": float(gamma), "remainder": float(rem),
                     "converged": bool(trace.converged)})
    diffs = [abs(rows[k + 1]["remainder"] - rows[k]["remainder"]) for k in range(len(rows) - 1)]
    return rows, diffs
