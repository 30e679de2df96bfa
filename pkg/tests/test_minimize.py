"""Minimizer, Dirichlet solves, annulus and core-energy tests."""

import numpy as np
import pytest

from shellxy.energy import xy_energy, xy_gradient
from shellxy.errors import BallTooSmall
from shellxy.field import (
    DiscreteField,
    build_frames,
    default_smooth_field,
    hedgehog_ansatz,
    realize,
    restrict_smooth,
)
from shellxy.mesh import gen_cubed_sphere, gen_grid_mesh, gen_icosphere, gen_torus_mesh
from shellxy.minimize import (
    SolveOptions,
    annulus_minimizer,
    core_energy,
    minimize,
    minimize_dirichlet,
    minimize_restarts,
    random_field,
)
from shellxy.surface import GraphBump, Sphere, Torus
from shellxy.vorticity import detect_defects, triangle_windings

SPHERE = Sphere(1.0)
TORUS = Torus(2.0, 0.5)
FLAT = GraphBump(0.0, 0.15)


def test_solve_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(max_iters=0)
    with pytest.raises(ValueError):
        SolveOptions(grad_tol=-1.0)
    with pytest.raises(ValueError):
        SolveOptions(step_rule="newton")


def test_minimize_torus_defect_free_descent():
    m = gen_torus_mesh(TORUS, 32, 8)
    fr = build_frames(m)
    init = restrict_smooth(m, fr, default_smooth_field(TORUS))
    e0 = xy_energy(m, realize(init, fr))
    f, tr = minimize(m, fr, init, SolveOptions(max_iters=5000, grad_tol=1e-8))
    assert tr.converged
    assert tr.final_energy() <= e0 + 1e-12
    w, _ = triangle_windings(m, fr, f)
    assert np.all(w == 0)
    # trace is monotone
    energies = [e for _, e, _ in tr.iterates]
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_minimize_sphere_from_ansatz_two_defects():
    m = gen_icosphere(SPHERE, 4)
    fr = build_frames(m)
    init = hedgehog_ansatz(m, fr, [(np.array([0, 0, 1.0]), 1), (np.array([0, 0, -1.0]), 1)])
    f, tr = minimize(m, fr, init, SolveOptions(max_iters=10000, grad_tol=1e-6))
    assert tr.converged
    ds = detect_defects(m, fr, f)
    assert ds.total_charge() == 2
    assert all(abs(c) == 1 for c in ds.charges())


def test_minimize_critical_point_gradient(ico=None):
    m = gen_icosphere(SPHERE, 3)
    fr = build_frames(m)
    rng = np.random.default_rng(3)
    f, tr = minimize(m, fr, random_field(m, rng), SolveOptions(max_iters=20000, grad_tol=1e-7))
    assert tr.converged
    g = xy_gradient(m, fr, f)
    assert np.abs(g).max() <= 1e-7
    # independently recomputed gradient agrees with the reported one
    assert np.abs(g).max() == pytest.approx(tr.final_grad_norm(), abs=1e-12)


def test_minimize_determinism():
    m = gen_icosphere(SPHERE, 3)
    fr = build_frames(m)
    opts = SolveOptions(max_iters=300, grad_tol=1e-12, seed=5)
    rng1 = np.random.default_rng([5, 0])
    rng2 = np.random.default_rng([5, 0])
    f1, t1 = minimize(m, fr, random_field(m, rng1), opts)
    f2, t2 = minimize(m, fr, random_field(m, rng2), opts)
    np.testing.assert_array_equal(f1.theta, f2.theta)
    assert t1.iterates == t2.iterates


def test_minimize_restarts_keeps_best():
    m = gen_icosphere(SPHERE, 2)
    fr = build_frames(m)
    opts = SolveOptions(max_iters=4000, grad_tol=1e-6, seed=7, restarts=3)
    best, trace, runs = minimize_restarts(m, fr, opts)
    energies = [t.final_energy() for _, t in runs]
    assert trace.final_energy() == min(energies)


@pytest.mark.parametrize("rule", ["bb", "fixed"])
def test_alternate_step_rules_descend(rule):
    m = gen_torus_mesh(TORUS, 16, 4)
    fr = build_frames(m)
    rng = np.random.default_rng(0)
    init = random_field(m, rng)
    e0 = xy_energy(m, realize(init, fr))
    f, tr = minimize(m, fr, init, SolveOptions(max_iters=400, grad_tol=1e-4, step_rule=rule, eta=0.2))
    assert tr.final_energy() < e0


def test_dirichlet_all_fixed_identity():
    m = gen_grid_mesh(FLAT, 12)
    fr = build_frames(m)
    rng = np.random.default_rng(1)
    init = random_field(m, rng)
    f, tr = minimize_dirichlet(m, fr, init, np.arange(m.n_vertices), SolveOptions(max_iters=10))
    np.testing.assert_array_equal(f.theta, init.theta)
    assert tr.converged and tr.iterates[0][0] == 0


def test_dirichlet_constant_boundary_flat_disc():
    m = gen_grid_mesh(FLAT, 40)
    fr = build_frames(m)
    from shellxy.mesh import discrete_ball

    interior, bnd = discrete_ball(m, np.array([1.2, 1.2, 0.0]), 0.5)
    theta = np.zeros(m.n_vertices)
    theta[bnd] = 0.7
    in_complex = np.zeros(m.n_vertices, bool)
    in_complex[m.triangles[interior].ravel()] = True
    free = in_complex.copy()
    free[bnd] = False
    theta[free] = np.random.default_rng(2).uniform(-1, 1, free.sum())
    fixed = np.flatnonzero(~free)
    f, tr = minimize_dirichlet(m, fr, DiscreteField(theta=theta), fixed, SolveOptions(max_iters=5000, grad_tol=1e-10), region=interior)
    assert tr.converged
    np.testing.assert_allclose(f.theta[in_complex], 0.7, atol=1e-7)
    # fixed entries bit-exact
    np.testing.assert_array_equal(f.theta[bnd], theta[bnd])


def test_dirichlet_hedgehog_boundary_winding():
    m = gen_grid_mesh(FLAT, 60)
    fr = build_frames(m)
    from shellxy.mesh import discrete_ball
    from shellxy.minimize import hedgehog_boundary_angles

    center = np.array([1.2, 1.2, 0.0])
    interior, bnd = discrete_ball(m, center, 0.5)
    theta = hedgehog_boundary_angles(m, fr, center, np.arange(m.n_vertices))
    theta += np.random.default_rng(3).uniform(-0.1, 0.1, m.n_vertices)
    in_complex = np.zeros(m.n_vertices, bool)
    in_complex[m.triangles[interior].ravel()] = True
    fixed_mask = ~in_complex
    fixed_mask[bnd] = True
    theta[bnd] = hedgehog_boundary_angles(m, fr, center, bnd)
    f, tr = minimize(m, fr, DiscreteField(theta=theta), SolveOptions(max_iters=20000, grad_tol=1e-6, monitor_charge=False), region=interior, fixed_mask=fixed_mask)
    w, _ = triangle_windings(m, fr, f)
    assert w[interior].sum() == 1


def test_annulus_flat_pi_log2():
    ann, eta = annulus_minimizer(FLAT, np.array([1.2, 1.2, 0.0]), 0.5, resolution=256)
    assert abs(eta - np.pi * np.log(2)) / (np.pi * np.log(2)) < 0.01


def test_annulus_sphere_small_delta():
    ann, eta = annulus_minimizer(SPHERE, np.array([0, 0, 1.0]), 0.05, resolution=128)
    assert abs(eta - np.pi * np.log(2)) / (np.pi * np.log(2)) < 0.03
    # refinement consistency
    _, eta2 = annulus_minimizer(SPHERE, np.array([0, 0, 1.0]), 0.05, resolution=256)
    assert abs(eta - eta2) / eta2 < 1e-3


def test_annulus_guards():
    with pytest.raises(ValueError):
        annulus_minimizer(SPHERE, np.array([0, 0, 1.0]), 4.0, resolution=128)
    with pytest.raises(ValueError):
        annulus_minimizer(SPHERE, np.array([0, 0, 1.0]), 0.05, resolution=32)


@pytest.mark.slow
def test_core_energy_planar_cauchy():
    meshes = [gen_grid_mesh(FLAT, n) for n in (60, 120, 240)]
    frames = [build_frames(m) for m in meshes]
    rows, diffs = core_energy(meshes, frames, np.array([1.2, 1.2, 0.0]), 0.25)
    assert all(r["converged"] for r in rows)
    assert diffs[0] > diffs[1]


def test_core_energy_delta_guard():
    meshes = [gen_grid_mesh(FLAT, 30)]
    frames = [build_frames(m) for m in meshes]
    with pytest.raises(BallTooSmall):
        core_energy(meshes, frames, np.array([1.2, 1.2, 0.0]), 0.1)


def test_charge_monitor_reports_stable_total():
    m = gen_icosphere(SPHERE, 3)
    fr = build_frames(m)
    init = hedgehog_ansatz(m, fr, [(np.array([0, 0, 1.0]), 1), (np.array([0, 0, -1.0]), 1)])
    f, tr = minimize(m, fr, init, SolveOptions(max_iters=2000, grad_tol=1e-6, monitor_charge=True))
    assert tr.flagged_iterations == []


@pytest.mark.slow
def test_core_energy_delta_stability_observed():
    """Halving delta at the finest level: the remainder drifts by O(eps/delta).

    Observed drift 0.093 exceeds the last Cauchy difference (0.049) at these
    scales, so only the magnitude is pinned, not the inequality suggested by
    the double-limit heuristics.
    """
    meshes = [gen_cubed_sphere(SPHERE, n) for n in (48, 96)]
    frames = [build_frames(m) for m in meshes]
    rows, _ = core_energy(meshes, frames, np.array([0, 0, 1.0]), 0.5)
    rows_half, _ = core_energy(meshes[-1:], frames[-1:], np.array([0, 0, 1.0]), 0.25)
    drift = abs(rows_half[0]["remainder"] - rows[-1]["remainder"])
    assert drift == pytest.approx(0.0934, abs=0.02)
    assert drift < 0.15
