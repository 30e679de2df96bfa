"""Command-line orchestration: configuration, experiment pipelines, artifacts.

Subcommands: mesh, validate, minimize, defects, scaling, core-energy, renorm.
Every experiment is driven by a strict JSON config (versioned schema, unknown
fields rejected); all randomness funnels through the single seed recorded in
report.json, so reruns reproduce numeric artifacts byte for byte (timing
fields aside).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import energy as energy_mod
from . import field as field_mod
from . import mesh as mesh_mod
from .errors import ConfigError, ShellXYError
from .io import config_hash, write_csv, write_json
from .minimize import SolveOptions, core_energy, minimize, minimize_restarts
from .renormalized import estimate_renormalized
from .surface import make_surface
from .vorticity import detect_defects

SCHEMA_VERSION = 1

_SOLVE_KEYS = {"max_iters", "grad_tol", "step_rule", "eta", "restarts", "monitor_charge"}
_EXPERIMENT_KEYS = {
    "minimize": {"kind"},
    "scaling": {"kind"},
    "core_energy": {"kind", "delta", "center", "boundary", "annulus_resolution"},
    "renormalized": {"kind", "delta_values"},
    "validate": {"kind"},
}
_SURFACE_KEYS = {
    "sphere": {"kind", "radius"},
    "torus": {"kind", "major_radius", "minor_radius"},
    "graph_bump": {"kind", "amplitude", "width"},
}
_MESH_KEYS = {
    "icosphere": {"generator", "levels"},
    "cubed_sphere": {"generator", "levels"},
    "torus_grid": {"generator", "levels", "n_major_ratio"},
    "grid_patch": {"generator", "levels"},
    "uv_sphere": {"generator", "levels"},
}
_INIT_KEYS = {
    "random": {"strategy"},
    "smooth": {"strategy"},
    "hedgehog": {"strategy", "defects"},
}


def _check_keys(d, allowed, required, where):
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown field {key!r} in {where}")
    for key in required:
        if key not in d:
            raise ConfigError(f"missing field {key!r} in {where}")


def validate_config(cfg):
    """Strict schema validation; raises ConfigError naming the offending field."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(cfg, {"schema", "seed", "surface", "mesh", "init", "solve", "experiment", "output"},
                {"schema", "surface", "mesh", "experiment"}, "config")
    if cfg["schema"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {cfg['schema']!r}")

    surf = cfg["surface"]
    if "kind" not in surf:
        raise ConfigError("missing field 'kind' in surface")
    if surf["kind"] not in _SURFACE_KEYS:
        raise ConfigError(f"unknown surface kind {surf['kind']!r}")
    _check_keys(surf, _SURFACE_KEYS[surf["kind"]], _SURFACE_KEYS[surf["kind"]], "surface")

    mesh = cfg["mesh"]
    if "generator" not in mesh:
        raise ConfigError("missing field 'generator' in mesh")
    gen = mesh["generator"]
    if gen not in _MESH_KEYS:
        raise ConfigError(f"unknown mesh generator {gen!r}")
    _check_keys(mesh, _MESH_KEYS[gen], {"generator", "levels"}, "mesh")
    if not isinstance(mesh["levels"], list) or len(mesh["levels"]) == 0:
        raise ConfigError("mesh.levels must be a nonempty list")

    init = cfg.get("init", {"strategy": "random"})
    strat = init.get("strategy")
    if strat not in _INIT_KEYS:
        raise ConfigError(f"unknown init strategy {strat!r}")
    _check_keys(init, _INIT_KEYS[strat], _INIT_KEYS[strat], "init")

    solve = cfg.get("solve", {})
    _check_keys(solve, _SOLVE_KEYS, set(), "solve")

    exp = cfg["experiment"]
    kind = exp.get("kind")
    if kind not in _EXPERIMENT_KEYS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    _check_keys(exp, _EXPERIMENT_KEYS[kind], {"kind"}, "experiment")
    if kind == "core_energy":
        for key in ("delta", "center"):
            if key not in exp:
                raise ConfigError(f"missing field {key!r} in experiment")
    if kind == "renormalized" and "delta_values" not in exp:
        raise ConfigError("missing field 'delta_values' in experiment")
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return validate_config(json.load(fh))


def solve_options(cfg, seed):
    s = cfg.get("solve", {})
    return SolveOptions(
        max_iters=int(s.get("max_iters", 20000)),
        grad_tol=s.get("grad_tol"),
        step_rule=s.get("step_rule", "ncg"),
        eta=float(s.get("eta", 0.1)),
        seed=seed,
        restarts=int(s.get("restarts", 1)),
        monitor_charge=bool(s.get("monitor_charge", True)),
    )


def build_level(cfg, surface, level):
    gen = cfg["mesh"]["generator"]
    if gen == "icosphere":
        return mesh_mod.gen_icosphere(surface, level)
    if gen == "cubed_sphere":
        return mesh_mod.gen_cubed_sphere(surface, level)
    if gen == "torus_grid":
        ratio = int(cfg["mesh"].get("n_major_ratio", 4))
        return mesh_mod.gen_torus_mesh(surface, ratio * level, level)
    if gen == "grid_patch":
        return mesh_mod.gen_grid_mesh(surface, level)
    if gen == "uv_sphere":
        return mesh_mod.gen_uv_sphere(surface, level, level)
    raise ConfigError(f"unknown mesh generator {gen!r}")


def initial_fields(cfg, tri, frames, opts):
    """Per-restart init fields for the configured strategy."""
    strat = cfg.get("init", {"strategy": "random"}).get("strategy", "random")
    if strat == "random":
        return None  # minimize_restarts draws seeded fields itself
    if strat == "smooth":
        f = field_mod.restrict_smooth(tri, frames, field_mod.default_smooth_field(tri.surface))
    else:
        defects = [
            (np.asarray(d["position"], float), int(d["charge"]))
            for d in cfg["init"]["defects"]
        ]
        f = field_mod.hedgehog_ansatz(tri, frames, defects)
    return [f] * opts.restarts


def _emit_minimize_artifacts(outdir, cfg, tri, frames, best, trace, seed, extra=None):
    mesh_mod.save_off(os.path.join(outdir, "mesh.off"), tri)
    field_mod.save_field_csv(os.path.join(outdir, "field.csv"), tri, best)
    ds = detect_defects(tri, frames, best)
    write_json(os.path.join(outdir, "defects.json"), ds.as_list())
    v = field_mod.realize(best, frames)
    total = energy_mod.xy_energy(tri, v)
    K = abs(tri.surface.euler_characteristic)
    core_tris = np.concatenate([d.cluster_triangles for d in ds.defects]) if len(ds) else np.array([], dtype=np.int64)
    bulk = np.setdiff1d(np.arange(tri.n_triangles), core_tris)
    per_region = {
        "defect_cores": energy_mod.xy_energy(tri, v, region=core_tris) if len(core_tris) else 0.0,
        "bulk": energy_mod.xy_energy(tri, v, region=bulk),
    }
    breakdown = energy_mod.EnergyBreakdown(
        total=total,
        per_region=per_region,
        renormalized_remainder=energy_mod.renormalized_remainder(total, tri.mesh_size, K),
        log_eps=float(np.log(tri.mesh_size)),
    )
    write_json(os.path.join(outdir, "energy.json"), breakdown.as_dict())
    write_csv(
        os.path.join(outdir, "trace.csv"),
        ["iteration", "energy", "grad_norm"],
        [(it, e, g) for it, e, g in trace.iterates],
    )
    report = {
        "schema": SCHEMA_VERSION,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "mesh_hash": tri.content_hash(),
        "mesh_size": tri.mesh_size,
        "energy_total": total,
        "defect_charges": ds.charges(),
        "total_charge": ds.total_charge(),
        "converged": trace.converged,
        "flagged_iterations": trace.flagged_iterations,
        "wall_time": trace.wall_time,
    }
    if extra:
        report.update(extra)
    write_json(os.path.join(outdir, "report.json"), report)
    return report


def run_minimize(cfg, outdir, seed, jobs=1, checkpoint_every=None):
    surface = make_surface(cfg["surface"])
    levels = cfg["mesh"]["levels"]
    tri = build_level(cfg, surface, levels[0])
    frames = field_mod.build_frames(tri)
    opts = solve_options(cfg, seed)
    if checkpoint_every:
        opts.checkpoint_every = int(checkpoint_every)
    inits = initial_fields(cfg, tri, frames, opts)

    def checkpoint_fn(it, f):
        field_mod.save_field_csv(os.path.join(outdir, f"checkpoint-{it:06d}.csv"), tri, f)

    if inits is not None and opts.restarts == 1:
        best, trace = minimize(tri, frames, inits[0], opts,
                               checkpoint_fn=checkpoint_fn if checkpoint_every else None)
    else:
        best, trace, _ = minimize_restarts(tri, frames, opts, init_fields=inits)
    return _emit_minimize_artifacts(outdir, cfg, tri, frames, best, trace, seed)


def _refined_level(generator, level):
    return level + 1 if generator == "icosphere" else 2 * level


def run_validate(cfg, outdir, seed):
    surface = make_surface(cfg["surface"])
    gen = cfg["mesh"]["generator"]
    levels = cfg["mesh"]["levels"]
    bundle = []
    for level in levels:
        tri = build_level(cfg, surface, level)
        try:
            finer = build_level(cfg, surface, _refined_level(gen, level))
        except Exception:
            finer = None
        rep = mesh_mod.validate_hypotheses(tri, family_context=finer)
        bundle.append({"level": level, "mesh_size": tri.mesh_size,
                       "mesh_hash": tri.content_hash(), **rep.as_dict()})
    out = {
        "schema": SCHEMA_VERSION,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "levels": bundle,
    }
    write_json(os.path.join(outdir, "hypotheses.json"), out)
    return out


def run_scaling(cfg, outdir, seed, jobs=1):
    surface = make_surface(cfg["surface"])
    levels = cfg["mesh"]["levels"]
    if len(levels) < 3:
        raise ConfigError("scaling study needs at least 3 levels")
    opts_base = solve_options(cfg, seed)
    K = abs(surface.euler_characteristic)

    def run_level(level):
        tri = build_level(cfg, surface, level)
        frames = field_mod.build_frames(tri)
        opts = solve_options(cfg, seed)
        opts.monitor_charge = False
        inits = initial_fields(cfg, tri, frames, opts)
        best, trace, _ = minimize_restarts(tri, frames, opts, init_fields=inits)
        e = trace.final_energy()
        return {
            "level": level,
            "eps": tri.mesh_size,
            "energy": e,
            "remainder": energy_mod.renormalized_remainder(e, tri.mesh_size, K),
            "converged": trace.converged,
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(run_level, levels))
    else:
        rows = [run_level(level) for level in levels]

    fit_rows = [r for r in rows if r["converged"]]
    slope = intercept = float("nan")
    if len(fit_rows) >= 2:
        x = np.array([abs(np.log(r["eps"])) for r in fit_rows])
        y = np.array([r["energy"] for r in fit_rows])
        slope, intercept = np.polyfit(x, y, 1)
    write_csv(
        os.path.join(outdir, "scaling.csv"),
        ["level", "eps", "energy", "remainder", "converged"],
        [(r["level"], r["eps"], r["energy"], r["remainder"], int(r["converged"])) for r in rows],
    )
    report = {
        "schema": SCHEMA_VERSION,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "rows": rows,
        "slope": float(slope),
        "intercept": float(intercept),
        "target_slope": float(np.pi * K),
    }
    write_json(os.path.join(outdir, "report.json"), report)
    return report


def run_core_energy(cfg, outdir, seed):
    surface = make_surface(cfg["surface"])
    exp = cfg["experiment"]
    levels = cfg["mesh"]["levels"]
    meshes = [build_level(cfg, surface, level) for level in levels]
    frames = [field_mod.build_frames(m) for m in meshes]
    center = surface.project(np.asarray(exp["center"], float))
    rows, diffs = core_energy(
        meshes, frames, center, float(exp["delta"]),
        boundary=exp.get("boundary", "annulus"),
        annulus_resolution=int(exp.get("annulus_resolution", 256)),
        seed=seed,
    )
    write_csv(
        os.path.join(outdir, "core_table.csv"),
        ["eps", "gamma", "remainder", "converged"],
        [(r["eps"], r["gamma"], r["remainder"], int(r["converged"])) for r in rows],
    )
    report = {
        "schema": SCHEMA_VERSION,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "rows": rows,
        "remainder_differences": diffs,
        "delta": float(exp["delta"]),
    }
    write_json(os.path.join(outdir, "report.json"), report)
    return report


def run_renormalized(cfg, outdir, seed):
    surface = make_surface(cfg["surface"])
    tri = build_level(cfg, surface, cfg["mesh"]["levels"][0])
    frames = field_mod.build_frames(tri)
    opts = solve_options(cfg, seed)
    inits = initial_fields(cfg, tri, frames, opts)
    best, trace, _ = minimize_restarts(tri, frames, opts, init_fields=inits)
    ds = detect_defects(tri, frames, best)
    est = estimate_renormalized(tri, frames, best, ds, cfg["experiment"]["delta_values"])
    report = _emit_minimize_artifacts(outdir, cfg, tri, frames, best, trace, seed,
                                      extra={"renormalized": est.as_dict()})
    write_json(os.path.join(outdir, "renorm.json"), est.as_dict())
    shell_rows = []
    for i, shells in enumerate(est.dyadic_shells):
        for j, e, x in shells:
            shell_rows.append((i, j, e, x))
    write_csv(os.path.join(outdir, "shells.csv"),
              ["defect", "shell", "energy", "excess"], shell_rows)
    return report


def run_defects(cfg, outdir, seed, field_path, per_triangle=False):
    surface = make_surface(cfg["surface"])
    tri = build_level(cfg, surface, cfg["mesh"]["levels"][0])
    frames = field_mod.build_frames(tri)
    f = field_mod.load_field_csv(field_path, tri)
    ds = detect_defects(tri, frames, f)
    write_json(os.path.join(outdir, "defects.json"), ds.as_list())
    if per_triangle:
        from .vorticity import triangle_windings, mu_hat as mu_hat_fn

        w, res = triangle_windings(tri, frames, f)
        mh = mu_hat_fn(tri, field_mod.realize(f, frames))
        write_csv(os.path.join(outdir, "vorticity.csv"),
                  ["triangle", "mu_hat", "winding", "residual"],
                  [(t, float(mh[t]), int(w[t]), float(res[t])) for t in range(tri.n_triangles)])
    report = {
        "schema": SCHEMA_VERSION,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "mesh_hash": tri.content_hash(),
        "defect_charges": ds.charges(),
        "total_charge": ds.total_charge(),
    }
    write_json(os.path.join(outdir, "report.json"), report)
    return report


def run_mesh(cfg, out_path, report_path):
    surface = make_surface(cfg["surface"])
    level = cfg["mesh"]["levels"][0]
    tri = build_level(cfg, surface, level)
    mesh_mod.save_off(out_path, tri)
    if report_path:
        try:
            finer = build_level(cfg, surface, _refined_level(cfg["mesh"]["generator"], level))
        except Exception:
            finer = None
        rep = mesh_mod.validate_hypotheses(tri, family_context=finer)
        write_json(report_path, {
            "schema": SCHEMA_VERSION,
            "config_hash": config_hash(cfg),
            "mesh_hash": tri.content_hash(),
            "mesh_size": tri.mesh_size,
            **rep.as_dict(),
        })
    return tri


def main(argv=None):
    parser = argparse.ArgumentParser(prog="shellxy",
                                     description="Discrete XY model on triangulated surfaces")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_dir=True):
        p.add_argument("--config", required=True, help="JSON experiment config")
        if out_dir:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel level jobs")
        p.add_argument("--checkpoint-every", type=int, default=None)

    p_mesh = sub.add_parser("mesh", help="generate a mesh and hypothesis report")
    p_mesh.add_argument("--config", required=True)
    p_mesh.add_argument("--out", required=True, help="output OFF file")
    p_mesh.add_argument("--report", default=None, help="hypothesis report JSON")

    helps = {
        "validate": "hypothesis reports (H1)-(H4) across levels",
        "minimize": "minimize the XY energy and emit field/defect artifacts",
        "scaling": "minimum-energy scaling study across refinement levels",
        "core-energy": "Dirichlet core-energy refinement study",
        "renorm": "renormalized-energy estimate from a converged field",
    }
    for name in ("validate", "minimize", "scaling", "core-energy", "renorm"):
        add_common(sub.add_parser(name, help=helps[name]))
    p_def = sub.add_parser("defects", help="detect defects of a stored field")
    add_common(p_def)
    p_def.add_argument("--field", required=True, help="field CSV (hash-checked)")
    p_def.add_argument("--per-triangle", action="store_true",
                       help="also write vorticity.csv with per-triangle arrays")

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "mesh":
            run_mesh(cfg, args.out, args.report)
            return 0
        os.makedirs(args.out, exist_ok=True)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if args.command == "validate":
            run_validate(cfg, args.out, seed)
        elif args.command == "minimize":
            run_minimize(cfg, args.out, seed, jobs=args.jobs,
                         checkpoint_every=args.checkpoint_every)
        elif args.command == "scaling":
            run_scaling(cfg, args.out, seed, jobs=args.jobs)
        elif args.command == "core-energy":
            run_core_energy(cfg, args.out, seed)
        elif args.command == "renorm":
            run_renormalized(cfg, args.out, seed)
        elif args.command == "defects":
            run_defects(cfg, args.out, seed, args.field,
                        per_triangle=args.per_triangle)
        return 0
    except (ShellXYError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
