"""Command-line front end.

Subcommands: solve, converge, check, trajectories. Artifacts land under
--out in fields/, reports/ and trajectories/:

    fields/<problem>_t<time>.csv          x1,...,xd,value per vertex
    reports/solve_<problem>.json          run metadata and configuration
    reports/converge_<problem>_cfl<c>.csv dx,dt,nodes,err_linf,order,seconds
    reports/converge_<problem>_cfl<c>.json
    reports/check_<problem>.json
    trajectories/P<i>_seed<s>.csv         t,x1,x2 rows and a status line
    trajectories/summary.json

Exit codes: 0 ok, 1 failed check, 2 bad configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import check_consistency_decay, data_bounds, property_suite, refine_study
from .geometry import DIAGONALS, MeshError, build_rect_grid, load_mesh
from .interpolation import write_field_csv
from .problems import NAMES, builtin
from .solver import SolverError, solve
from .trajectories import batch_summary, simulate

log = logging.getLogger("slhjb")

WORKERS_ENV = "HJB_SL_WORKERS"
DEFAULT_DX = {"test1": 0.01, "test2": 0.125, "test3": 0.02, "test4": math.sqrt(2.0) / 50}
CHECK_DX = {"test1": 0.05, "test2": 0.25, "test3": 0.1, "test4": 0.1}
CONSISTENCY_DX0 = {"test1": 0.025, "test2": 0.5}


class ConfigError(ValueError):
    pass


# -- argument parsing ------------------------------------------------------------

def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _points(text):
    try:
        pts = [[float(c) for c in p.split(",")] for p in text.split(";") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y;x,y;...', got {text!r}")
    return pts


def _add_common(p, problem_required=True, problem_default=None):
    g = p.add_argument_group("problem")
    g.add_argument("--problem", choices=NAMES, required=problem_required, default=problem_default)
    g.add_argument("--nu", type=float, default=None, help="test1 viscosity (default 0)")
    g.add_argument("--controls", type=int, default=None, help="box controls per dimension (21)")
    g.add_argument("--rings", type=int, default=None, help="disk control rings (8)")
    g.add_argument("--angles", type=int, default=None, help="disk control angles per ring (24)")
    g.add_argument("--sigma-off", action="store_true", help="test4 without diffusion")
    m = p.add_argument_group("mesh and time step")
    m.add_argument("--dx", type=float, default=None)
    m.add_argument("--nx", type=int, default=None)
    m.add_argument("--ny", type=int, default=None)
    m.add_argument("--mesh", type=Path, default=None, help="mesh file to load")
    m.add_argument("--diagonal", choices=DIAGONALS, default="right")
    step = m.add_mutually_exclusive_group()
    step.add_argument("--dt", type=float, default=None)
    step.add_argument("--cfl", type=float, default=None, help="dt = cfl * dx (default 1)")
    o = p.add_argument_group("output")
    o.add_argument("--out", type=Path, default=Path("out"))
    o.add_argument("--workers", type=int, default=None,
                   help=f"threads for the sweep (default ${WORKERS_ENV} or all)")
    o.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="slhjb", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem and dump fields")
    _add_common(p)
    p.add_argument("--times", type=_float_list, default=[0.0], help="report times (default 0)")
    p.add_argument("--refine", action="store_true", help="local control refinement (box sets)")

    p = sub.add_parser("converge", help="refinement study against the exact solution")
    _add_common(p)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--dx0", type=float, default=None)

    p = sub.add_parser("check", help="property suite with pass/fail per property")
    _add_common(p, problem_required=False, problem_default="test1")
    p.add_argument("--pairs", type=int, default=1000, help="monotonicity perturbations")
    p.add_argument("--dx0", type=float, default=None, help="first consistency level")
    p.add_argument("--halvings", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("trajectories", help="optimal paths for the two-door room")
    _add_common(p, problem_required=False, problem_default="test4")
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--starts", type=_points, default=None, help="'x,y;x,y' (default P1..P6)")
    p.add_argument("--substep", type=float, default=None, help="default dt / 2")
    p.add_argument("--feedback", choices=("gradient", "argmin"), default="gradient")
    return parser


# -- configuration -----------------------------------------------------------------

def _workers(args):
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}")
    return None


def _spec(args):
    params = {}
    if args.nu is not None:
        if args.problem != "test1":
            raise ConfigError("--nu only applies to test1")
        params["nu"] = args.nu
    if args.controls is not None:
        params["controls"] = args.controls
    for key in ("rings", "angles"):
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    if args.sigma_off:
        if args.problem != "test4":
            raise ConfigError("--sigma-off only applies to test4")
        params["sigma"] = False
    unknown = {"test1": {"rings", "angles"}, "test2": {"controls"},
               "test3": {"rings", "angles"}, "test4": {"controls"}}[args.problem]
    bad = unknown & set(params)
    if bad:
        raise ConfigError(f"{args.problem} does not take --{', --'.join(sorted(bad))}")
    return builtin(args.problem, params)


def _mesh(args, spec, default_dx):
    """(mesh, dx used for the CFL rule, description)."""
    dom = spec.problem.domain
    given = sum(v is not None for v in (args.dx, args.nx, args.mesh))
    if given > 1:
        raise ConfigError("give only one of --dx, --nx/--ny, --mesh")
    if args.ny is not None and args.nx is None:
        raise ConfigError("--ny needs --nx")
    if args.mesh is not None:
        mesh = load_mesh(args.mesh, domain=dom)
        return mesh, mesh.dx, {"mesh_file": str(args.mesh)}
    if args.nx is not None:
        if dom.kind not in ("interval", "rectangle"):
            raise ConfigError("--nx/--ny need a rectangular domain")
        lo, hi = dom.bounding_box()
        if dom.dim == 1:
            mesh = build_rect_grid((lo[0], hi[0]), args.nx)
        else:
            ny = args.ny if args.ny is not None else args.nx
            mesh = build_rect_grid(((lo[0], hi[0]), (lo[1], hi[1])), args.nx, ny, args.diagonal)
        dx = float(np.max((hi - lo) / np.array([args.nx, args.ny or args.nx][:dom.dim])))
        if spec.dx_convention != "spacing":
            dx = mesh.dx
        return mesh, dx, {"nx": args.nx, "ny": args.ny}
    dx = args.dx if args.dx is not None else default_dx
    if not dx > 0:
        raise ConfigError("--dx must be positive")
    if args.diagonal != "right":
        if dom.kind != "rectangle":
            raise ConfigError("--diagonal needs a rectangular domain")
        mesh = _rect_with_diagonal(spec, dx, args.diagonal)
    else:
        mesh = spec.make_mesh(dx)
    return mesh, dx, {"dx": dx}


def _rect_with_diagonal(spec, dx, diagonal):
    base = spec.make_mesh(dx)
    V = base.vertices
    nx = np.unique(V[:, 0]).size - 1
    ny = np.unique(V[:, 1]).size - 1
    lo, hi = spec.problem.domain.bounding_box()
    return build_rect_grid(((lo[0], hi[0]), (lo[1], hi[1])), nx, ny, diagonal)


def _time_step(args, dx):
    if args.dt is not None:
        if not args.dt > 0:
            raise ConfigError("--dt must be positive")
        return args.dt, None
    cfl = 1.0 if args.cfl is None else args.cfl
    if not cfl > 0:
        raise ConfigError("--cfl must be positive")
    return cfl * dx, cfl


def _out_dir(args, sub):
    d = args.out / sub
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {d}: {exc}")
    if not os.access(d, os.W_OK):
        raise ConfigError(f"output directory {d} is not writable")
    return d


def _config_record(args, **extra):
    rec = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
           if k not in ("func",)}
    rec["workers"] = _workers(args)
    rec.update(extra)
    return rec


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _time_tag(t):
    return f"{t:.6g}"


# -- subcommands -------------------------------------------------------------------

def cmd_solve(args):
    spec = _spec(args)
    mesh, dx, mesh_desc = _mesh(args, spec, DEFAULT_DX[spec.name])
    dt, cfl = _time_step(args, dx)
    T = spec.problem.horizon
    for t in args.times:
        if not (0.0 <= t <= T):
            raise ConfigError(f"report time {t} outside [0, {T}]")
    fields = _out_dir(args, "fields")
    reports = _out_dir(args, "reports")
    sol = solve(spec.problem, mesh, dt, keep=args.times, refine=args.refine,
                workers=_workers(args))
    written = []
    for t in args.times:
        k = sol.level_index(t)
        path = fields / f"{spec.name}_t{_time_tag(t)}.csv"
        write_field_csv(sol.level(k), path)
        written.append({"time": t, "level": k, "file": str(path.relative_to(args.out))})
    psi_max, f_max = data_bounds(spec.problem, mesh, sol.dt)
    vmax = sol.info["max_abs_value"]
    summary = {
        "problem": spec.name, "params": spec.params, "dx_convention": spec.dx_convention,
        "dx": dx, "mesh_dx": mesh.dx, "mesh_delta": mesh.delta, "mesh": mesh_desc,
        "dt": sol.dt, "cfl": cfl, "n_steps": sol.n_steps, "nodes": mesh.n_vertices,
        "controls": spec.problem.controls.descriptor, "max_abs_value": vmax,
        "stability_bound": psi_max + spec.problem.horizon * f_max, "fields": written, "solver": sol.info,
        "config": _config_record(args, cfl=cfl, dt=sol.dt, dx=dx),
    }
    _write_json(reports / f"solve_{spec.name}.json", summary)
    print(f"{spec.name}: N={sol.n_steps} dt={sol.dt:.6g} nodes={mesh.n_vertices} "
          f"max|V|={vmax:.6g} ({sol.info['seconds']:.1f} s)")
    return 0


def cmd_converge(args):
    spec = _spec(args)
    if spec.exact is None:
        raise ConfigError(f"{spec.name} with these parameters has no exact solution")
    if args.dt is not None:
        raise ConfigError("converge takes --cfl, not --dt")
    if args.mesh is not None or args.nx is not None:
        raise ConfigError("converge builds its own meshes; use --dx0")
    if args.levels < 1:
        raise ConfigError("--levels must be at least 1")
    cfl = 1.0 if args.cfl is None else args.cfl
    if not cfl > 0:
        raise ConfigError("--cfl must be positive")
    dx0 = args.dx0 if args.dx0 is not None else (args.dx or DEFAULT_DX[spec.name] * 4)
    factory = (lambda dx: _rect_with_diagonal(spec, dx, args.diagonal)) \
        if args.diagonal != "right" else None
    reports = _out_dir(args, "reports")
    rep = refine_study(spec, dx0, args.levels, cfl, mesh_factory=factory, workers=_workers(args))
    rep.extra["config"] = _config_record(args, cfl=cfl, dx0=dx0)
    stem = f"converge_{spec.name}_cfl{cfl:g}"
    rep.write_csv(reports / f"{stem}.csv")
    _write_json(reports / f"{stem}.json", rep.to_dict())
    print(rep.table())
    return 0


def cmd_check(args):
    if args.problem == "test1" and args.nu is None:
        args.nu = 0.1
    spec = _spec(args)
    dx = args.dx if args.dx is not None else CHECK_DX[spec.name]
    if args.mesh is not None or args.nx is not None:
        raise ConfigError("check builds its own meshes; use --dx")
    dt, cfl = _time_step(args, dx)
    dx0 = args.dx0 if args.dx0 is not None else CONSISTENCY_DX0.get(spec.name)
    reports = _out_dir(args, "reports")
    results = property_suite(spec, dx, dt, n_pairs=args.pairs, gamma_fault=args.inject_fault)
    if spec.test_field is not None and dx0 is not None:
        dec, neg, _, _ = check_consistency_decay(spec, dx0, halvings=args.halvings)
        results += [dec, neg]
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    _write_json(reports / f"check_{spec.name}.json", {
        "problem": spec.name, "params": spec.params, "dx": dx, "dt": dt, "cfl": cfl,
        "consistency_dx0": dx0, "passed": ok,
        "results": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
        "config": _config_record(args, dx=dx, dt=dt, dx0=dx0)})
    return 0 if ok else 1


def cmd_trajectories(args):
    if args.problem != "test4":
        raise ConfigError("trajectories are defined for test4 only")
    spec = _spec(args)
    mesh, dx, mesh_desc = _mesh(args, spec, DEFAULT_DX["test4"])
    dt, cfl = _time_step(args, dx)
    starts = np.asarray(args.starts if args.starts is not None else spec.starts, dtype=float)
    if starts.ndim != 2 or starts.shape[1] != 2:
        raise ConfigError("--starts needs points with two coordinates")
    if not np.all(spec.problem.domain.inside(starts)):
        raise ConfigError("every start point must lie inside the room")
    if args.substep is not None and not args.substep > 0:
        raise ConfigError("--substep must be positive")
    out = _out_dir(args, "trajectories")
    sol = solve(spec.problem, mesh, dt, keep="all", store_controls=args.feedback == "argmin",
                workers=_workers(args))
    records = []
    for i, x0 in enumerate(starts, start=1):
        for seed in args.seeds:
            rec = simulate(sol, spec.problem, x0, seed, substep=args.substep,
                           feedback=args.feedback, labeler=spec.labeler)
            rec.write_csv(out / f"P{i}_seed{seed}.csv")
            records.append(rec)
            where = rec.label if rec.status == "exited" else "horizon"
            print(f"P{i} seed={seed}: {rec.status} {where} t={rec.times[-1]:.4f} "
                  f"cost={rec.total_cost:.4f}")
    summary = batch_summary(records)
    summary.update(dt=sol.dt, dx=dx, mesh=mesh_desc, cfl=cfl, solve_seconds=sol.info["seconds"],
                   config=_config_record(args, dx=dx, dt=sol.dt, cfl=cfl))
    _write_json(out / "summary.json", summary)
    return 0


COMMANDS = {"solve": cmd_solve, "converge": cmd_converge, "check": cmd_check,
            "trajectories": cmd_trajectories}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SolverError as exc:
        print(f"slhjb {args.command}: solver error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, MeshError, ValueError, TypeError, OSError) as exc:
        print(f"slhjb {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
