"""Command-line front end.

One binary, subcommand style; a JSON config file supplies defaults and
individual --set key=value flags win over it.  Every command prints its
primary payload (JSON or CSV) to stdout; profile CSVs and figures land
in the output directory (flag, config, CKN_OUTPUT_DIR, or cwd).

Exit codes: 0 ok, 2 parameter validation, 3 numeric failure,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path

from . import extremals, figures, jsonio, solver
from .errors import (
    CknError,
    NoConvergence,
    NumericError,
    PostconditionViolated,
    ValidationError,
)
from .fiber import analyze_fiber
from .functionals import energy
from .grid import RadialFunction, make_grid
from .params import derive_exponents, thresholds, validate

DEFAULT_PARAMS = {"N": 3, "a": 0.25, "b": 0.5, "q": 2.5, "beta": 0.1, "rho": 1.0}
PARAM_KEYS = tuple(DEFAULT_PARAMS)
GRID_KEYS = ("s_min", "s_max", "n")


def _load_config(path):
    if path is None:
        return {}
    import json
    with open(path) as fh:
        return json.load(fh)


def _apply_sets(cfg, pairs):
    for pair in pairs or []:
        if "=" not in pair:
            raise ValidationError(f"--set expects key=value, got {pair!r}")
        key, val = pair.split("=", 1)
        try:
            parsed = float(val)
            if parsed == int(parsed) and "." not in val and "e" not in val.lower():
                parsed = int(parsed)
        except ValueError:
            parsed = val
        if "." in key:
            section, sub = key.split(".", 1)
            cfg.setdefault(section, {})[sub] = parsed
        elif key in PARAM_KEYS:
            cfg.setdefault("params", {})[key] = parsed
        else:
            cfg[key] = parsed
    return cfg


def _params_from(cfg):
    raw = dict(DEFAULT_PARAMS)
    raw.update(cfg.get("params", {}))
    return validate(**raw)


def _grid_from(cfg, N, wide=False):
    spec = cfg.get("grid")
    if spec:
        return make_grid(spec.get("s_min", math.log(1e-6)),
                         spec.get("s_max", math.log(1e3)),
                         spec.get("n", 2048), N)
    if wide:
        return extremals.wide_grid(N)
    return make_grid(N=N)


def _solver_cfg_from(cfg, branch):
    sc = solver.SolverConfig(branch=branch)
    for k, v in cfg.get("solver", {}).items():
        if hasattr(sc, k):
            setattr(sc, k, v)
    return sc


def _outdir(args, cfg):
    out = args.output_dir or cfg.get("output_dir") or os.environ.get("CKN_OUTPUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _csv_text(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _csv_cell(row.get(k, "")) for k in columns})
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format(v, ".17g")
    return v


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_exponents(args, cfg):
    p = _params_from(cfg)
    e = derive_exponents(p)
    if args.quiet:
        return jsonio.dumps(e.as_dict()), []
    return jsonio.dumps({"params": p.as_dict(), "exponents": e.as_dict()}), []


def cmd_constants(args, cfg):
    p = _params_from(cfg)
    g = _grid_from(cfg, p.N, wide=True)
    consts = extremals.compute_constants(p, g, seed=args.seed,
                                         include_descent=args.descent)
    eps_list = [0.5, 1.0, 2.0]
    if args.eps_list:
        eps_list = [float(x) for x in args.eps_list.split(",")]
    quotients = {format(e, ".17g"): extremals.best_constant_S(p, g, eps=e)
                 for e in eps_list}
    payload = consts.as_dict()
    payload["S_eps_invariance"] = quotients
    if args.quiet:
        return jsonio.dumps({"S_ab": consts.S_ab, "C_ab": consts.C_ab}), []
    return jsonio.dumps(payload), []


def cmd_fiber(args, cfg):
    p = _params_from(cfg)
    u = RadialFunction.from_csv(args.profile)
    report = analyze_fiber(u, p, threshold_est=args.threshold)
    return jsonio.dumps(report.as_dict()), []


def cmd_solve(args, cfg):
    p = _params_from(cfg)
    g = _grid_from(cfg, p.N)
    sc = _solver_cfg_from(cfg, args.branch)
    if args.branch == "minus" and "seed_profile" not in cfg.get("solver", {}):
        sc.seed_profile = "bubble"
    constants = None
    if not args.no_constants:
        constants = extremals.compute_constants(p, seed=args.seed)
    outdir = _outdir(args, cfg)
    side = []
    if args.branch == "plus":
        rep = solver.minimize_plus(p, sc, g, constants=constants)
        level_dict = None
    else:
        rep, level = solver.minimize_minus(p, sc, g, constants=constants)
        level_dict = level.as_dict()
    prof_path = outdir / f"solution_{args.branch}.csv"
    rep.profile.to_csv(prof_path)
    side.append(prof_path)
    payload = {"params": p.as_dict(), "solver": sc.as_dict(),
               "report": rep.as_dict(profile_path=prof_path)}
    if level_dict is not None:
        payload["level"] = level_dict
    if not args.no_figures:
        fig_path = outdir / f"solution_{args.branch}.png"
        figures.render_profile(rep.profile.grid.r, rep.profile.values, fig_path,
                               title=f"{args.branch} branch, E={rep.energy:.5f}")
        side.append(fig_path)
        payload["figure"] = str(fig_path)
    text = jsonio.dumps(payload)
    if level_dict is not None:
        _raise_on_failed_bounds(level_dict["bound_checks"], text)
    return text, side


def _raise_on_failed_bounds(bound_checks, payload_text):
    failed = [c["name"] for c in bound_checks if not c["holds"]]
    if failed:
        raise PostconditionViolated(
            f"bound check(s) failed: {', '.join(failed)}", payload=payload_text)


def cmd_asymptotics(args, cfg):
    p = _params_from(cfg)
    g = _grid_from(cfg, p.N, wide=True)
    quantity = extremals.Quantity(args.quantity)
    eps_list = extremals.DEFAULT_EPS_SWEEP
    if args.eps_list:
        eps_list = [float(x) for x in args.eps_list.split(",")]
    fit = extremals.measure_asymptotics(quantity, p, eps_list, g,
                                        strict=not args.allow_poor_fit,
                                        boundary=args.boundary)
    payload = fit.as_dict()
    side = []
    if not args.no_figures:
        outdir = _outdir(args, cfg)
        fig_path = outdir / f"asymptotics_{quantity.value}.png"
        figures.render_asymptotics(payload, fig_path)
        side.append(fig_path)
        payload["figure"] = str(fig_path)
    return jsonio.dumps(payload), side


def cmd_region_map(args, cfg):
    rows = extremals.region_map(args.N, resolution=args.resolution)
    text = _csv_text(rows, ("a", "b", "case", "q_c", "L3_discriminant"))
    side = []
    outdir = _outdir(args, cfg)
    csv_path = outdir / f"region_map_N{args.N}.csv"
    csv_path.write_text(text)
    side.append(csv_path)
    if not args.no_figures:
        fig_path = outdir / f"region_map_N{args.N}.png"
        figures.render_region_map(rows, fig_path, args.N)
        side.append(fig_path)
    return text, side


def cmd_gap_check(args, cfg):
    p = _params_from(cfg)
    u = RadialFunction.from_csv(args.ground)
    g = u.grid if "grid" not in cfg else _grid_from(cfg, p.N)
    S_ab = extremals.best_constant_S(p, extremals.wide_grid(p.N))
    from .functionals import SolutionReport, el_residual, lambda_identity, mass_sq, pohozaev
    lam, lam_p = lambda_identity(u, p)
    ground = SolutionReport(profile=u, lam=lam, energy=energy(u, p),
                            mass_sq=mass_sq(u, p.a), pohozaev=pohozaev(u, p),
                            el_residual=el_residual(u, lam, p), iterations=0,
                            converged=True, branch="plus")
    report = solver.energy_gap_check(p, ground, args.eps, grid=g, S_ab=S_ab,
                                     m_level=args.m_level)
    payload = {"params": p.as_dict(), "S_ab": S_ab, "m_level": ground.energy,
               "gap": report.as_dict()}
    text = jsonio.dumps(payload)
    _raise_on_failed_bounds(payload["gap"]["bound_checks"], text)
    return text, []


def cmd_sweep(args, cfg):
    p = _params_from(cfg)
    g = _grid_from(cfg, p.N)
    sc = _solver_cfg_from(cfg, "plus")
    values = [float(x) for x in args.values.split(",")] if args.values else []
    rows = solver.sweep(p, args.vary, values, args.task, sc, g, threads=args.threads)
    text = _csv_text(rows, solver.SWEEP_COLUMNS)
    side = []
    outdir = _outdir(args, cfg)
    csv_path = outdir / f"sweep_{args.vary}_{args.task}.csv"
    csv_path.write_text(text)
    side.append(csv_path)
    if not args.no_figures and rows:
        fig_path = outdir / f"sweep_{args.vary}_{args.task}.png"
        figures.render_sweep(rows, args.vary, fig_path)
        side.append(fig_path)
    return text, side


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry (params keys, grid.*, solver.*)")
    common.add_argument("--seed", type=int, default=0, help="deterministic multistart seed")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--output-dir", default=None)
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--no-figures", action="store_true")

    ap = argparse.ArgumentParser(prog="cknlab",
                                 description="weighted critical-exponent variational laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("exponents", parents=[common],
                   help="derived exponents for the configured parameters")

    c = sub.add_parser("constants", parents=[common],
                       help="numeric best constants and thresholds")
    c.add_argument("--eps-list", help="comma list for the S eps-invariance diagnostic")
    c.add_argument("--descent", action="store_true",
                   help="include the independent Rayleigh-descent estimate of S")

    f = sub.add_parser("fiber", parents=[common],
                       help="fiber-map report for a stored profile")
    f.add_argument("--profile", required=True, help="profile CSV (r,u)")
    f.add_argument("--threshold", type=float, default=None,
                   help="estimated structure threshold used for gating")

    s = sub.add_parser("solve", parents=[common],
                       help="constrained minimization on a fiber branch")
    s.add_argument("--branch", choices=("plus", "minus"), default="plus")
    s.add_argument("--no-constants", action="store_true",
                   help="skip best-constant computation (no envelope/level checks)")

    a = sub.add_parser("asymptotics", parents=[common],
                       help="predict and measure a bubble power law")
    a.add_argument("--quantity", required=True,
                   choices=[q.value for q in extremals.Quantity])
    a.add_argument("--eps-list", help="comma list of eps values (geometric)")
    a.add_argument("--boundary", action="store_true",
                   help="select the boundary branch when on a case line")
    a.add_argument("--allow-poor-fit", action="store_true")

    r = sub.add_parser("region-map", parents=[common],
                       help="raster the (a,b) strip partition")
    r.add_argument("--N", type=int, default=3)
    r.add_argument("--resolution", type=int, default=400)

    gp = sub.add_parser("gap-check", parents=[common],
                        help="competitor-family level gap verification")
    gp.add_argument("--ground", required=True, help="ground-state profile CSV")
    gp.add_argument("--eps", type=float, default=1e-3)
    gp.add_argument("--m-level", type=float, default=None,
                    help="override the ground level (default: energy of the profile)")

    sw = sub.add_parser("sweep", parents=[common],
                        help="run a task across a parameter list")
    sw.add_argument("--vary", required=True, choices=("beta", "q", "rho", "a", "b"))
    sw.add_argument("--values", required=True, help="comma list")
    sw.add_argument("--task", required=True,
                    choices=("minimize_plus", "minimize_minus"))
    return ap


COMMANDS = {
    "exponents": cmd_exponents,
    "constants": cmd_constants,
    "fiber": cmd_fiber,
    "solve": cmd_solve,
    "asymptotics": cmd_asymptotics,
    "region-map": cmd_region_map,
    "gap-check": cmd_gap_check,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _apply_sets(_load_config(args.config), args.set)
    try:
        payload, _side = COMMANDS[args.command](args, cfg)
        try:
            sys.stdout.write(payload)
        except BrokenPipeError:
            pass
        return 0
    except ValidationError as exc:
        sys.stderr.write(jsonio.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 2
    except NoConvergence as exc:
        sys.stderr.write(jsonio.dumps({"error": "NoConvergence", "message": str(exc)}))
        return 4
    except PostconditionViolated as exc:
        # the payload still goes to stdout so callers can inspect both sides
        if exc.payload:
            try:
                sys.stdout.write(exc.payload)
            except BrokenPipeError:
                pass
        sys.stderr.write(jsonio.dumps({"error": "PostconditionViolated",
                                       "message": str(exc)}))
        return 3
    except (NumericError, CknError) as exc:
        sys.stderr.write(jsonio.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 3


if __name__ == "__main__":
    sys.exit(main())
