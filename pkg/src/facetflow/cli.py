"""Command-line front end.

Exit status: 0 when every check passes, 2 when a check fails (files are
still written), 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import experiments as ex
from . import reports, steady
from .evolve import EvolutionFailure, evolve
from .facets import detect_facets
from .model import ForceField, ForceSlice, Grid, ModelError, OperatorSpec, Profile

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

EXPERIMENTS = ("stagnation-zero", "stagnation-steady", "creation", "breaking", "sweep")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="facetflow", description="Facet dynamics for u_t - (L(u_x))_x = f with a jump in L at zero slope.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_config=True):
        if with_config:
            sp.add_argument("--config", "-c", help="YAML run configuration")
        sp.add_argument("--out", "-o", required=True, help="output directory (required, created if missing)")
        sp.add_argument("--n-cells", type=int, dest="n_cells")
        sp.add_argument("--tau", type=float)
        sp.add_argument("--T", type=float, dest="T")

    sp = sub.add_parser("steady", help="stationary solution (analytic or variational)")
    common(sp)
    sp.add_argument("--alpha", type=float, help="three-facet analytic solution for f_alpha")
    sp.add_argument("--A", type=float, dest="A", help="analytic solution for the constant force A")
    sp.add_argument("--kind", choices=("numeric", "constant", "three_facet"))

    sp = sub.add_parser("evolve", help="time integration from a configured initial profile")
    common(sp)

    sp = sub.add_parser("analyze", help="facet detection on a profile file")
    sp.add_argument("profile", help="two-column profile file")
    sp.add_argument("--out", "-o", required=True)
    sp.add_argument("--slope-tol", type=float, dest="slope_tol")
    sp.add_argument("--min-length", type=float, dest="min_length")

    sp = sub.add_parser("experiment", help="scenario with pass/fail checks")
    sp.add_argument("name", choices=EXPERIMENTS)
    common(sp)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--alpha-list", type=float, nargs="+", dest="alpha_list")
    sp.add_argument("--refine-steps", type=int, dest="refine_steps")
    sp.add_argument("--cap", type=float)
    return p


def _effective(args) -> dict:
    raw = cfgmod.load(getattr(args, "config", None))
    ov = {"grid.n_cells": args.n_cells, "time.tau": args.tau, "time.T": args.T}
    if args.command == "steady":
        ov.update({"steady.alpha": args.alpha, "steady.A": args.A, "steady.kind": args.kind})
    if args.command == "experiment":
        ov.update({"experiment.alpha": args.alpha, "experiment.alpha_list": args.alpha_list, "experiment.refine_steps": args.refine_steps, "experiment.cap": args.cap})
    return cfgmod.merged(raw, ov)


def _print_checks(checks, prefix: str = "") -> bool:
    ok = True
    for c in checks:
        print(prefix + c.line())
        ok = ok and c.passed
    return ok


# ---------------------------------------------------------------------------
# subcommands


def _initial(cfg: dict, grid: Grid, op: OperatorSpec) -> Profile:
    spec = cfg.get("initial", {"kind": "zero"})
    kind = spec["kind"]
    if kind == "zero":
        return Profile.zeros(grid)
    if kind == "tent":
        return ex.tent(grid, spec.get("height", 0.25))
    if kind == "steady_constant":
        return steady.solve_steady_numeric(op, ForceSlice.constant(spec.get("A", 4.0)), grid)
    if "path" not in spec:
        raise cfgmod.ConfigError("config error at initial: kind 'file' needs a path")
    u = reports.read_profile(spec["path"])
    if u.grid.n_cells != grid.n_cells:
        raise cfgmod.ConfigError(f"config error at initial/path: profile has {u.grid.n_cells} cells, grid has {grid.n_cells}")
    return u


def cmd_steady(cfg: dict, out: Path) -> int:
    op = cfgmod.build_operator(cfg)
    grid = cfgmod.build_grid(cfg)
    sc = cfg.get("steady", {})
    kind = sc.get("kind") or ("three_facet" if "alpha" in sc else "constant" if "A" in sc else "numeric")
    rep = ex.ExperimentReport("steady", {"kind": kind, "n_cells": grid.n_cells, "operator": op.kind.value})
    if kind == "numeric":
        force = cfgmod.build_force(cfg)
        tol = cfg.get("tolerances", {}).get("steady", 1e-10)
        u = steady.solve_steady_numeric(op, force, grid, tol, sampling=cfgmod.sampling(cfg))
        ver = steady.verify_steady(u, op, force, tol, sampling=cfgmod.sampling(cfg))
        rep.profiles["steady"] = u
    else:
        if kind == "three_facet":
            if "alpha" not in sc:
                raise cfgmod.ConfigError("config error at steady: three_facet needs alpha")
            sol = steady.solve_three_facet(op, sc["alpha"])
            rep.summary["compatibility_integral"] = sol.compatibility_residual
            rep.add("compatibility", "|int_c^e f_alpha| <= 1e-12", abs(sol.compatibility_residual), 1e-12, abs(sol.compatibility_residual) <= 1e-12)
        else:
            if "A" not in sc:
                raise cfgmod.ConfigError("config error at steady: constant needs A")
            sol = steady.solve_constant_force(op, sc["A"])
        rep.params.update(sol.params)
        rep.summary["flux_at_zero"] = sol.flux_at_zero
        rep.summary["pieces"] = [{"left": p.left, "right": p.right, "coeffs": list(p.coeffs)} for p in sol.pieces]
        ver = steady.verify_steady(sol, op, sol.force, 1e-9)
        u = sol.sample(grid)
        rep.profiles["steady"] = u
        rep.summary["analytic_facets"] = [{"left": a, "right": b, "level": lv} for a, b, lv in sol.facets]
    rep.add("steady_inclusion", f"flux inclusion violation <= {ver.tol:g}", ver.violation, ver.tol, ver.passed)
    rep.summary["verification"] = {"violation": ver.violation, "location": ver.location, "sigma0": ver.sigma0}
    rep.summary["facets"] = detect_facets(u, slope_tol=grid.h if kind == "numeric" else 1e-9)
    rep.summary["facets"] = rep.summary["facets"].to_dict()
    reports.emit_report(rep, out, cfg)
    return EXIT_OK if _print_checks(rep.checks) else EXIT_FAIL


def cmd_evolve(cfg: dict, out: Path) -> int:
    if "force" not in cfg:
        raise UsageError("evolve needs a config with a force section (--config)")
    if "T" not in cfg["time"]:
        raise cfgmod.ConfigError("config error at time: T required for evolve")
    op = cfgmod.build_operator(cfg)
    force = cfgmod.build_force(cfg)
    grid = cfgmod.build_grid(cfg)
    tau, T = cfg["time"]["tau"], cfg["time"]["T"]
    u0 = _initial(cfg, grid, op)
    target = reports.read_profile(cfg["target"]) if "target" in cfg else None
    snaps = cfg.get("snapshot_times") or ex._default_snapshots(T)
    traj = evolve(u0, force, op, tau, T, grid, cfg.get("tolerances", {}).get("step"), snaps, target, sampling=cfgmod.sampling(cfg))
    rep = ex.ExperimentReport("evolve", {"T": T, "tau": tau, "n_cells": grid.n_cells, "operator": op.kind.value, "force": force.to_dict()})
    ex.creation_checks(rep, traj)
    rep = ex._finish(rep, traj, 0.0)
    reports.emit_report(rep, out, cfg)
    return EXIT_OK if _print_checks(rep.checks) else EXIT_FAIL


def cmd_analyze(args, out: Path) -> int:
    u = reports.read_profile(args.profile)
    fs = detect_facets(u, args.slope_tol, args.min_length)
    data = {"profile": str(args.profile), "n_cells": u.grid.n_cells, "facets": fs.to_dict()}
    reports.write_json(data, out / "facets.json")
    for f in fs:
        print(f"FACET {f.kind.value} [{f.left:.10g}, {f.right:.10g}] level {f.level:.10g}")
    print(f"PASS analyze: {len(fs)} facets")
    return EXIT_OK


def _sine_force(amplitude: float = 1.0, pieces: int = 64) -> ForceField:
    """``amplitude * sin(2 pi x)`` replaced by its cell averages on ``pieces`` cells."""
    edges = np.linspace(0.0, 1.0, pieces + 1)
    avg = amplitude * (np.cos(2 * np.pi * edges[:-1]) - np.cos(2 * np.pi * edges[1:])) / (2 * np.pi * np.diff(edges))
    return ForceField(tuple((float(a), float(b), float(v)) for a, b, v in zip(edges[:-1], edges[1:], avg)))


def cmd_experiment(name: str, cfg: dict, out: Path) -> int:
    grid = cfgmod.build_grid(cfg)
    tau = cfg["time"]["tau"]
    T = cfg["time"].get("T")
    e = cfg.get("experiment", {})
    snaps = cfg.get("snapshot_times")
    if name == "stagnation-zero":
        force = cfgmod.build_force(cfg) if "force" in cfg else _sine_force()
        rep = ex.run_stagnation_zero(force, T or 2.0, grid, tau, op=cfgmod.build_operator(cfg), snapshot_times=snaps)
    elif name == "stagnation-steady":
        rep = ex.run_stagnation_steady(T or 20.0, grid, tau, cap=e.get("cap", 10.0), perturbation=e.get("perturbation"), A=e.get("A", 4.0), eps=cfg.get("tolerances", {}).get("eps_stag"), snapshot_times=snaps)
    elif name == "creation":
        op = cfgmod.build_operator(cfg)
        force = cfgmod.build_force(cfg) if "force" in cfg else ForceField()
        u0 = _initial(cfg, grid, op) if "initial" in cfg else ex.tent(grid)
        rep = ex.run_creation(force, u0, T or 0.1, grid, tau, op=op, snapshot_times=snaps)
    elif name == "breaking":
        alpha = e.get("alpha", 16.0)
        rep = ex.run_breaking(alpha, T, grid, tau, eps_stag=cfg.get("tolerances", {}).get("eps_stag"), snapshot_times=snaps)
    else:
        alphas = e.get("alpha_list", [8, 10, 11, 13, 16, 24])
        res = ex.alpha_sweep(alphas, T, grid, tau, delta=e.get("delta", 0.5), refine_steps=e.get("refine_steps", 0))
        ok = True
        for r in res.reports:
            sub = out / f"alpha_{r.params['alpha']:g}"
            reports.emit_report(r, sub, cfg)
            ok = _print_checks(r.checks, f"[alpha={r.params['alpha']:g}] ") and ok
        data = {
            "scenario": "sweep",
            "alphas": res.alphas,
            "broke": {f"{a:g}": b for a, b in sorted(res.broke.items())},
            "threshold_estimate": res.estimate if res.estimate is not None else res.estimate_text,
            "bracket": list(res.bracket),
            "checks": [c.to_dict() for c in res.checks],
            "config": cfg,
        }
        reports.write_json(data, out / "report.json")
        ok = _print_checks(res.checks) and ok
        print(f"threshold estimate: {res.estimate_text}")
        return EXIT_OK if ok else EXIT_FAIL
    reports.emit_report(rep, out, cfg)
    return EXIT_OK if _print_checks(rep.checks) else EXIT_FAIL


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    out = Path(args.out)
    try:
        if args.command == "analyze":
            return cmd_analyze(args, out)
        cfg = _effective(args)
        if args.command == "steady":
            return cmd_steady(cfg, out)
        if args.command == "evolve":
            return cmd_evolve(cfg, out)
        return cmd_experiment(args.name, cfg, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (cfgmod.ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (reports.OutputError, steady.SteadyNonConvergence, EvolutionFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
