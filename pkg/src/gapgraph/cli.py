"""Command-line front end.

Subcommands: eig, gap, classcheck, fh, optimize, audit, reproduce.  Inputs
are JSON problem files carrying the graph plus optional potential, class,
and perturbation blocks; outputs are canonical JSON reports, optional CSV
tables, and optional PNG figures.  Exit codes: 0 success, 2 verdict-level
failure (class check rejected, audit violated, scenario row failed), 1 on
bad flags or input errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import reports
from .errors import BadFlags, GapGraphError, ParseError
from .graphs import MetricGraph, PointOnGraph
from .optimize import (
    PiecewiseLinearFamily,
    StepFamily,
    bound_audit,
    optimize_gap,
)
from .perturbation import certify_non_optimal
from .potentials import (
    Potential,
    check_class,
    convex_class,
    indicator,
    ramp,
    signed_distance,
    single_well_class,
    tent,
)
from .reproduce import SCENARIOS, run_scenario
from .solver import solve_spectrum


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadFlags(message)


def load_problem(path: str) -> dict:
    """Parse a problem file; parse failures carry line/column."""
    if not os.path.exists(path):
        raise ParseError(f"input file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from exc


def problem_graph(spec: dict) -> MetricGraph:
    return MetricGraph.from_spec(spec)


def problem_potential(g: MetricGraph, spec: dict) -> Potential:
    blocks = spec.get("potential")
    if not blocks:
        return Potential.zero(g)
    return Potential.from_spec(g, blocks)


def problem_class(g: MetricGraph, spec: dict, kind: str | None, bound: float | None):
    blk = spec.get("class", {})
    kind = kind or blk.get("kind")
    bound = bound if bound is not None else blk.get("M")
    if kind is None or bound is None:
        raise BadFlags("a potential class needs --class and --M "
                       "(or a 'class' block in the input file)")
    kind = kind.replace("_", "-")
    if kind == "convex":
        return convex_class(g, float(bound))
    if kind == "single-well":
        return single_well_class(g, float(bound))
    raise BadFlags(f"unknown class kind {kind!r}")


def problem_perturbation(g: MetricGraph, q: Potential, spec: dict) -> Potential:
    blk = spec.get("perturbation")
    if blk is None:
        raise BadFlags("the fh command needs a 'perturbation' block")
    kind = blk.get("kind")
    if kind == "indicator":
        return indicator(g, [tuple(r) for r in blk["region"]],
                         blk.get("height", 1.0))
    if kind == "tent":
        return tent(g, PointOnGraph(blk["edge"], float(blk["center"])),
                    float(blk["halfwidth"]), blk.get("height", 1.0))
    if kind == "ramp":
        return ramp(g, blk["edge"], float(blk["s0"]), float(blk["s1"]),
                    float(blk.get("v0", 0.0)), float(blk["v1"]))
    if kind == "sigma":
        return signed_distance(
            g, PointOnGraph(blk["edge"], float(blk["s"])),
            minus=blk["minus"]).potential
    if kind == "linear_blend":
        return Potential.from_spec(g, blk["target"]) - q
    raise BadFlags(f"unknown perturbation kind {kind!r}")


def _emit(args, payload, csv_spec=None, figures=None) -> None:
    text = reports.canonical_json(payload)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if csv_spec is not None and getattr(args, "csv", None):
        header, rows = csv_spec
        reports.write_csv(args.csv, header, rows)
    if figures is not None and getattr(args, "figures", None):
        os.makedirs(args.figures, exist_ok=True)
        figures(args.figures)


def cmd_eig(args) -> int:
    spec = load_problem(args.graph)
    g = problem_graph(spec)
    q = problem_potential(g, spec)
    res = solve_spectrum(g, q, k=args.k, base=args.mesh,
                         richardson=not args.no_richardson)
    payload = res.to_dict()
    payload["gamma"] = res.gap()

    def draw(outdir):
        reports.fig_eigenfunctions(res, os.path.join(outdir, "eigenfunctions.png"))
        reports.fig_potential(q, os.path.join(outdir, "potential.png"))

    _emit(args, payload,
          csv_spec=(["index", "eigenvalue", "error_estimate"],
                    [(i, float(v), float(e)) for i, (v, e) in
                     enumerate(zip(res.eigenvalues, res.err_est), start=1)]),
          figures=draw)
    return 0


def cmd_gap(args) -> int:
    spec = load_problem(args.graph)
    g = problem_graph(spec)
    q = problem_potential(g, spec)
    res = solve_spectrum(g, q, k=2, base=args.mesh)
    payload = {
        "lambda1": float(res.eigenvalues[0]),
        "lambda2": float(res.eigenvalues[1]),
        "gamma": res.gap(),
        "error_estimates": [float(v) for v in res.err_est],
    }
    _emit(args, payload)
    return 0


def cmd_classcheck(args) -> int:
    spec = load_problem(args.graph)
    g = problem_graph(spec)
    q = problem_potential(g, spec)
    cls = problem_class(g, spec, args.cls, args.M)
    chk = check_class(q, cls, tol=args.tol)
    payload = {
        "accepted": chk.accepted,
        "message": chk.message,
        "witness": None if chk.witness is None else [
            {"edge": p.edge, "s": p.s} for p in chk.witness],
        "well_point": None if chk.well_point is None else
            {"edge": chk.well_point.point.edge, "s": chk.well_point.point.s,
             "vertex": chk.well_point.vertex},
    }
    _emit(args, payload)
    return 0 if chk.accepted else 2


def cmd_fh(args) -> int:
    spec = load_problem(args.graph)
    g = problem_graph(spec)
    q = problem_potential(g, spec)
    cls = problem_class(g, spec, args.cls, args.M)
    P = problem_perturbation(g, q, spec)
    rep = certify_non_optimal(g, q, cls, P, direction=args.direction,
                              base=args.mesh)
    _emit(args, rep.to_dict())
    return 0


def cmd_optimize(args) -> int:
    spec = load_problem(args.graph)
    g = problem_graph(spec)
    cls = problem_class(g, spec, args.cls, args.M)
    family = None
    if args.family == "step":
        family = StepFamily(args.jumps)
    elif args.family == "pwlinear":
        family = PiecewiseLinearFamily(args.jumps)
    result = optimize_gap(g, cls, direction=args.direction, budget=args.budget,
                          family=family, seed=args.seed, restarts=args.restarts)

    def draw(outdir):
        reports.fig_optimizer_trace(result,
                                    os.path.join(outdir, "optimize_trace.png"))
        reports.fig_potential(result.q_star,
                              os.path.join(outdir, "optimal_potential.png"),
                              title="optimized potential")

    _emit(args, result.to_dict(),
          csv_spec=(["evaluation", "gamma"],
                    [(i, float(v)) for i, v in result.trace]),
          figures=draw)
    return 0


def cmd_audit(args) -> int:
    spec = load_problem(args.graph)
    g = problem_graph(spec)
    q = problem_potential(g, spec)
    audit = bound_audit(g, q)
    _emit(args, audit.to_dict())
    return 0 if audit.passed else 2


def cmd_reproduce(args) -> int:
    names = sorted(SCENARIOS) if args.name == "all" else [args.name]
    if any(n not in SCENARIOS for n in names):
        raise BadFlags(f"unknown scenario {args.name!r}; "
                       f"choose from {sorted(SCENARIOS)} or 'all'")
    reports_list = [run_scenario(n) for n in names]
    for rep in reports_list:
        for line in rep.summary_lines():
            print(f"{rep.name}: {line}")
    payload = {r.name: r.to_dict() for r in reports_list} \
        if len(reports_list) > 1 else reports_list[0].to_dict()

    def draw(outdir):
        for rep in reports_list:
            reports.fig_scenario(rep, outdir)

    csv_spec = None
    if args.csv and len(reports_list) == 1:
        rep = reports_list[0]
        reports.scenario_csv(rep, args.csv)
    _emit(args, payload, figures=draw)
    return 0 if all(r.passed for r in reports_list) else 2


def build_parser() -> _Parser:
    p = _Parser(prog="gapgraph",
                description="Spectral-gap toolkit for Schrodinger operators "
                            "on compact metric graphs")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, graph=True):
        if graph:
            sp.add_argument("--graph", required=True, help="problem JSON file")
        sp.add_argument("--out", help="write the JSON report here (default: stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--mesh", type=int, default=64,
                        help="mesh density parameter (elements per shortest edge)")

    sp = sub.add_parser("eig", help="lowest eigenpairs")
    common(sp)
    sp.add_argument("--k", type=int, default=4)
    sp.add_argument("--no-richardson", action="store_true")
    sp.add_argument("--csv", help="eigenvalue table CSV")
    sp.add_argument("--figures", help="directory for PNG figures")
    sp.set_defaults(fn=cmd_eig)

    sp = sub.add_parser("gap", help="fundamental gap")
    common(sp)
    sp.set_defaults(fn=cmd_gap)

    sp = sub.add_parser("classcheck", help="potential class membership")
    common(sp)
    sp.add_argument("--class", dest="cls", choices=["convex", "single-well"])
    sp.add_argument("--M", type=float, default=None, help="class bound")
    sp.set_defaults(fn=cmd_classcheck)

    sp = sub.add_parser("fh", help="first-order (non-)optimality certificate")
    common(sp)
    sp.add_argument("--class", dest="cls", choices=["convex", "single-well"])
    sp.add_argument("--M", type=float, default=None)
    sp.add_argument("--direction", choices=["min", "max"], default="min")
    sp.set_defaults(fn=cmd_fh)

    sp = sub.add_parser("optimize", help="optimize the gap over a reduced family")
    common(sp)
    sp.add_argument("--class", dest="cls", choices=["convex", "single-well"])
    sp.add_argument("--M", type=float, default=None)
    sp.add_argument("--direction", choices=["min", "max"], default="min")
    sp.add_argument("--budget", type=int, default=4000)
    sp.add_argument("--restarts", type=int, default=8)
    sp.add_argument("--family", choices=["step", "pwlinear"], default=None)
    sp.add_argument("--jumps", type=int, default=2,
                    help="jumps (step) or kinks (pwlinear) per edge")
    sp.add_argument("--csv", help="optimizer trace CSV")
    sp.add_argument("--figures", help="directory for PNG figures")
    sp.set_defaults(fn=cmd_optimize)

    sp = sub.add_parser("audit", help="diameter bound audit")
    common(sp)
    sp.set_defaults(fn=cmd_audit)

    sp = sub.add_parser("reproduce", help="run a named reproduction scenario")
    sp.add_argument("name", help=f"one of {sorted(SCENARIOS)} or 'all'")
    sp.add_argument("--out", help="write the JSON report here (default: stdout)")
    sp.add_argument("--csv", help="scenario sweep CSV")
    sp.add_argument("--figures", help="directory for PNG figures")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_reproduce)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        np.random.seed(args.seed if hasattr(args, "seed") else 0)
        return args.fn(args)
    except BadFlags as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        loc = f" (line {exc.line}, column {exc.column})" \
            if exc.line is not None else ""
        print(f"parse error: {exc}{loc}", file=sys.stderr)
        return 1
    except GapGraphError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
