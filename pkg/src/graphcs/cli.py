"""Command-line front end.

    graphcs solve         --graph G --config C --lambda L [--out FILE]
    graphcs find-critical --graph G --config C [--bisect-tol T] [--out FILE]
    graphcs scan          --graph G --config C --lambda-min A --lambda-max B --steps N
    graphcs verify        SOLUTION.json --graph G

Exit codes: 0 converged / checks passed, 1 input error, 2 diverged,
3 iteration budget exceeded, 4 verification failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .background import VortexError, compute_background
from .config import ConfigError, build_config, load_config, with_overrides
from .critical import (
    CriticalSearchError,
    InconsistentBracketError,
    find_critical,
    near_critical_solution,
)
from .diagnostics import check_integral_identities, diagnose, max_sobolev_norm
from .graph import GraphError, load_graph, sobolev_norm
from .linalg import LinearSolveError
from .nonlinearity import ModelError
from .serialize import dumps, read_solution, solution_document, vertex_table, write_scan
from .solver import BUDGET_EXCEEDED, CONVERGED, DIVERGED, MonotonicityError, solve_maximal

log = logging.getLogger("graphcs")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DIVERGED = 2
EXIT_BUDGET = 3
EXIT_VERIFY = 4

_STATUS_EXIT = {CONVERGED: EXIT_OK, DIVERGED: EXIT_DIVERGED, BUDGET_EXCEEDED: EXIT_BUDGET}

# how far a stored u' may sit from u0 + u, relative to the field sizes
BINDING_TOL = 1e-12


class InputError(Exception):
    pass


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _load(args) -> tuple:
    """Graph, RunConfig and background from --graph/--config plus overrides."""
    if args.config is None:
        raise InputError("--config is required")
    rc = load_config(args.config)
    rc = with_overrides(
        rc,
        lam=getattr(args, "lam", None),
        lambda_min=getattr(args, "lambda_min", None),
        lambda_max=getattr(args, "lambda_max", None),
        steps=getattr(args, "steps", None),
        bisect_tol=getattr(args, "bisect_tol", None),
        divergence_floor=args.divergence_floor,
        max_iter=args.max_iter,
    )
    graph_path = args.graph or rc.graph_path
    if graph_path is None:
        raise InputError("no graph given (use --graph or the 'graph' config key)")
    g = load_graph(graph_path)
    rc.vortices.check(g)
    return g, rc, compute_background(g, rc.vortices)


def cmd_solve(args) -> int:
    g, rc, bg = _load(args)
    if rc.lam is None:
        raise InputError("solve needs lambda (--lambda or the 'lambda' config key)")
    nl = rc.nonlinearity
    out = solve_maximal(g, bg, nl, rc.params(rc.lam))
    diag = None
    if out.converged:
        diag = diagnose(g, bg, nl, out.solution).to_dict()
    doc = solution_document(g, out, rc.to_dict(), diag)
    with _output(args.out) as fh:
        fh.write(dumps(doc))
    log.info("lambda=%r: %s after %d iterations", rc.lam, out.status, out.iterations)
    return _STATUS_EXIT[out.status]


def cmd_find_critical(args) -> int:
    g, rc, bg = _load(args)
    nl = rc.nonlinearity
    params = rc.params(1.0)
    try:
        res = find_critical(g, bg, nl, rc.bisect_tol, params)
    except CriticalSearchError as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    bound = res.analytic_bound
    eps = rc.epsilons if rc.epsilons is not None else [f * bound for f in (1e-1, 1e-2, 1e-3)]
    continuation = None
    if eps:
        try:
            rep = near_critical_solution(g, bg, nl, res, eps, params)
        except InconsistentBracketError as exc:
            log.error("%s", exc)
            return EXIT_VERIFY
        continuation = {
            "epsilons": list(eps),
            "lambdas": rep.lambdas,
            "norms_u": rep.norms_u,
            "norms_v": rep.norms_v,
            "distances": rep.distances,
            "cauchy_decreasing": rep.cauchy_decreasing,
            "final_residual": rep.final_residual,
            "residual_scale": rep.residual_scale,
            "min_gap_u": rep.min_gap_u,
            "min_gap_v": rep.min_gap_v,
            "dominates": rep.dominates,
            "max_sobolev_norm": max_sobolev_norm(g, rep.solutions),
        }
    sol = res.solution_at_hi
    doc = {
        "format": "graphcs-critical",
        "version": 1,
        "graph_digest": g.digest(),
        "vertex_ids": list(g.vertex_ids),
        "config": rc.to_dict(),
        "analytic_bound": bound,
        "lambda_lo": res.lambda_lo,
        "lambda_hi": res.lambda_hi,
        "width": res.width,
        "bisect_tol": res.bisect_tol,
        "lo_probed": res.lo_probed,
        "probes": [[p.lam, p.status, p.iterations] for p in res.probes],
        "continuation": continuation,
        "solution_at_hi": {
            "lambda": sol.lam,
            "iterations": sol.iterations,
            "residuals": {"u": sol.residual_u, "v": sol.residual_v},
            "vertices": vertex_table(g, sol),
            "diagnostics": diagnose(g, bg, nl, sol).to_dict(),
        },
    }
    with _output(args.out) as fh:
        fh.write(dumps(doc))
    if not res.lambda_hi >= bound - rc.bisect_tol:
        log.error("bracket upper end %r lies below the analytic bound %r", res.lambda_hi, bound)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_scan(args) -> int:
    g, rc, bg = _load(args)
    if rc.steps is None or rc.lambda_min is None or rc.lambda_max is None:
        raise InputError("scan needs lambda_min, lambda_max and steps")
    nl = rc.nonlinearity
    lams = np.linspace(rc.lambda_min, rc.lambda_max, rc.steps) if rc.steps else []
    rows = []
    for lam in lams:
        out = solve_maximal(g, bg, nl, rc.params(float(lam)))
        row = {"lambda": float(lam), "outcome": out.status, "iterations": out.iterations,
               "mean_u": out.mean_u, "mean_v": out.mean_v}
        if out.converged:
            sol = out.solution
            du, dv = check_integral_identities(g, bg, nl, sol)
            row.update(sobolev_u=sobolev_norm(g, sol.u), sobolev_v=sobolev_norm(g, sol.v),
                       identity_defect_u=du, identity_defect_v=dv)
        rows.append(row)
        log.info("lambda=%.10g %s", lam, out.status)
    with _output(args.out) as fh:
        write_scan(rows, fh)
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        with open(args.solution, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{args.solution}: cannot read solution file: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("config"), dict):
        raise InputError(f"{args.solution}: not a solution file")
    if args.graph is None:
        raise InputError("verify needs --graph")
    g = load_graph(args.graph)
    try:
        sol = read_solution(doc, g)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{args.solution}: {exc}") from None
    rc = build_config(doc["config"])
    rc.vortices.check(g)
    bg = compute_background(g, rc.vortices)

    failures = []
    scale = 1.0 + np.abs(bg.u0) + np.abs(sol.u)
    if not np.all(np.abs(bg.u0 + sol.u - sol.u_prime) <= BINDING_TOL * scale):
        failures.append("stored u' differs from u0 + u")
    scale = 1.0 + np.abs(bg.v0) + np.abs(sol.v)
    if not np.all(np.abs(bg.v0 + sol.v - sol.v_prime) <= BINDING_TOL * scale):
        failures.append("stored v' differs from v0 + v")
    if not failures:
        try:
            rep = diagnose(g, bg, rc.nonlinearity, sol, residual_tol=rc.solver.tol_residual)
        except ValueError as exc:
            failures.append(f"diagnostics could not run: {exc}")
        else:
            failures.extend(rep.failures)
            log.info("residuals %s, identity defects %s", rep.residuals, rep.identity_defects)
    for f in failures:
        log.error("verification failed: %s", f)
    if failures:
        return EXIT_VERIFY
    log.info("%s: all checks passed", args.solution)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphcs", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--graph", help="graph file (overrides the 'graph' config key)")
    common.add_argument("--config", help="key = value run configuration")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--divergence-floor", type=float, help="mean value below which a run counts as diverged")
    common.add_argument("--max-iter", type=int, help="iteration budget per solve")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="maximal solution at one lambda")
    p.add_argument("--lambda", dest="lam", type=float, help="coupling constant")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("find-critical", parents=[common], help="bracket the critical coupling")
    p.add_argument("--bisect-tol", type=float, help="bracket width to reach")
    p.set_defaults(func=cmd_find_critical)

    p = sub.add_parser("scan", parents=[common], help="CSV sweep over a lambda grid")
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--steps", type=int, help="number of grid points (0 gives an empty table)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("verify", parents=[common], help="re-check a stored solution")
    p.add_argument("solution", help="solution JSON written by 'solve'")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, ConfigError, GraphError, VortexError, ModelError, OSError) as exc:
        msg = exc.strerror + f": {exc.filename}" if isinstance(exc, OSError) and exc.filename else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except (MonotonicityError, LinearSolveError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
