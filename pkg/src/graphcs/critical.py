"""Bisection for the critical coupling and continuation towards it.

Solutions exist for every lambda above the critical value and for none below
it, so the set of lambdas where the monotone iteration converges is an
upward-closed interval.  The search keeps a bracket with a diverged (or
analytically excluded) lower end and a converged upper end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .background import FOUR_PI, BackgroundPair, VortexSet
from .graph import WeightedGraph, sobolev_norm
from .nonlinearity import Nonlinearity
from .solver import (
    BUDGET_EXCEEDED,
    CONVERGED,
    IterationOutcome,
    SolutionPair,
    SolverParams,
    coupling_terms,
    solve_maximal,
    system_residual,
)

log = logging.getLogger(__name__)

BUDGET_ESCALATION = 10
MAX_DOUBLINGS = 60


class CriticalSearchError(RuntimeError):
    """No convergent lambda below the cap, or a verdict that stays inconclusive."""


class InconsistentBracketError(CriticalSearchError):
    """A probe above the converged end of the bracket did not converge."""


def analytic_lower_bound(g: WeightedGraph, vortices, nl: Nonlinearity) -> float:
    """4 pi max(N1, N2) / (G(1) H(1) |V|); no solution exists at or below it.

    ``vortices`` may be a VortexSet or a BackgroundPair (both carry N1, N2).
    """
    return FOUR_PI * max(vortices.N1, vortices.N2) / (nl.G1H1 * g.volume)


@dataclass
class Probe:
    lam: float
    status: str
    iterations: int
    max_iter: int


@dataclass
class CriticalResult:
    lambda_lo: float
    lambda_hi: float
    analytic_bound: float
    solution_at_hi: SolutionPair
    bisect_tol: float
    # True when lambda_lo carries a diverged verdict, False when it is the analytic bound
    lo_probed: bool
    probes: list = field(default_factory=list)
    continuation_trace: list = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.lambda_hi - self.lambda_lo


def probe(g, bg, nl, params: SolverParams, lam: float, escalate: bool = True) -> IterationOutcome:
    """Solve at ``lam``; a budget-exhausted run is retried once with a 10x budget."""
    p = params.with_lambda(lam)
    out = solve_maximal(g, bg, nl, p)
    if out.status == BUDGET_EXCEEDED and escalate:
        log.info("lam=%.12g: budget of %d exhausted, retrying with x%d", lam, p.max_iter, BUDGET_ESCALATION)
        out = solve_maximal(g, bg, nl, replace(p, max_iter=p.max_iter * BUDGET_ESCALATION))
    return out


def find_critical(g: WeightedGraph, bg: BackgroundPair, nl: Nonlinearity, bisect_tol: float,
                  params: SolverParams) -> CriticalResult:
    """Bracket the critical coupling to width ``bisect_tol``.

    The upper end is found by doubling from the analytic bound until the
    iteration converges; bisection then keeps diverged-below/converged-above.
    ``params.lam`` is ignored.
    """
    if not bisect_tol > 0:
        raise ValueError("bisect_tol must be positive")
    bound = analytic_lower_bound(g, bg, nl)
    probes: list[Probe] = []

    def run(lam):
        out = probe(g, bg, nl, params, lam)
        probes.append(Probe(lam, out.status, out.iterations, params.max_iter))
        if out.status == BUDGET_EXCEEDED:
            raise CriticalSearchError(
                f"no verdict at lambda={lam!r} within {params.max_iter * BUDGET_ESCALATION} iterations; "
                f"raise max_iter or the divergence floor"
            )
        return out

    lo, hi = bound, bound
    lo_probed = False
    best = None
    for _ in range(MAX_DOUBLINGS):
        hi = 2.0 * hi
        out = run(hi)
        if out.status == CONVERGED:
            best = out.solution
            break
        lo, lo_probed = hi, True
    else:
        raise CriticalSearchError(f"no convergent lambda up to {hi:.6g} = 2^{MAX_DOUBLINGS} x analytic bound")

    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        out = run(mid)
        if out.status == CONVERGED:
            hi, best = mid, out.solution
        else:
            lo, lo_probed = mid, True
    log.info("critical coupling in [%.10g, %.10g] (analytic bound %.10g)", lo, hi, bound)
    return CriticalResult(lo, hi, bound, best, bisect_tol, lo_probed, probes)


@dataclass
class ContinuationReport:
    lambdas: list
    norms_u: list
    norms_v: list
    distances: list           # W^{1,2} distances between consecutive entries
    final_residual: float     # residual of the pair at lambda_hi + min(eps), evaluated at lambda_hi
    residual_scale: float
    min_gap_u: float          # min over tested eps of min_x (u_{lambda_hi+eps} - u_*)
    min_gap_v: float
    solutions: list = field(default_factory=list, repr=False)

    @property
    def cauchy_decreasing(self) -> bool:
        d = self.distances
        return all(b < a for a, b in zip(d, d[1:]))

    @property
    def dominates(self) -> bool:
        return self.min_gap_u > 0 and self.min_gap_v > 0


def pair_distance(g: WeightedGraph, a: SolutionPair, b: SolutionPair) -> float:
    """sqrt(||u_a - u_b||^2 + ||v_a - v_b||^2) in W^{1,2}."""
    return float(np.hypot(sobolev_norm(g, a.u - b.u), sobolev_norm(g, a.v - b.v)))


def near_critical_solution(g: WeightedGraph, bg: BackgroundPair, nl: Nonlinearity,
                           result: CriticalResult, epsilons, params: SolverParams) -> ContinuationReport:
    """Solve at lambda_hi + eps for decreasing eps and watch the solutions settle.

    The bracket's converged solution at lambda_hi closes the sequence and
    stands in for the solution at the critical coupling.
    """
    eps = [float(e) for e in epsilons]
    if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be positive and strictly decreasing")
    sols = []
    for e in eps:
        lam = result.lambda_hi + e
        out = probe(g, bg, nl, params, lam)
        if out.status != CONVERGED:
            raise InconsistentBracketError(
                f"lambda={lam!r} above the converged end {result.lambda_hi!r} returned {out.status}"
            )
        sols.append(out.solution)
    star = result.solution_at_hi
    chain = sols + [star]
    distances = [pair_distance(g, a, b) for a, b in zip(chain, chain[1:])]

    last = sols[-1]
    ru, rv = system_residual(g, bg, nl, result.lambda_hi, last.u, last.v)
    A, B = coupling_terms(nl, last.u_prime, last.v_prime)
    scale = max(FOUR_PI * max(bg.N1, bg.N2) / g.volume,
                result.lambda_hi * float(max(np.max(A), np.max(B))))
    gap_u = min(float(np.min(s.u_prime - star.u_prime)) for s in sols)
    gap_v = min(float(np.min(s.v_prime - star.v_prime)) for s in sols)

    lambdas = [s.lam for s in chain]
    report = ContinuationReport(
        lambdas=lambdas,
        norms_u=[sobolev_norm(g, s.u) for s in chain],
        norms_v=[sobolev_norm(g, s.v) for s in chain],
        distances=distances,
        final_residual=float(max(np.max(np.abs(ru)), np.max(np.abs(rv)))),
        residual_scale=scale,
        min_gap_u=gap_u,
        min_gap_v=gap_v,
        solutions=chain,
    )
    result.continuation_trace = list(zip(lambdas, report.norms_u, report.norms_v))
    return report
