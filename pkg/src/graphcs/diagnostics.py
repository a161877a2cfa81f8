"""Checks on converged solutions that do not reuse the solver's arithmetic.

The nonlinear terms are recomputed from ``exp(u0 + u)`` with g and h taken
from adaptive quadrature rather than the closed forms the solver uses, and
the system residual is re-evaluated in the shifted variables (u, v).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .background import FOUR_PI, BackgroundPair
from .graph import WeightedGraph, gradient_l2, integrate, mean, sobolev_norm
from .nonlinearity import DOMAIN_SLACK, Nonlinearity
from .solver import SolutionPair, system_residual

IDENTITY_TOL = 1e-8
RESIDUAL_TOL = 1e-10


def coupling_quadrature(nl: Nonlinearity, u_prime, v_prime) -> tuple[np.ndarray, np.ndarray]:
    """e^{v'} H(e^{v'}) g(e^{u'}) and e^{u'} G(e^{u'}) h(e^{v'}) with g, h by quadrature."""
    tu = np.exp(np.asarray(u_prime, dtype=np.float64))
    tv = np.exp(np.asarray(v_prime, dtype=np.float64))
    A = tv * nl.H.G(tv) * nl.G.g_quadrature(tu)
    B = tu * nl.G.G(tu) * nl.H.g_quadrature(tv)
    return A, B


def check_integral_identities(g: WeightedGraph, bg: BackgroundPair, nl: Nonlinearity,
                              sol: SolutionPair) -> tuple[float, float]:
    """Relative defects |lam int A / (4 pi N1) - 1| and |lam int B / (4 pi N2) - 1|.

    Integrating the system over V kills the Laplacian, so every solution
    satisfies ``lam int A = 4 pi N1`` and ``lam int B = 4 pi N2``.
    """
    A, B = coupling_quadrature(nl, sol.u_prime, sol.v_prime)
    du = abs(sol.lam * integrate(g, A) / (FOUR_PI * bg.N1) - 1.0)
    dv = abs(sol.lam * integrate(g, B) / (FOUR_PI * bg.N2) - 1.0)
    return du, dv


def check_lambda_monotonicity(solutions) -> tuple[bool, float]:
    """Whether u and v increase strictly with lambda along ``solutions``.

    Returns ``(ok, worst_gap)`` where ``worst_gap`` is the smallest pointwise
    difference between consecutive solutions (over both species).  Repeated
    lambdas give a zero gap and fail.

    Raises
    ------
    ValueError
        If the solutions are not sorted by lambda or fewer than two are given.
    """
    sols = list(solutions)
    if len(sols) < 2:
        raise ValueError("need at least two solutions")
    lams = [s.lam for s in sols]
    if any(b < a for a, b in zip(lams, lams[1:])):
        raise ValueError(f"solutions are not sorted by lambda: {lams}")
    gap = float("inf")
    for lo, hi in zip(sols, sols[1:]):
        gap = min(gap, float(np.min(hi.u_prime - lo.u_prime)), float(np.min(hi.v_prime - lo.v_prime)))
    return gap > 0, gap


@dataclass
class AprioriNorms:
    mean: float             # average of u over V
    fluct_grad: float       # ||grad (u - mean)||_2
    sobolev: float          # ||u||_{W^{1,2}}
    energy_defect: float    # relative defect of ||grad(u - mean)||^2 = lam int A (u - mean)
    mean_bound: float       # -(1/|V|) int u0; the mean must lie strictly below it


def apriori_norms(g: WeightedGraph, bg: BackgroundPair, nl: Nonlinearity,
                  sol: SolutionPair) -> tuple[AprioriNorms, AprioriNorms]:
    """Mean, fluctuation gradient norm and Sobolev norm of u and v.

    Testing the equation for u against its fluctuation w = u - mean(u) gives
    ``||grad w||^2 = lam int A w``; the relative defect of that identity is
    reported alongside the norms.
    """
    A, B = coupling_quadrature(nl, sol.u_prime, sol.v_prime)
    out = []
    for f, coup, base in ((sol.u, A, bg.u0), (sol.v, B, bg.v0)):
        m = mean(g, f)
        w = f - m
        grad = gradient_l2(g, w)
        rhs = sol.lam * integrate(g, coup * w)
        lhs = grad * grad
        scale = max(abs(lhs), abs(rhs))
        defect = abs(lhs - rhs) / scale if scale > 0 else 0.0
        out.append(AprioriNorms(m, grad, sobolev_norm(g, f), defect, -mean(g, base)))
    return out[0], out[1]


@dataclass
class DiagnosticReport:
    identity_defects: tuple
    sign_margins: tuple
    sobolev_norms: tuple
    mean_fluct: tuple          # ((mean u, ||grad u'||), (mean v, ||grad v'||))
    energy_defects: tuple
    residuals: tuple           # sup-norm defects of the system, re-evaluated
    passed: bool
    failures: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def diagnose(g: WeightedGraph, bg: BackgroundPair, nl: Nonlinearity, sol: SolutionPair,
             identity_tol: float = IDENTITY_TOL, residual_tol: float = RESIDUAL_TOL) -> DiagnosticReport:
    """Run every check on ``sol`` and summarize."""
    margins = sol.sign_margins
    if not max(margins) <= DOMAIN_SLACK:
        # G and H are not defined above 1; nothing else can be evaluated
        nan2 = (float("nan"), float("nan"))
        return DiagnosticReport(nan2, margins, nan2, (nan2, nan2), nan2, nan2, False,
                                (f"sign condition violated: max(u0+u), max(v0+v) = {margins}",))
    ids = check_integral_identities(g, bg, nl, sol)
    nu, nv = apriori_norms(g, bg, nl, sol)
    ru, rv = system_residual(g, bg, nl, sol.lam, sol.u, sol.v)
    res = (float(np.max(np.abs(ru))), float(np.max(np.abs(rv))))

    failures = []
    if not max(ids) <= identity_tol:
        failures.append(f"integral identity defect {max(ids):.3e} > {identity_tol:.0e}")
    if not max(margins) < 0:
        failures.append(f"sign condition violated: max(u0+u), max(v0+v) = {margins}")
    if not max(nu.energy_defect, nv.energy_defect) <= identity_tol:
        failures.append(f"energy identity defect {max(nu.energy_defect, nv.energy_defect):.3e}")
    if not (nu.mean < nu.mean_bound and nv.mean < nv.mean_bound):
        failures.append("mean bound violated")
    if not max(res) <= residual_tol:
        failures.append(f"residual {max(res):.3e} > {residual_tol:.0e}")
    return DiagnosticReport(
        identity_defects=ids,
        sign_margins=margins,
        sobolev_norms=(nu.sobolev, nv.sobolev),
        mean_fluct=((nu.mean, nu.fluct_grad), (nv.mean, nv.fluct_grad)),
        energy_defects=(nu.energy_defect, nv.energy_defect),
        residuals=res,
        passed=not failures,
        failures=tuple(failures),
    )


def max_sobolev_norm(g: WeightedGraph, solutions) -> float:
    """Largest W^{1,2} norm of u or v over ``solutions``; a boundedness report, not a test."""
    return max(max(sobolev_norm(g, s.u), sobolev_norm(g, s.v)) for s in solutions)
