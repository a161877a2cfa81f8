"""Monotone iteration for the maximal solution of the shifted system.

Unknowns (u, v) solve

    Delta u = -lam e^{v0+v} H(e^{v0+v}) g(e^{u0+u}) + 4 pi N1 / |V|
    Delta v = -lam e^{u0+u} G(e^{u0+u}) h(e^{v0+v}) + 4 pi N2 / |V|

and the iteration starts at (-u0, -v0) with

    (Delta - K) u_{n+1} = F_u(u_n, v_n) - K u_n,   K > lam G(1) H(1),

which produces a pointwise strictly decreasing sequence.

Numerics
--------
The iterates are carried as ``p_n = u0 + u_n`` and ``q_n = v0 + v_n`` (the
same sequence shifted by a fixed field), and every step is taken in
defect-correction form

    (Delta - K)(p_{n+1} - p_n) = -(Delta p_n - 4 pi sum delta + lam A(p_n, q_n)),

with ``A(p, q) = e^q H(e^q) g(e^p)``.  Since ``Delta u0 = -4 pi N1/|V| + 4 pi
sum delta``, this is exactly the update above.  Keeping p instead of u avoids
the cancellation in ``u0 + u``: far from the vortices p is a tiny negative
number that would otherwise be lost below the rounding level of u0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .background import FOUR_PI, BackgroundPair
from .graph import WeightedGraph, _laplacian_cols, laplacian
from .linalg import ShiftedOperator
from .nonlinearity import DOMAIN_SLACK, DomainError, Nonlinearity

log = logging.getLogger(__name__)

CONVERGED = "converged"
DIVERGED = "diverged"
BUDGET_EXCEEDED = "budget_exceeded"

# the solver's own residual must clear tol_residual by this factor so that an
# independent re-evaluation, which differs by rounding, stays below it too
RESIDUAL_HEADROOM = 0.5


class MonotonicityError(RuntimeError):
    """An iterate failed to decrease pointwise: K too small or a bad linear solve."""


class EnvelopeError(DomainError):
    """u0 + u became positive; the iteration left the region it provably stays in."""


@dataclass(frozen=True)
class SolverParams:
    lam: float
    K_margin: float = 0.5
    tol_step: float = 1e-12
    tol_residual: float = 1e-10
    max_iter: int = 100_000
    divergence_floor: float = -100.0
    monotone_slack: float = 1e-13

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.K_margin > 0:
            raise ValueError("K_margin must be positive")
        if not (self.tol_step > 0 and self.tol_residual > 0 and self.monotone_slack > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")

    def shift(self, nl: Nonlinearity) -> float:
        """K = (1 + margin) lam G(1) H(1)."""
        return (1.0 + self.K_margin) * self.lam * nl.G1H1

    def with_lambda(self, lam: float) -> "SolverParams":
        return replace(self, lam=float(lam))


@dataclass
class SolutionPair:
    """Converged (u, v) of the shifted system at a given lambda.

    ``u_prime = u0 + u`` and ``v_prime = v0 + v`` are the solutions of the
    original system with Dirac sources; they are the solver's working variables
    and so are accurate even where they are tiny.
    """

    u: np.ndarray
    v: np.ndarray
    lam: float
    iterations: int
    residual_u: float
    residual_v: float
    u_prime: np.ndarray
    v_prime: np.ndarray

    @property
    def residual(self) -> float:
        return max(self.residual_u, self.residual_v)

    @property
    def sign_margins(self) -> tuple[float, float]:
        """max(u0 + u), max(v0 + v); both must be negative."""
        return float(np.max(self.u_prime)), float(np.max(self.v_prime))


@dataclass
class IterationOutcome:
    status: str
    lam: float
    iterations: int
    solution: SolutionPair | None = None
    mean_u: float = float("nan")
    mean_v: float = float("nan")
    step: float = float("inf")
    residual: float = float("inf")
    # largest pointwise increment seen; stays <= the monotonicity slack
    max_increment: float = float("-inf")
    monotone_checks: int = 0
    trace: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def diverged(self) -> bool:
        return self.status == DIVERGED


# ---------------------------------------------------------------------------
# nonlinear terms
# ---------------------------------------------------------------------------

def _check_envelope(Z):
    if not np.max(Z) <= DOMAIN_SLACK:
        raise EnvelopeError(
            f"e^(u0+u) or e^(v0+v) exceeds 1: max(u0+u)={np.max(Z[:, 0]):.3e}, "
            f"max(v0+v)={np.max(Z[:, 1]):.3e}"
        )


def _stack(p, q) -> np.ndarray:
    return np.column_stack([np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)])


def coupling_block(nl: Nonlinearity, Z: np.ndarray) -> np.ndarray:
    """Columns A = e^q H(e^q) g(e^p) and B = e^p G(e^p) h(e^q) for Z = [p, q] <= 0."""
    _check_envelope(Z)
    Z = np.minimum(Z, 0.0)
    p, q = Z[:, 0], Z[:, 1]
    tp, tq = np.exp(p), np.exp(q)
    out = np.empty_like(Z)
    out[:, 0] = tq * nl.H._G(tq) * nl.G._g_exp(p)
    out[:, 1] = tp * nl.G._G(tp) * nl.H._g_exp(q)
    return out


def coupling_block_classical(Z: np.ndarray) -> np.ndarray:
    """The same columns for G = H = 1, i.e. g(t) = h(t) = 1 - t."""
    _check_envelope(Z)
    Z = np.minimum(Z, 0.0)
    # A = e^q (1 - e^p), B = e^p (1 - e^q)
    return np.exp(Z[:, ::-1]) * -np.expm1(Z)


def coupling_terms(nl: Nonlinearity, p, q):
    """A = e^q H(e^q) g(e^p) and B = e^p G(e^p) h(e^q) for p, q <= 0."""
    C = coupling_block(nl, _stack(p, q))
    return C[:, 0], C[:, 1]


def coupling_terms_classical(p, q):
    """A, B for G = H = 1."""
    C = coupling_block_classical(_stack(p, q))
    return C[:, 0], C[:, 1]


def rhs_system(g: WeightedGraph, bg: BackgroundPair, nl: Nonlinearity, lam: float, u, v):
    """Pointwise right-hand sides (F_u, F_v) of the shifted system."""
    A, B = coupling_terms(nl, bg.u0 + g._check(u), bg.v0 + g._check(v))
    return (-lam * A + FOUR_PI * bg.N1 / g.volume,
            -lam * B + FOUR_PI * bg.N2 / g.volume)


def system_residual(g, bg, nl, lam, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Delta u - F_u and Delta v - F_v, evaluated directly in the shifted variables."""
    Fu, Fv = rhs_system(g, bg, nl, lam, u, v)
    return laplacian(g, u) - Fu, laplacian(g, v) - Fv


# ---------------------------------------------------------------------------
# iteration
# ---------------------------------------------------------------------------

class Step(NamedTuple):
    Z: np.ndarray            # columns u0 + u_{n+1}, v0 + v_{n+1}
    R: np.ndarray            # defect of the system at the *input* state, same layout
    step: float              # sup-norm of the increment
    max_increment: float     # max over vertices of u_{n+1} - u_n, v_{n+1} - v_n

    @property
    def p(self) -> np.ndarray:
        return self.Z[:, 0]

    @property
    def q(self) -> np.ndarray:
        return self.Z[:, 1]


def iterate_once(g: WeightedGraph, sources: np.ndarray, terms: Callable, lam: float,
                 op: ShiftedOperator, Z: np.ndarray, slack: float = 1e-13) -> Step:
    """One step of the monotone scheme from Z = [u0 + u_n, v0 + v_n].

    ``sources`` holds the columns 4 pi sum delta of both species and
    ``terms(Z)`` returns the coupling columns [A, B].  Raises
    MonotonicityError unless every increment is <= ``slack * max(1, |Z|)``.
    """
    R = _laplacian_cols(g, Z) - sources + lam * terms(Z)
    D = op.solve(-R)
    inc = float(np.max(D))
    allowed = slack * max(1.0, float(np.max(np.abs(Z))))
    if not inc <= allowed:
        which = "uv"[int(np.unravel_index(np.argmax(D), D.shape)[1])]
        raise MonotonicityError(
            f"iterate of {which} increased by {inc:.3e} at lam={lam} (allowed {allowed:.1e}, K={op.K})"
        )
    return Step(Z + D, R, float(np.max(np.abs(D))), inc)


def run_iteration(g: WeightedGraph, bg: BackgroundPair, terms: Callable, K: float,
                  params: SolverParams, record_trace: bool = False) -> IterationOutcome:
    """Iterate from (u, v) = (-u0, -v0) until converged, diverged or out of budget.

    ``terms`` maps the stacked state [u0 + u, v0 + v] to the coupling columns.
    """
    op = ShiftedOperator(g, K)
    lam = params.lam
    sources = _stack(bg.source_u, bg.source_v)
    weights = g.mu / g.volume
    mean0 = weights @ _stack(bg.u0, bg.v0)
    Z = np.zeros((len(g), 2))
    step = float("inf")
    max_inc = float("-inf")
    trace = []
    n = 0
    while True:
        nxt = iterate_once(g, sources, terms, lam, op, Z, params.monotone_slack)
        max_inc = max(max_inc, nxt.max_increment)
        res_u, res_v = np.max(np.abs(nxt.R), axis=0)
        res = max(res_u, res_v)
        mu_, mv_ = weights @ Z - mean0
        if record_trace:
            trace.append((n, float(mu_), float(mv_), step, float(res)))
        if step < params.tol_step and res < RESIDUAL_HEADROOM * params.tol_residual:
            p, q = Z[:, 0].copy(), Z[:, 1].copy()
            sol = SolutionPair(p - bg.u0, q - bg.v0, lam, n, float(res_u), float(res_v), p, q)
            log.debug("lam=%g converged after %d iterations (residual %.2e)", lam, n, res)
            status = CONVERGED
        elif mu_ < params.divergence_floor or mv_ < params.divergence_floor:
            log.debug("lam=%g diverged after %d iterations", lam, n)
            status, sol = DIVERGED, None
        elif n >= params.max_iter:
            log.debug("lam=%g exhausted %d iterations (step %.2e, residual %.2e)", lam, n, step, res)
            status, sol = BUDGET_EXCEEDED, None
        else:
            Z, step = nxt.Z, nxt.step
            n += 1
            continue
        return IterationOutcome(status, lam, n, sol, mean_u=float(mu_), mean_v=float(mv_),
                                step=step, residual=float(res), max_increment=max_inc,
                                monotone_checks=n + 1, trace=trace)


def solve_maximal(g: WeightedGraph, bg: BackgroundPair, nl: Nonlinearity,
                  params: SolverParams, record_trace: bool = False) -> IterationOutcome:
    """Maximal solution at ``params.lam`` or a certificate that the iteration runs off.

    Returns an outcome tagged ``converged`` (last step below ``tol_step`` and
    system residual below ``tol_residual``), ``diverged`` (mean of u or v
    below ``divergence_floor``) or ``budget_exceeded``.
    """
    terms = lambda Z: coupling_block(nl, Z)
    return run_iteration(g, bg, terms, params.shift(nl), params, record_trace)


def solve_maximal_classical(g: WeightedGraph, bg: BackgroundPair,
                            params: SolverParams) -> IterationOutcome:
    """Same iteration with G = H = 1 hard-wired (g(t) = 1 - t in closed form)."""
    return run_iteration(g, bg, coupling_block_classical, (1.0 + params.K_margin) * params.lam, params)


# ---------------------------------------------------------------------------
# lower solutions
# ---------------------------------------------------------------------------

@dataclass
class LowerSolutionReport:
    ok: bool
    slack_u: float
    slack_v: float
    reason: str = ""

    @property
    def slack(self) -> float:
        return min(self.slack_u, self.slack_v)

    def __bool__(self) -> bool:
        return self.ok


def check_lower_solution(g: WeightedGraph, bg: BackgroundPair, nl: Nonlinearity, lam: float,
                         u_minus, v_minus, tol: float = 1e-12) -> LowerSolutionReport:
    """Test Delta u_- >= F_u(u_-, v_-) and Delta v_- >= F_v(u_-, v_-) pointwise.

    The slacks are the minima over vertices of ``Delta u_- - F_u``; the pair is
    a lower solution when both are at least ``-tol``.
    """
    u_minus = g._check(u_minus)
    v_minus = g._check(v_minus)
    try:
        ru, rv = system_residual(g, bg, nl, lam, u_minus, v_minus)
    except EnvelopeError as exc:
        return LowerSolutionReport(False, float("-inf"), float("-inf"), str(exc))
    su, sv = float(np.min(ru)), float(np.min(rv))
    return LowerSolutionReport(su >= -tol and sv >= -tol, su, sv)


def constant_lower_solution(g: WeightedGraph, bg: BackgroundPair, nl: Nonlinearity,
                            margin: float = 1.0):
    """Constant pair (-c1, -c2) with c1 = max u0 + margin, c2 = max v0 + margin.

    Returns ``(u_minus, v_minus, lam_min)`` where ``lam_min`` is the smallest
    lambda for which the pair is a lower solution.
    """
    c1 = float(np.max(bg.u0)) + margin
    c2 = float(np.max(bg.v0)) + margin
    u_minus = np.full(len(g), -c1)
    v_minus = np.full(len(g), -c2)
    A, B = coupling_terms(nl, bg.u0 - c1, bg.v0 - c2)
    lam_min = max(FOUR_PI * bg.N1 / g.volume / float(np.min(A)),
                  FOUR_PI * bg.N2 / g.volume / float(np.min(B)))
    return u_minus, v_minus, lam_min
