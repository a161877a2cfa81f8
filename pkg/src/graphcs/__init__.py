"""Generalized self-dual Chern-Simons vortex system on finite weighted graphs.

Maximal solutions by monotone iteration, bracketing of the critical coupling,
and independent diagnostics of converged solutions.
"""

__version__ = "0.1.0"

from .background import BackgroundPair, VortexSet, compute_background, dirac_field
from .critical import (
    CriticalResult,
    analytic_lower_bound,
    find_critical,
    near_critical_solution,
)
from .diagnostics import (
    DiagnosticReport,
    apriori_norms,
    check_integral_identities,
    check_lambda_monotonicity,
    diagnose,
)
from .graph import (
    WeightedGraph,
    complete_graph,
    cycle_graph,
    gamma,
    integrate,
    laplacian,
    load_graph,
    parse_graph,
    path_graph,
    random_connected_graph,
    sobolev_norm,
)
from .linalg import ShiftedOperator, solve_poisson_mean_zero, solve_shifted
from .nonlinearity import Nonlinearity, NonlinearityModel
from .solver import (
    IterationOutcome,
    SolutionPair,
    SolverParams,
    check_lower_solution,
    solve_maximal,
)
