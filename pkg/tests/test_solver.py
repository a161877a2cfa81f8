import numpy as np
import pytest

from graphcs.background import FOUR_PI, VortexSet, compute_background
from graphcs.critical import analytic_lower_bound
from graphcs.graph import complete_graph, cycle_graph
from graphcs.linalg import ShiftedOperator
from graphcs.nonlinearity import Nonlinearity, NonlinearityModel, eval_g, eval_G
from graphcs.solver import (
    BUDGET_EXCEEDED,
    CONVERGED,
    DIVERGED,
    EnvelopeError,
    MonotonicityError,
    SolverParams,
    _stack,
    check_lower_solution,
    constant_lower_solution,
    coupling_block,
    coupling_block_classical,
    coupling_terms,
    iterate_once,
    rhs_system,
    solve_maximal,
    solve_maximal_classical,
    system_residual,
)

from conftest import poly_nonlinearity

CLASSICAL = Nonlinearity.classical()
POLY = poly_nonlinearity()


def test_params_validation():
    for kw in ({"lam": 0.0}, {"lam": -1.0}, {"lam": 1.0, "K_margin": 0.0},
               {"lam": 1.0, "tol_step": 0.0}, {"lam": 1.0, "max_iter": 0}):
        with pytest.raises(ValueError):
            SolverParams(**kw)
    p = SolverParams(lam=2.0)
    assert p.shift(POLY) == pytest.approx(1.5 * 2.0 * 3.0 * 2.0)
    assert p.with_lambda(5.0).lam == 5.0 and p.lam == 2.0


def test_rhs_at_start_point_is_constant(k2):
    g, bg = k2
    for nl in (CLASSICAL, POLY):
        Fu, Fv = rhs_system(g, bg, nl, 7.0, -bg.u0, -bg.v0)
        assert np.all(Fu == FOUR_PI * bg.N1 / g.volume)
        assert np.all(Fv == FOUR_PI * bg.N2 / g.volume)


def test_rhs_classical_formula(k2, rng):
    g, bg = k2
    u = -bg.u0 - rng.uniform(0, 2, size=2)
    v = -bg.v0 - rng.uniform(0, 2, size=2)
    Fu, _ = rhs_system(g, bg, CLASSICAL, 3.0, u, v)
    tu, tv = np.exp(bg.u0 + u), np.exp(bg.v0 + v)
    assert np.allclose(Fu, -3.0 * tv * (1 - tu) + 2 * np.pi, rtol=1e-14)


def test_rhs_matches_pointwise_oracle(rng):
    g = complete_graph(3)
    bg = compute_background(g, VortexSet([(0, 1)], [(2, 2)]))
    u = -bg.u0 - rng.uniform(0, 3, size=3)
    v = -bg.v0 - rng.uniform(0, 3, size=3)
    lam = 4.2
    Fu, Fv = rhs_system(g, bg, POLY, lam, u, v)
    for x in range(3):
        tu, tv = np.exp(bg.u0[x] + u[x]), np.exp(bg.v0[x] + v[x])
        fu = -lam * tv * eval_G(POLY.H, tv) * eval_g(POLY.G, tu) + FOUR_PI * 1 / 3
        fv = -lam * tu * eval_G(POLY.G, tu) * eval_g(POLY.H, tv) + FOUR_PI * 2 / 3
        assert Fu[x] == pytest.approx(fu, rel=1e-13)
        assert Fv[x] == pytest.approx(fv, rel=1e-13)


def test_envelope_violation(k2):
    g, bg = k2
    with pytest.raises(EnvelopeError):
        rhs_system(g, bg, CLASSICAL, 1.0, -bg.u0 + 1e-6, -bg.v0)


def test_classical_block_matches_general(rng):
    Z = -rng.uniform(0, 5, size=(30, 2))
    Z[:3] = -rng.uniform(0, 1e-12, size=(3, 2))
    assert np.allclose(coupling_block(CLASSICAL, Z), coupling_block_classical(Z), rtol=1e-14, atol=0)
    A, B = coupling_terms(CLASSICAL, Z[:, 0], Z[:, 1])
    assert np.array_equal(_stack(A, B), coupling_block(CLASSICAL, Z))


def test_first_step_is_shifted_solve_of_sources():
    g = cycle_graph(6, weight=2.0)
    bg = compute_background(g, VortexSet([(0, 1), (3, 1)], [(1, 2)]))
    for nl in (CLASSICAL, POLY):
        lam = 5.0
        K = SolverParams(lam=lam).shift(nl)
        op = ShiftedOperator(g, K)
        step = iterate_once(g, _stack(bg.source_u, bg.source_v), lambda Z: coupling_block(nl, Z),
                            lam, op, np.zeros((len(g), 2)))
        du, dv = step.p, step.q          # u_2 - u_1, since u_1 = -u0
        assert np.allclose(du, op.solve(bg.source_u), rtol=0, atol=1e-10)
        assert np.allclose(dv, op.solve(bg.source_v), rtol=0, atol=1e-10)
        assert np.all(du < 0) and np.all(dv < 0)


def test_increase_raises_monotonicity_error(k2):
    g, bg = k2
    op = ShiftedOperator(g, 150.0)
    # a steep state whose Laplacian outweighs the source at vertex 1 is pushed upward
    steep = np.array([[0.0, 0.0], [-50.0, -50.0]])
    with pytest.raises(MonotonicityError):
        iterate_once(g, _stack(bg.source_u, bg.source_v), coupling_block_classical, 100.0, op, steep)


def test_k2_classical_lambda_100(k2):
    g, bg = k2
    out = solve_maximal(g, bg, CLASSICAL, SolverParams(lam=100.0))
    assert out.status == CONVERGED and out.converged
    sol = out.solution
    ru, rv = system_residual(g, bg, CLASSICAL, 100.0, sol.u, sol.v)
    assert max(np.max(np.abs(ru)), np.max(np.abs(rv))) <= 1e-10
    assert max(sol.sign_margins) < 0
    assert np.allclose(bg.u0 + sol.u, sol.u_prime, rtol=0, atol=1e-14)
    assert out.monotone_checks == out.iterations + 1
    assert out.max_increment <= 1e-13 * 10


def test_trace_means_decrease(k2):
    g, bg = k2
    out = solve_maximal(g, bg, CLASSICAL, SolverParams(lam=100.0), record_trace=True)
    means = [t[1] for t in out.trace]
    assert len(out.trace) == out.iterations + 1
    assert all(b <= a for a, b in zip(means, means[1:]))


@pytest.mark.parametrize("nl", [CLASSICAL, POLY], ids=["classical", "poly"])
def test_below_bound_diverges_and_far_above_converges(k2, nl):
    g, bg = k2
    bound = analytic_lower_bound(g, bg, nl)
    low = solve_maximal(g, bg, nl, SolverParams(lam=0.5 * bound))
    assert low.status == DIVERGED and low.diverged and low.solution is None
    assert min(low.mean_u, low.mean_v) < -100
    high = solve_maximal(g, bg, nl, SolverParams(lam=20 * bound))
    assert high.status == CONVERGED


def test_divergence_floor_is_respected(k2):
    g, bg = k2
    out = solve_maximal(g, bg, CLASSICAL, SolverParams(lam=3.0, divergence_floor=-10.0))
    assert out.status == DIVERGED and -11 < min(out.mean_u, out.mean_v) < -10


def test_budget_exceeded(k2):
    g, bg = k2
    out = solve_maximal(g, bg, CLASSICAL, SolverParams(lam=50.0, max_iter=5))
    assert out.status == BUDGET_EXCEEDED and out.iterations == 5 and out.solution is None


def test_gauge_shift_leaves_originals_unchanged(k2):
    g = cycle_graph(5, weight=3.0)
    bg = compute_background(g, VortexSet([(0, 1)], [(2, 1)]))
    shifted = bg.shifted(1.7, -0.4)
    a = solve_maximal(g, bg, POLY, SolverParams(lam=8.0)).solution
    b = solve_maximal(g, shifted, POLY, SolverParams(lam=8.0)).solution
    assert np.allclose(shifted.u0 + b.u, bg.u0 + a.u, rtol=0, atol=1e-8)
    assert np.allclose(shifted.v0 + b.v, bg.v0 + a.v, rtol=0, atol=1e-8)
    assert np.allclose(b.u, a.u - 1.7, rtol=0, atol=1e-8)


def test_classical_code_path_agrees(k2):
    g, bg = k2
    p = SolverParams(lam=60.0)
    a = solve_maximal(g, bg, CLASSICAL, p).solution
    b = solve_maximal_classical(g, bg, p).solution
    assert np.max(np.abs(a.u - b.u)) <= 1e-10 and np.max(np.abs(a.v - b.v)) <= 1e-10


def test_constant_lower_solution(k2):
    g, bg = k2
    for nl in (CLASSICAL, POLY):
        um, vm, lam_min = constant_lower_solution(g, bg, nl)
        assert np.all(um == um[0]) and um[0] < -np.max(bg.u0)
        assert check_lower_solution(g, bg, nl, 1.01 * lam_min, um, vm)
        rep = check_lower_solution(g, bg, nl, 0.9 * lam_min, um, vm)
        assert not rep and rep.slack < 0


def test_solution_is_lower_solution_at_larger_lambda(k2):
    g, bg = k2
    sol = solve_maximal(g, bg, POLY, SolverParams(lam=20.0)).solution
    rep = check_lower_solution(g, bg, POLY, 25.0, sol.u, sol.v)
    assert rep.ok and rep.slack > 0
    assert check_lower_solution(g, bg, POLY, 20.0, sol.u, sol.v, tol=1e-9)


def test_lower_solution_rejects_bad_candidates():
    g = cycle_graph(5)
    bg = compute_background(g, VortexSet([(0, 1)], [(2, 1)]))
    # at lambda = 0 the inequality reads Delta u_- >= 4 pi N1 / |V| > 0, false at a maximum
    u = -bg.u0 - 5 + np.array([0.0, 1.0, 0.0, -1.0, 0.0])
    rep = check_lower_solution(g, bg, CLASSICAL, 0.0, u, -bg.v0 - 5)
    assert not rep.ok and rep.slack_u < 0
    # a pair leaving the envelope is reported, not raised
    rep = check_lower_solution(g, bg, CLASSICAL, 1.0, -bg.u0 + 1.0, -bg.v0 - 1)
    assert not rep.ok and "exceeds" in rep.reason


def test_tabulated_unit_model_matches_classical(k2):
    g, bg = k2
    flat = NonlinearityModel.tabulated([0.0, 0.5, 1.0], [1.0, 1.0, 1.0])
    p = SolverParams(lam=80.0)
    a = solve_maximal(g, bg, Nonlinearity(flat, flat), p).solution
    b = solve_maximal_classical(g, bg, p).solution
    assert np.max(np.abs(a.u - b.u)) <= 1e-10
