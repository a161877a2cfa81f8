import os
import sys

import numpy as np
import pytest

from graphcs.background import VortexSet, compute_background
from graphcs.graph import complete_graph, cycle_graph, path_graph, random_connected_graph
from graphcs.nonlinearity import Nonlinearity, NonlinearityModel
import graphcs.solver as solver_mod

sys.path.insert(0, os.path.dirname(__file__))


def poly_nonlinearity() -> Nonlinearity:
    # G(t) = 1 + 2t, H(t) = 0.5 + 0.5t + t^2
    return Nonlinearity(NonlinearityModel.polynomial([1.0, 2.0]),
                        NonlinearityModel.polynomial([0.5, 0.5, 1.0]))


def instances():
    """The five test graphs with their vortex placements.

    Weights on the sparser graphs are raised so that the constant lower
    solution becomes admissible at a moderate lambda.
    """
    return [
        ("K2", complete_graph(2), VortexSet([(0, 1)], [(0, 1)])),
        ("K4", complete_graph(4), VortexSet([(0, 1)], [(1, 1)])),
        ("C10", cycle_graph(10, weight=4.0), VortexSet([(0, 1)], [(5, 1)])),
        ("P20", path_graph(20, weight=10.0), VortexSet([(5, 1)], [(14, 1)])),
        ("R50", random_connected_graph(50, 40, seed=1, weight_range=(2.0, 5.0)),
         VortexSet([(3, 1)], [(17, 1)])),
    ]


NONLINEARITIES = [("classical", Nonlinearity.classical()), ("poly", poly_nonlinearity())]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def k2():
    g = complete_graph(2)
    bg = compute_background(g, VortexSet([(0, 1)], [(0, 1)]))
    return g, bg


class MonotoneObserver:
    """Checks u_{n+1} < u_n and v_{n+1} < v_n at every step the solver takes.

    The check is made on the iterates themselves, independently of the
    solver's own tolerance-based guard.
    """

    def __init__(self):
        self.checked = 0
        self.violations = []
        self.max_increment = float("-inf")

    def wrap(self, step_fn):
        def observed(g, sources, terms, lam, op, Z, *args, **kw):
            st = step_fn(g, sources, terms, lam, op, Z, *args, **kw)
            inc = float(np.max(st.Z - Z))
            self.checked += 1
            self.max_increment = max(self.max_increment, inc)
            if not inc < 0:
                self.violations.append((lam, inc))
            return st
        return observed


OBSERVER = MonotoneObserver()


@pytest.fixture(scope="session", autouse=True)
def monotone_observer():
    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(solver_mod, "iterate_once", OBSERVER.wrap(solver_mod.iterate_once))
        yield OBSERVER
    assert not OBSERVER.violations, f"non-decreasing iterations: {OBSERVER.violations[:5]}"


@pytest.fixture(autouse=True)
def _no_new_violations():
    before = len(OBSERVER.violations)
    yield
    assert len(OBSERVER.violations) == before, f"non-decreasing iterations: {OBSERVER.violations[before:][:5]}"


ACCEPTANCE_LINES = {}


def report_criterion(k: int, ok: bool, detail: str) -> None:
    """Record and print the one-line verdict for acceptance criterion ``k``."""
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
