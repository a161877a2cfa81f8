import json

import numpy as np
import pytest

from graphcs.config import ConfigError, build_config, load_config, parse_config_text, with_overrides
from graphcs.graph import complete_graph
from graphcs.serialize import SCAN_COLUMNS, dumps, read_solution, solution_document, write_scan
from graphcs.solver import SolverParams, solve_maximal

from conftest import poly_nonlinearity

BASIC = """\
# comment
G.kind = polynomial
G.coeffs = [1.0, 2.0]
H.kind = "constant_one"
vortices.species1 = [["v3", 1], ["v7", 2]]
vortices.species2 = [[1, 1]]
lambda = 12.5
solver.max_iter = 500
"""


def test_parse_basic_config():
    cfg = parse_config_text(BASIC)
    assert cfg["G.kind"] == "polynomial" and cfg["H.kind"] == "constant_one"
    rc = build_config(cfg)
    assert rc.nonlinearity.G.coeffs == (1.0, 2.0) and rc.nonlinearity.H.kind == "constant_one"
    assert rc.vortices.species1 == (("v3", 1), ("v7", 2)) and rc.vortices.species2 == (("1", 1),)
    assert rc.vortices.N1 == 3
    assert rc.lam == 12.5 and rc.solver.max_iter == 500 and rc.solver.K_margin == 0.5
    assert rc.bisect_tol == 1e-3 and rc.epsilons is None
    assert rc.params(3.0).lam == 3.0


@pytest.mark.parametrize("text, lineno, msg", [
    ("foo = 1\n", 1, "unknown key"),
    ("lambda = 1\nlambda = 2\n", 2, "duplicate"),
    ("# c\nlambda\n", 2, "key = value"),
    ("lambda = \n", 1, "empty"),
    ("G.coeffs = [1, 2\n", 1, "malformed"),
])
def test_config_syntax_errors(text, lineno, msg):
    with pytest.raises(ConfigError, match=msg) as exc:
        parse_config_text(text, "run.cfg")
    assert exc.value.lineno == lineno and str(exc.value).startswith(f"run.cfg:{lineno}:")


@pytest.mark.parametrize("extra, msg", [
    ("G.kind = cubic\n", "unknown G.kind"),
    ("G.kind = polynomial\n", "needs key"),
    ("G.kind = polynomial\nG.coeffs = [0, 1]\n", "invalid G model"),
    ("lambda = -1\n", "positive"),
    ("lambda = \"x\"\n", "number"),
    ("solver.max_iter = 1.5\n", "integer"),
    ("solver.K_margin = 0\n", "K_margin"),
    ("bisect_tol = 0\n", "bisect_tol"),
    ("epsilons = [0.1, 0.2]\n", "decreasing"),
    ("lambda_min = 5\nlambda_max = 1\n", "below"),
    ("steps = -1\n", "steps"),
])
def test_config_semantic_errors(extra, msg):
    text = "vortices.species1 = [[0, 1]]\nvortices.species2 = [[0, 1]]\n" + extra
    with pytest.raises(ConfigError, match=msg):
        build_config(parse_config_text(text))


def test_missing_vortices():
    with pytest.raises(ConfigError, match="vortices"):
        build_config(parse_config_text("lambda = 1\n"))


def test_load_config_resolves_graph_path(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(BASIC + "graph = g.txt\n")
    rc = load_config(str(p))
    assert rc.graph_path == str(tmp_path / "g.txt")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.cfg"))


def test_overrides():
    rc = build_config(parse_config_text(BASIC))
    rc2 = with_overrides(rc, lam=3.0, max_iter=7, divergence_floor=-5.0, steps=None)
    assert rc2.lam == 3.0 and rc2.solver.max_iter == 7 and rc2.solver.divergence_floor == -5.0
    assert rc.lam == 12.5
    with pytest.raises(ConfigError):
        with_overrides(rc, lam=-1.0)


def test_config_round_trip():
    rc = build_config(parse_config_text(BASIC))
    again = build_config(json.loads(dumps(rc.to_dict())))
    assert again.to_dict() == rc.to_dict()


def test_dumps_format():
    text = dumps({"b": 0.1, "a": [1, 2.5, None, True], "n": float("nan"), "s": "x\"y", "e": {}, "l": []})
    assert text.index('"b"') < text.index('"a"')
    assert '"b": 0.10000000000000001' in text
    assert '[1, 2.5, null, true]' in text and '"n": null' in text
    assert json.loads(text)["s"] == 'x"y'
    assert float(json.loads(dumps({"x": np.float64(1 / 3)}))["x"]) == 1 / 3
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_solution_document_round_trip(k2):
    g, bg = k2
    out = solve_maximal(g, bg, poly_nonlinearity(), SolverParams(lam=30.0))
    doc = json.loads(dumps(solution_document(g, out, {}, None)))
    sol = read_solution(doc, g)
    for a, b in ((sol.u, out.solution.u), (sol.v_prime, out.solution.v_prime)):
        assert np.array_equal(a, b)
    assert sol.lam == 30.0 and sol.residual_u == out.solution.residual_u
    with pytest.raises(ValueError, match="different graph"):
        read_solution(doc, complete_graph(2, weight=2.0))
    doc["format"] = "other"
    with pytest.raises(ValueError, match="format"):
        read_solution(doc, g)


def test_write_scan(tmp_path):
    p = tmp_path / "scan.csv"
    with open(p, "w", newline="") as fh:
        write_scan([{"lambda": 1.0, "outcome": "diverged", "iterations": 3, "mean_u": float("nan")}], fh)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(SCAN_COLUMNS)
    assert lines[1] == "1,diverged,3,,,,,,"
