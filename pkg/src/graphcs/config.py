"""Run configuration: a flat ``key = value`` text file.

Each non-blank line not starting with ``#`` reads ``key = value``.  The value
is parsed as JSON when possible (numbers, lists, quoted strings) and kept as
a bare string otherwise, so ``G.kind = polynomial`` works unquoted::

    graph = k4.txt
    G.kind = polynomial
    G.coeffs = [1.0, 2.0]
    H.kind = constant_one
    vortices.species1 = [["0", 1]]
    vortices.species2 = [["1", 1]]
    lambda = 40.0
    bisect_tol = 1e-3
    solver.max_iter = 200000

Recognized keys are listed in ``KEYS``; anything else is an error.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .background import VortexSet
from .nonlinearity import Nonlinearity, NonlinearityModel
from .solver import SolverParams


class ConfigError(ValueError):
    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        self.lineno = lineno
        self.path = path
        where = ":".join(str(x) for x in (path, lineno) if x is not None)
        super().__init__(f"{where}: {message}" if where else message)


_MODEL_KEYS = ("kind", "coeffs", "nodes", "values")
_SOLVER_KEYS = ("K_margin", "tol_step", "tol_residual", "max_iter", "divergence_floor", "monotone_slack")

KEYS = frozenset(
    ["graph", "lambda", "lambda_min", "lambda_max", "steps", "bisect_tol", "epsilons",
     "vortices.species1", "vortices.species2"]
    + [f"{s}.{k}" for s in ("G", "H") for k in _MODEL_KEYS]
    + [f"solver.{k}" for k in _SOLVER_KEYS]
)


def parse_config_text(text: str, path: str | None = None) -> dict:
    """Parse the key-value text into a dict (key -> decoded value)."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno, path)
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            if value[0] in "[{\"":
                raise ConfigError(f"malformed value for {key!r}: {value}", lineno, path) from None
            out[key] = value
    return out


def _model(cfg: dict, prefix: str) -> NonlinearityModel:
    kind = cfg.get(f"{prefix}.kind", "constant_one")
    try:
        if kind == "constant_one":
            return NonlinearityModel.constant_one()
        if kind == "polynomial":
            return NonlinearityModel.polynomial(cfg[f"{prefix}.coeffs"])
        if kind == "tabulated":
            return NonlinearityModel.tabulated(cfg[f"{prefix}.nodes"], cfg[f"{prefix}.values"])
    except KeyError as exc:
        raise ConfigError(f"{prefix}.kind = {kind} needs key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {prefix} model: {exc}") from None
    raise ConfigError(f"unknown {prefix}.kind {kind!r}; use constant_one, polynomial or tabulated")


def _vortices(cfg: dict) -> VortexSet:
    try:
        s1 = cfg["vortices.species1"]
        s2 = cfg["vortices.species2"]
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]!r}") from None
    try:
        # graph files carry string identifiers
        return VortexSet([(str(v), m) for v, m in s1], [(str(v), m) for v, m in s2])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid vortex data: {exc}") from None


def _number(cfg: dict, key: str, kind=float):
    if key not in cfg:
        return None
    val = cfg[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{key} must be a number, got {val!r}")
    if kind is int:
        if int(val) != val:
            raise ConfigError(f"{key} must be an integer, got {val!r}")
        return int(val)
    return float(val)


@dataclass
class RunConfig:
    """Everything a command needs besides the graph itself."""

    vortices: VortexSet
    nonlinearity: Nonlinearity
    solver: SolverParams              # lam is a placeholder until a command sets it
    graph_path: str | None = None
    lam: float | None = None
    lambda_min: float | None = None
    lambda_max: float | None = None
    steps: int | None = None
    bisect_tol: float = 1e-3
    epsilons: list | None = None      # absolute; None means (1e-1, 1e-2, 1e-3) x analytic bound

    def params(self, lam: float) -> SolverParams:
        return self.solver.with_lambda(lam)

    def to_dict(self) -> dict:
        d = {}
        d.update(self.nonlinearity.G.to_config("G"))
        d.update(self.nonlinearity.H.to_config("H"))
        d["vortices.species1"] = [list(x) for x in self.vortices.species1]
        d["vortices.species2"] = [list(x) for x in self.vortices.species2]
        for k in _SOLVER_KEYS:
            d[f"solver.{k}"] = getattr(self.solver, k)
        return d


def build_config(cfg: dict, base_dir: str | None = None) -> RunConfig:
    """Validate a parsed key-value dict and build a RunConfig."""
    nl = Nonlinearity(_model(cfg, "G"), _model(cfg, "H"))
    vortices = _vortices(cfg)
    solver_kw = {}
    for k in _SOLVER_KEYS:
        v = _number(cfg, f"solver.{k}", int if k == "max_iter" else float)
        if v is not None:
            solver_kw[k] = v
    try:
        solver = SolverParams(lam=1.0, **solver_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    graph_path = cfg.get("graph")
    if graph_path is not None:
        if not isinstance(graph_path, str):
            raise ConfigError(f"graph must be a path, got {graph_path!r}")
        if base_dir and not os.path.isabs(graph_path):
            graph_path = os.path.join(base_dir, graph_path)

    eps = cfg.get("epsilons")
    if eps is not None:
        if not isinstance(eps, list) or any(isinstance(e, bool) or not isinstance(e, (int, float)) for e in eps):
            raise ConfigError(f"epsilons must be a list of numbers, got {eps!r}")
        eps = [float(e) for e in eps]

    rc = RunConfig(
        vortices=vortices,
        nonlinearity=nl,
        solver=solver,
        graph_path=graph_path,
        lam=_number(cfg, "lambda"),
        lambda_min=_number(cfg, "lambda_min"),
        lambda_max=_number(cfg, "lambda_max"),
        steps=_number(cfg, "steps", int),
        epsilons=eps,
    )
    tol = _number(cfg, "bisect_tol")
    if tol is not None:
        rc.bisect_tol = tol
    validate(rc)
    return rc


def validate(rc: RunConfig) -> None:
    """Range checks on the numeric fields; raises ConfigError."""
    if rc.lam is not None and not (np.isfinite(rc.lam) and rc.lam > 0):
        raise ConfigError(f"lambda must be positive, got {rc.lam}")
    for name in ("lambda_min", "lambda_max"):
        v = getattr(rc, name)
        if v is not None and not (np.isfinite(v) and v > 0):
            raise ConfigError(f"{name} must be positive, got {v}")
    if rc.lambda_min is not None and rc.lambda_max is not None and rc.lambda_max < rc.lambda_min:
        raise ConfigError("lambda_max is below lambda_min")
    if rc.steps is not None and rc.steps < 0:
        raise ConfigError(f"steps must be >= 0, got {rc.steps}")
    if not (np.isfinite(rc.bisect_tol) and rc.bisect_tol > 0):
        raise ConfigError(f"bisect_tol must be positive, got {rc.bisect_tol}")
    if rc.epsilons is not None and rc.epsilons:
        e = rc.epsilons
        if any(x <= 0 for x in e) or any(b >= a for a, b in zip(e, e[1:])):
            raise ConfigError("epsilons must be positive and strictly decreasing")


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=path) from None
    cfg = parse_config_text(text, path)
    try:
        return build_config(cfg, base_dir=os.path.dirname(os.path.abspath(path)))
    except ConfigError as exc:
        if exc.path is None:
            raise ConfigError(str(exc), path=path) from None
        raise


def with_overrides(rc: RunConfig, **kw) -> RunConfig:
    """Apply command-line overrides (None means 'not given'), then revalidate."""
    solver_kw = {k: kw.pop(k) for k in ("divergence_floor", "max_iter") if k in kw}
    solver_kw = {k: v for k, v in solver_kw.items() if v is not None}
    kw = {k: v for k, v in kw.items() if v is not None}
    try:
        out = replace(rc, solver=replace(rc.solver, **solver_kw), **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    validate(out)
    return out

