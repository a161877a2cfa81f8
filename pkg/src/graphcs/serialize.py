"""Deterministic JSON and CSV output.

Floats are written with 17 significant digits (``%.17g``), which round-trips
every double exactly; dictionaries keep insertion order.  Identical inputs
therefore give byte-identical files.  Non-finite floats become ``null``.
"""

from __future__ import annotations

import csv
import json
import math
from typing import Any, TextIO

import numpy as np

from .graph import WeightedGraph
from .solver import IterationOutcome, SolutionPair

FORMAT = "graphcs-solution"
VERSION = 1


def _float(x: float) -> str:
    return "%.17g" % x if math.isfinite(x) else "null"


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text for dicts, lists, tuples, strings, numbers, bools and None."""
    out: list[str] = []

    def emit(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None or isinstance(o, (bool, np.bool_)):
            out.append(json.dumps(None if o is None else bool(o)))
        elif isinstance(o, (int, np.integer)):
            out.append(str(int(o)))
        elif isinstance(o, (float, np.floating)):
            out.append(_float(float(o)))
        elif isinstance(o, str):
            out.append(json.dumps(o))
        elif isinstance(o, dict):
            if not o:
                out.append("{}")
                return
            out.append("{\n")
            for k, (key, val) in enumerate(o.items()):
                out.append(pad + json.dumps(str(key)) + ": ")
                emit(val, level + 1)
                out.append(",\n" if k < len(o) - 1 else "\n")
            out.append(end + "}")
        elif isinstance(o, (list, tuple, np.ndarray)):
            items = list(o)
            if not items:
                out.append("[]")
            elif all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in items):
                # flat arrays on one line
                out.append("[")
                for k, x in enumerate(items):
                    if k:
                        out.append(", ")
                    emit(x, level + 1)
                out.append("]")
            else:
                out.append("[\n")
                for k, x in enumerate(items):
                    out.append(pad)
                    emit(x, level + 1)
                    out.append(",\n" if k < len(items) - 1 else "\n")
                out.append(end + "]")
        else:
            raise TypeError(f"cannot serialize {type(o).__name__}")

    emit(obj, 0)
    return "".join(out) + "\n"


def vertex_table(g: WeightedGraph, sol: SolutionPair) -> list[dict]:
    return [
        {"id": vid, "u": sol.u[i], "v": sol.v[i], "u_prime": sol.u_prime[i], "v_prime": sol.v_prime[i]}
        for i, vid in enumerate(g.vertex_ids)
    ]


def solution_document(g: WeightedGraph, outcome: IterationOutcome, config: dict,
                      diagnostics: dict | None) -> dict:
    """The solution file: outcome, per-vertex fields, residuals and diagnostics.

    ``config`` holds the model and vortex keys needed to re-verify the file.
    """
    sol = outcome.solution
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "lambda": outcome.lam,
        "outcome": outcome.status,
        "iterations": outcome.iterations,
        "graph_digest": g.digest(),
        "vertex_ids": list(g.vertex_ids),
        "config": config,
        "mean_u": outcome.mean_u,
        "mean_v": outcome.mean_v,
        "step": outcome.step,
        "residuals": None if sol is None else {"u": sol.residual_u, "v": sol.residual_v},
        "vertices": None if sol is None else vertex_table(g, sol),
        "diagnostics": diagnostics,
    }
    return doc


def read_solution(doc: dict, g: WeightedGraph) -> SolutionPair:
    """Rebuild the SolutionPair stored in ``doc``, checking it belongs to ``g``.

    Raises
    ------
    ValueError
        On schema mismatch or when the graph digest or vertex list differ.
    """
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise ValueError("not a solution file (format/version mismatch)")
    if doc.get("graph_digest") != g.digest() or doc.get("vertex_ids") != list(g.vertex_ids):
        raise ValueError("solution was computed on a different graph")
    rows = doc.get("vertices")
    if doc.get("outcome") != "converged" or rows is None:
        raise ValueError(f"file holds no converged solution (outcome {doc.get('outcome')!r})")
    if [r["id"] for r in rows] != list(g.vertex_ids):
        raise ValueError("vertex rows do not match the graph vertex order")
    col = {k: np.array([float("nan") if r[k] is None else r[k] for r in rows], dtype=np.float64)
           for k in ("u", "v", "u_prime", "v_prime")}
    res = doc.get("residuals") or {}
    return SolutionPair(col["u"], col["v"], float(doc["lambda"]), int(doc["iterations"]),
                        float(res.get("u", float("nan"))), float(res.get("v", float("nan"))),
                        col["u_prime"], col["v_prime"])


SCAN_COLUMNS = ("lambda", "outcome", "iterations", "mean_u", "mean_v",
                "sobolev_u", "sobolev_v", "identity_defect_u", "identity_defect_v")


def write_scan(rows, fh: TextIO) -> None:
    """CSV with SCAN_COLUMNS; missing entries are left empty."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SCAN_COLUMNS)
    for row in rows:
        cells = []
        for key in SCAN_COLUMNS:
            val = row.get(key)
            if val is None:
                cells.append("")
            elif isinstance(val, float):
                cells.append(_float(val) if math.isfinite(val) else "")
            else:
                cells.append(str(val))
        w.writerow(cells)
