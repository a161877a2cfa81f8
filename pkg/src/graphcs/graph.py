"""Finite weighted graphs and the discrete calculus on them.

A vertex field is a 1-D float64 array holding one value per vertex, in the
graph's (sorted) vertex order.  All operators below are pure functions of the
graph and the field(s).
"""

from __future__ import annotations

import hashlib
from functools import cached_property
from typing import Hashable, Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph


class GraphError(ValueError):
    """Invalid graph data (non-positive weights, loops, disconnected, ...)."""


class GraphFormatError(GraphError):
    """Parse error in a graph text file, carrying the offending line."""

    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        self.lineno = lineno
        self.path = path
        if path is not None and lineno is not None:
            message = f"{path}:{lineno}: {message}"
        elif lineno is not None:
            message = f"line {lineno}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class FieldError(ValueError):
    """A vertex field does not match the graph it is used with."""


class WeightedGraph:
    """Connected finite graph with symmetric edge weights and a vertex measure.

    Parameters
    ----------
    vertices : mapping
        Vertex identifier -> measure mu(x) > 0.
    edges : iterable of (a, b, weight)
        Undirected edges.  Each unordered pair may appear once.

    Notes
    -----
    Vertices are stored in sorted identifier order and every field uses that
    order.  Instances are treated as immutable.
    """

    def __init__(self, vertices: Mapping[Hashable, float], edges: Iterable[tuple]):
        if len(vertices) == 0:
            raise GraphError("graph has no vertices")
        try:
            ids = sorted(vertices)
        except TypeError as exc:
            raise GraphError(f"vertex identifiers are not mutually orderable: {exc}") from None
        self.vertex_ids: tuple = tuple(ids)
        self.index: dict = {vid: i for i, vid in enumerate(self.vertex_ids)}

        mu = np.array([float(vertices[vid]) for vid in self.vertex_ids], dtype=np.float64)
        bad = ~(np.isfinite(mu) & (mu > 0))
        if bad.any():
            vid = self.vertex_ids[int(np.flatnonzero(bad)[0])]
            raise GraphError(f"vertex {vid!r} has non-positive or non-finite measure")
        self.mu = mu
        self.mu.setflags(write=False)

        heads, tails, weights = [], [], []
        seen = set()
        for a, b, w in edges:
            if a not in self.index or b not in self.index:
                missing = a if a not in self.index else b
                raise GraphError(f"edge ({a!r}, {b!r}) references unknown vertex {missing!r}")
            if a == b:
                raise GraphError(f"self-loop at vertex {a!r}")
            i, j = self.index[a], self.index[b]
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge ({a!r}, {b!r})")
            w = float(w)
            if not (np.isfinite(w) and w > 0):
                raise GraphError(f"edge ({a!r}, {b!r}) has non-positive or non-finite weight")
            seen.add(key)
            heads.append(key[0])
            tails.append(key[1])
            weights.append(w)

        order = sorted(range(len(heads)), key=lambda k: (heads[k], tails[k]))
        self.edge_heads = np.array([heads[k] for k in order], dtype=np.intp)
        self.edge_tails = np.array([tails[k] for k in order], dtype=np.intp)
        self.edge_weights = np.array([weights[k] for k in order], dtype=np.float64)
        for arr in (self.edge_heads, self.edge_tails, self.edge_weights):
            arr.setflags(write=False)

        n = len(self.vertex_ids)
        if n > 1:
            ncomp, _ = csgraph.connected_components(self.weights, directed=False)
            if ncomp != 1:
                raise GraphError(f"graph is disconnected ({ncomp} components)")

    def __len__(self) -> int:
        return len(self.vertex_ids)

    def __repr__(self) -> str:
        return f"WeightedGraph(n_vertices={len(self)}, n_edges={self.n_edges})"

    @property
    def n_edges(self) -> int:
        return len(self.edge_weights)

    @cached_property
    def weights(self) -> sparse.csr_matrix:
        """Symmetric weight matrix W with W[x, y] = omega_xy."""
        n = len(self)
        rows = np.concatenate([self.edge_heads, self.edge_tails])
        cols = np.concatenate([self.edge_tails, self.edge_heads])
        vals = np.concatenate([self.edge_weights, self.edge_weights])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

    @cached_property
    def degree(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """Matrix S = W - diag(deg), so that (S u)(x) = sum_y omega_xy (u(y) - u(x))."""
        return (self.weights - sparse.diags(self.degree)).tocsr()

    @cached_property
    def volume(self) -> float:
        """|V| = sum of mu(x)."""
        return float(self.mu.sum())

    def field(self, values) -> np.ndarray:
        """Validate ``values`` as a vertex field on this graph and return a float64 copy.

        ``values`` may be a scalar, a sequence in vertex order, or a mapping
        keyed by vertex id.
        """
        if isinstance(values, Mapping):
            missing = [vid for vid in self.vertex_ids if vid not in values]
            if missing or len(values) != len(self):
                raise FieldError("mapping keys do not match the graph vertices")
            arr = np.array([values[vid] for vid in self.vertex_ids], dtype=np.float64)
        else:
            arr = np.array(values, dtype=np.float64)
            if arr.ndim == 0:
                arr = np.full(len(self), float(arr))
        return self._check(arr)

    def _check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (len(self),):
            raise FieldError(f"field of shape {u.shape} does not match graph with {len(self)} vertices")
        if not np.all(np.isfinite(u)):
            raise FieldError("field contains NaN or Inf")
        return u

    def indicator(self, vid) -> np.ndarray:
        e = np.zeros(len(self))
        e[self.index[vid]] = 1.0
        return e

    def digest(self) -> str:
        """SHA-256 of ``to_text()``; identifies the graph in output files."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def to_text(self) -> str:
        """Canonical rendering in the graph file format (floats by repr)."""
        lines = [f"v {vid} {float(m)!r}" for vid, m in zip(self.vertex_ids, self.mu)]
        lines += [
            f"e {self.vertex_ids[i]} {self.vertex_ids[j]} {float(w)!r}"
            for i, j, w in zip(self.edge_heads, self.edge_tails, self.edge_weights)
        ]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# discrete calculus
# ---------------------------------------------------------------------------

def laplacian(g: WeightedGraph, u) -> np.ndarray:
    """mu-Laplacian: (1/mu(x)) * sum_{y~x} omega_xy (u(y) - u(x))."""
    u = g._check(u)
    return (g.stiffness @ u) / g.mu


def _laplacian_cols(g: WeightedGraph, U: np.ndarray) -> np.ndarray:
    # unchecked, column-wise; for solver inner loops
    return (g.stiffness @ U) / g.mu[:, None]


def gamma(g: WeightedGraph, u, v) -> np.ndarray:
    """Carre du champ Gamma(u, v)(x) = (1/(2 mu(x))) sum_{y~x} omega_xy (u(y)-u(x))(v(y)-v(x))."""
    u = g._check(u)
    v = g._check(v)
    i, j = g.edge_heads, g.edge_tails
    prod = g.edge_weights * (u[j] - u[i]) * (v[j] - v[i])
    n = len(g)
    acc = np.bincount(i, weights=prod, minlength=n) + np.bincount(j, weights=prod, minlength=n)
    return acc / (2.0 * g.mu)


def grad_norm(g: WeightedGraph, u) -> np.ndarray:
    """Pointwise gradient norm |grad u|(x) = sqrt(Gamma(u, u)(x))."""
    return np.sqrt(gamma(g, u, u))


def integrate(g: WeightedGraph, f) -> float:
    """Integral sum_x mu(x) f(x)."""
    f = g._check(f)
    return float(np.dot(g.mu, f))


def sobolev_norm(g: WeightedGraph, u) -> float:
    """W^{1,2} norm: (integral of |grad u|^2 + u^2)^(1/2)."""
    u = g._check(u)
    return float(np.sqrt(integrate(g, gamma(g, u, u) + u * u)))


def gradient_l2(g: WeightedGraph, u) -> float:
    """||grad u||_2 = (integral of |grad u|^2)^(1/2)."""
    return float(np.sqrt(integrate(g, gamma(g, u, u))))


def mean(g: WeightedGraph, u) -> float:
    return integrate(g, u) / g.volume


def split(g: WeightedGraph, u) -> tuple[float, np.ndarray]:
    """Decompose u into its mean and a zero-integral fluctuation."""
    u = g._check(u)
    m = mean(g, u)
    return m, u - m


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------

def parse_graph(text: str, path: str | None = None) -> WeightedGraph:
    """Parse the line format ``v <id> <mu>`` / ``e <id1> <id2> <weight>``.

    Blank lines and lines starting with ``#`` are skipped.
    """
    vertices: dict[str, float] = {}
    edges: list[tuple[str, str, float]] = []
    edge_lines: dict[frozenset, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "v":
            if len(parts) != 3:
                raise GraphFormatError("expected 'v <id> <mu>'", lineno, path)
            vid = parts[1]
            if vid in vertices:
                raise GraphFormatError(f"duplicate vertex {vid!r}", lineno, path)
            vertices[vid] = _positive(parts[2], "measure", lineno, path)
        elif kind == "e":
            if len(parts) != 4:
                raise GraphFormatError("expected 'e <id1> <id2> <weight>'", lineno, path)
            a, b = parts[1], parts[2]
            if a == b:
                raise GraphFormatError(f"self-loop at vertex {a!r}", lineno, path)
            key = frozenset((a, b))
            if key in edge_lines:
                raise GraphFormatError(
                    f"duplicate edge {a!r}-{b!r} (first declared on line {edge_lines[key]})",
                    lineno, path,
                )
            edge_lines[key] = lineno
            edges.append((a, b, _positive(parts[3], "weight", lineno, path)))
        else:
            raise GraphFormatError(f"unknown record type {kind!r}", lineno, path)

    for a, b, _ in edges:
        for vid in (a, b):
            if vid not in vertices:
                lineno = edge_lines[frozenset((a, b))]
                raise GraphFormatError(f"edge references undeclared vertex {vid!r}", lineno, path)
    try:
        return WeightedGraph(vertices, edges)
    except GraphFormatError:
        raise
    except GraphError as exc:
        raise GraphFormatError(str(exc), None, path) from None


def _positive(token: str, what: str, lineno: int, path: str | None) -> float:
    try:
        x = float(token)
    except ValueError:
        raise GraphFormatError(f"cannot parse {what} {token!r}", lineno, path) from None
    if not (np.isfinite(x) and x > 0):
        raise GraphFormatError(f"{what} must be positive and finite, got {token}", lineno, path)
    return x


def load_graph(path) -> WeightedGraph:
    with open(path) as fh:
        return parse_graph(fh.read(), path=str(path))


def complete_graph(n: int, weight: float = 1.0, mu: float = 1.0) -> WeightedGraph:
    return WeightedGraph(
        {i: mu for i in range(n)},
        [(i, j, weight) for i in range(n) for j in range(i + 1, n)],
    )


def path_graph(n: int, weight: float = 1.0, mu: float = 1.0) -> WeightedGraph:
    return WeightedGraph({i: mu for i in range(n)}, [(i, i + 1, weight) for i in range(n - 1)])


def cycle_graph(n: int, weight: float = 1.0, mu: float = 1.0) -> WeightedGraph:
    if n < 3:
        raise GraphError("a cycle needs at least 3 vertices")
    return WeightedGraph({i: mu for i in range(n)}, [(i, (i + 1) % n, weight) for i in range(n)])


def random_connected_graph(n: int, extra_edges: int, seed: int = 0,
                           weight_range=(0.5, 2.0), mu_range=(0.5, 1.5)) -> WeightedGraph:
    """Random spanning tree plus ``extra_edges`` random chords, with random weights and measure."""
    rng = np.random.default_rng(seed)
    pairs = set()
    perm = rng.permutation(n)
    for k in range(1, n):
        a, b = int(perm[k]), int(perm[rng.integers(k)])
        pairs.add((min(a, b), max(a, b)))
    max_edges = n * (n - 1) // 2
    target = min(max_edges, len(pairs) + extra_edges)
    while len(pairs) < target:
        a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
        pairs.add((min(a, b), max(a, b)))
    pairs = sorted(pairs)
    w = rng.uniform(*weight_range, size=len(pairs))
    m = rng.uniform(*mu_range, size=n)
    return WeightedGraph({i: float(m[i]) for i in range(n)},
                         [(a, b, float(wk)) for (a, b), wk in zip(pairs, w)])
