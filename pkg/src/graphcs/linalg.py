"""Linear solves for (Delta - K) w = f and the singular problem Delta w = f.

Both operators are symmetrized by multiplying through by the measure:
``(Delta - K) w = f`` is equivalent to ``(K M - S) w = -M f`` where
``S = W - diag(deg)`` and ``M = diag(mu)``.  ``K M - S`` is symmetric positive
definite for K > 0, and ``-S`` restricted to all vertices but one is SPD on a
connected graph.
"""

from __future__ import annotations

import weakref

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla
from scipy import sparse

from .graph import WeightedGraph, _laplacian_cols, integrate, laplacian

# above this size the dense Cholesky gives way to a sparse LU
DENSE_LIMIT = 2000
MAX_REFINE = 3


class LinearSolveError(RuntimeError):
    """A factorization failed or a solve missed its residual contract."""


class IncompatibleRHSError(ValueError):
    """Right-hand side of the singular Poisson problem has nonzero integral."""


class _SPDFactor:
    """Factor of a symmetric positive definite matrix: dense Cholesky or sparse LU."""

    def __init__(self, A: sparse.spmatrix):
        self.n = A.shape[0]
        try:
            if self.n <= DENSE_LIMIT:
                self._cho = la.cho_factor(A.toarray(), lower=True, check_finite=False)
                self._lu = None
            else:
                self._cho = None
                self._lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A",
                                     options={"SymmetricMode": True})
        except (la.LinAlgError, RuntimeError) as exc:
            raise LinearSolveError(f"factorization of {self.n}x{self.n} SPD matrix failed: {exc}") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._cho is not None:
            return la.cho_solve(self._cho, b, check_finite=False)
        return self._lu.solve(b)


class ShiftedOperator:
    """The operator Delta - K on a graph, factored once and reused.

    The factorization is tied to (graph, K); build a new operator for a new K.
    Instances are read-only after construction and safe to share.
    """

    def __init__(self, graph: WeightedGraph, K: float):
        K = float(K)
        if not (np.isfinite(K) and K > 0):
            raise ValueError(f"shift K must be positive and finite, got {K}")
        self.graph = graph
        self.K = K
        A = K * sparse.diags(graph.mu) - graph.stiffness
        self._factor = _SPDFactor(A.tocsc())

    def apply(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.ndim == 1:
            return laplacian(self.graph, w) - self.K * w
        return _laplacian_cols(self.graph, w) - self.K * w

    def residual(self, w, f) -> float:
        return float(np.max(np.abs(self.apply(w) - f)))

    def solve(self, f) -> np.ndarray:
        """Return w with (Delta - K) w = f, checked to 1e-10 * (1 + |f|_inf).

        ``f`` may also be an (n, k) array of k right-hand sides.
        """
        g = self.graph
        f = np.asarray(f, dtype=np.float64)
        if f.ndim == 1:
            f = g._check(f)
            weight = g.mu
        elif f.shape[0] != len(g) or not np.all(np.isfinite(f)):
            raise ValueError(f"right-hand side block of shape {f.shape} does not match the graph")
        else:
            weight = g.mu[:, None]
        tol = 1e-10 * (1.0 + float(np.max(np.abs(f))))
        w = self._factor.solve(-weight * f)
        for _ in range(MAX_REFINE):
            r = f - self.apply(w)
            if float(np.max(np.abs(r))) <= tol:
                return w
            w = w + self._factor.solve(-weight * r)
        res = self.residual(w, f)
        if not res <= tol:
            raise LinearSolveError(
                f"shifted solve residual {res:.3e} exceeds {tol:.3e} (K={self.K}, n={len(g)})"
            )
        return w


def solve_shifted(op: ShiftedOperator, f) -> np.ndarray:
    return op.solve(f)


_POISSON_CACHE: "weakref.WeakKeyDictionary[WeightedGraph, _SPDFactor | None]" = weakref.WeakKeyDictionary()


def _poisson_factor(g: WeightedGraph) -> _SPDFactor | None:
    if g in _POISSON_CACHE:
        return _POISSON_CACHE[g]
    if len(g) == 1:
        fac = None
    else:
        # pin the last vertex: the reduced -S is SPD on a connected graph
        A = -g.stiffness[:-1, :-1]
        fac = _SPDFactor(A.tocsc())
    _POISSON_CACHE[g] = fac
    return fac


def solve_poisson_mean_zero(g: WeightedGraph, f) -> np.ndarray:
    """Solve Delta w = f with integral of w equal to zero.

    Raises
    ------
    IncompatibleRHSError
        If the integral of f is not zero (relative to ``|f|_inf * |V|``).
    """
    f = g._check(f)
    total = integrate(g, f)
    scale = float(np.max(np.abs(f))) * g.volume
    if abs(total) > 1e-9 * scale:
        raise IncompatibleRHSError(
            f"right-hand side integrates to {total:.6e}, not zero; Delta w = f has no solution"
        )
    fac = _poisson_factor(g)
    if fac is None:
        return np.zeros(1)
    b = -(g.mu * f)[:-1]
    w = np.append(fac.solve(b), 0.0)
    w -= integrate(g, w) / g.volume
    tol = 1e-9 * (1.0 + float(np.max(np.abs(f))))
    res = float(np.max(np.abs(laplacian(g, w) - f)))
    if not res <= tol:
        raise LinearSolveError(f"Poisson solve residual {res:.3e} exceeds {tol:.3e}")
    return w
