"""The functions G, H and their primitives g, h.

Throughout, the argument is ``t = s^2`` so that ``g(t) = int_t^1 G(tau) dtau``.
Only ``t`` in [0, 1] ever reaches these functions because the solver keeps
``u0 + u <= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DOMAIN_SLACK = 1e-12
QUAD_TOL = 1e-12
GRID_POINTS = 1024


class ModelError(ValueError):
    """A model violates positivity or monotonicity on [0, 1]."""


class DomainError(ValueError):
    """Argument outside [0, 1]."""


def adaptive_simpson(f, a: float, b: float, tol: float = QUAD_TOL, max_depth: int = 48) -> float:
    """Integrate f over [a, b] by adaptive Simpson with interval bisection.

    Uses the usual |S(left) + S(right) - S(whole)| <= 15 tol acceptance test
    plus the Richardson correction.
    """
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_step(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def _check_domain(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    # NaN fails both comparisons
    if not (np.all(t >= -DOMAIN_SLACK) and np.all(t <= 1.0 + DOMAIN_SLACK)):
        bad = t[~((t >= -DOMAIN_SLACK) & (t <= 1.0 + DOMAIN_SLACK))]
        raise DomainError(f"argument outside [0, 1]: {bad.ravel()[:3]}")
    return np.clip(t, 0.0, 1.0)


@dataclass(frozen=True)
class NonlinearityModel:
    """One increasing positive function on [0, 1].

    kind is ``"constant_one"``, ``"polynomial"`` (coefficients a_0..a_m, so
    G(t) = sum a_k t^k) or ``"tabulated"`` (nodes 0 = t_0 < ... < t_m = 1 with
    values, interpolated linearly).
    """

    kind: str
    coeffs: tuple = ()
    nodes: tuple = ()
    values: tuple = ()
    _heads: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def constant_one(cls) -> "NonlinearityModel":
        return cls("constant_one")

    @classmethod
    def polynomial(cls, coeffs, validate: bool = True) -> "NonlinearityModel":
        coeffs = tuple(float(c) for c in coeffs)
        if not coeffs:
            raise ModelError("polynomial needs at least one coefficient")
        if validate:
            if any(c < 0 for c in coeffs) or not coeffs[0] > 0:
                raise ModelError(f"polynomial coefficients must satisfy a_k >= 0, a_0 > 0; got {coeffs}")
        model = cls("polynomial", coeffs=coeffs)
        if validate:
            model.validate()
        return model

    @classmethod
    def tabulated(cls, nodes, values, validate: bool = True) -> "NonlinearityModel":
        nodes = tuple(float(x) for x in nodes)
        values = tuple(float(y) for y in values)
        if len(nodes) != len(values) or len(nodes) < 2:
            raise ModelError("tabulated model needs matching nodes/values, at least two of each")
        if nodes[0] != 0.0 or nodes[-1] != 1.0:
            raise ModelError("table nodes must start at 0 and end at 1")
        if any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ModelError("table nodes must be strictly increasing")
        rev = [1.0 - x for x in reversed(nodes)]
        vals = list(reversed(values))
        G = lambda x: float(np.interp(x, rev, vals))
        pieces = [adaptive_simpson(G, a, b) for a, b in zip(rev, rev[1:])]
        heads = np.concatenate([[0.0], np.cumsum(pieces)])
        model = cls("tabulated", nodes=nodes, values=values, _heads=heads)
        if validate:
            model.validate()
        return model

    def validate(self) -> None:
        """Positivity and monotonicity on a uniform grid of [0, 1]."""
        t = np.linspace(0.0, 1.0, GRID_POINTS)
        G = self.G(t)
        if not np.all(G > 0):
            raise ModelError(f"{self.kind} model is not positive on [0, 1]")
        if np.any(np.diff(G) < 0):
            raise ModelError(f"{self.kind} model is not nondecreasing on [0, 1]")

    @property
    def at_one(self) -> float:
        return float(self.G(1.0))

    def G(self, t) -> np.ndarray:
        return self._G(_check_domain(t))

    def _G(self, t: np.ndarray) -> np.ndarray:
        # t already validated and clipped to [0, 1]
        if self.kind == "constant_one":
            return np.ones_like(t)
        if self.kind == "polynomial":
            # Horner
            out = np.zeros_like(t)
            for c in reversed(self.coeffs):
                out = out * t + c
            return out
        if self.kind == "tabulated":
            return np.interp(t, self.nodes, self.values)
        raise ModelError(f"unknown model kind {self.kind!r}")

    def g(self, t) -> np.ndarray:
        """Primitive g(t) = int_t^1 G; closed form where the model allows it."""
        t = _check_domain(t)
        if self.kind == "constant_one":
            return 1.0 - t
        if self.kind == "polynomial":
            out = np.zeros_like(t)
            for k, c in enumerate(self.coeffs):
                out += c * (1.0 - t ** (k + 1)) / (k + 1)
            return out
        if self.kind == "tabulated":
            return self._g_table(1.0 - t)
        raise ModelError(f"unknown model kind {self.kind!r}")

    def g_exp(self, s) -> np.ndarray:
        """g(e^s) for s <= 0, accurate to full relative precision as s -> 0-.

        ``1 - e^{ks}`` is formed with expm1, so tiny negative s does not lose
        digits the way ``g(exp(s))`` would.
        """
        s = np.asarray(s, dtype=np.float64)
        if not (np.all(s <= DOMAIN_SLACK) and np.all(np.isfinite(s))):
            raise DomainError(f"log-argument above 0: max {np.max(s):.3e}")
        return self._g_exp(np.minimum(s, 0.0))

    def _g_exp(self, s: np.ndarray) -> np.ndarray:
        # s already validated and clipped to (-inf, 0]
        if self.kind == "constant_one":
            return -np.expm1(s)
        if self.kind == "polynomial":
            out = np.zeros_like(s)
            for k, c in enumerate(self.coeffs):
                out += c * (-np.expm1((k + 1) * s)) / (k + 1)
            return out
        if self.kind == "tabulated":
            return self._g_table(-np.expm1(s))
        raise ModelError(f"unknown model kind {self.kind!r}")

    def g_quadrature(self, t) -> np.ndarray:
        """g(t) by adaptive Simpson over [t, 1] for every kind; an independent path for checks."""
        t = _check_domain(t)
        scalar = lambda x: float(self.G(x))
        flat = np.array([adaptive_simpson(scalar, float(x), 1.0) for x in t.ravel()])
        return flat.reshape(t.shape)

    def _g_table(self, length: np.ndarray) -> np.ndarray:
        """int_0^L G(1 - x) dx, i.e. g at t = 1 - L, integrating backwards from 1.

        Working in x = 1 - tau keeps the interval length exact for t near 1.
        The integral is split at table nodes so each Simpson call sees one
        linear piece.
        """
        length = np.asarray(length, dtype=np.float64)
        rev = 1.0 - np.asarray(self.nodes)[::-1]        # nodes in x, increasing from 0
        vals = np.asarray(self.values)[::-1]
        G = lambda x: float(np.interp(x, rev, vals))
        heads = self._heads                             # int_0^{rev[k]} G(1 - x) dx
        k = np.searchsorted(rev, length, side="right") - 1
        out = np.empty(length.size)
        for idx, (L, kk) in enumerate(zip(length.ravel(), k.ravel())):
            kk = min(int(kk), len(rev) - 1)
            out[idx] = heads[kk] + adaptive_simpson(G, float(rev[kk]), float(L))
        return out.reshape(length.shape)

    def to_config(self, prefix: str) -> dict:
        cfg = {f"{prefix}.kind": self.kind}
        if self.kind == "polynomial":
            cfg[f"{prefix}.coeffs"] = list(self.coeffs)
        elif self.kind == "tabulated":
            cfg[f"{prefix}.nodes"] = list(self.nodes)
            cfg[f"{prefix}.values"] = list(self.values)
        return cfg


@dataclass(frozen=True)
class Nonlinearity:
    """The pair (G, H) entering the system."""

    G: NonlinearityModel
    H: NonlinearityModel

    @classmethod
    def classical(cls) -> "Nonlinearity":
        one = NonlinearityModel.constant_one()
        return cls(one, one)

    @property
    def G1H1(self) -> float:
        return self.G.at_one * self.H.at_one

    @property
    def is_classical(self) -> bool:
        return self.G.kind == "constant_one" and self.H.kind == "constant_one"


def eval_G(model: NonlinearityModel, t) -> np.ndarray:
    return model.G(t)


def eval_g(model: NonlinearityModel, t) -> np.ndarray:
    return model.g(t)


# H and h are the same operations on the second model of the pair
eval_H = eval_G
eval_h = eval_g
