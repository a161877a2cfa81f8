"""Vortex data and the background pair (u0, v0) absorbing the Dirac masses."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graph import WeightedGraph, integrate, laplacian
from .linalg import solve_poisson_mean_zero

FOUR_PI = 4.0 * np.pi


class VortexError(ValueError):
    pass


def _normalize(entries) -> tuple:
    out = []
    seen = set()
    for item in entries:
        try:
            vid, mult = item
        except (TypeError, ValueError):
            raise VortexError(f"vortex entry must be (vertex, multiplicity), got {item!r}") from None
        if isinstance(mult, bool) or int(mult) != mult or int(mult) < 1:
            raise VortexError(f"multiplicity must be a positive integer, got {mult!r} at {vid!r}")
        if vid in seen:
            raise VortexError(f"vertex {vid!r} listed twice; merge multiplicities")
        seen.add(vid)
        out.append((vid, int(mult)))
    return tuple(out)


@dataclass(frozen=True)
class VortexSet:
    """Vortex locations and multiplicities for the two species."""

    species1: tuple
    species2: tuple

    def __post_init__(self):
        object.__setattr__(self, "species1", _normalize(self.species1))
        object.__setattr__(self, "species2", _normalize(self.species2))
        if self.N1 < 1 or self.N2 < 1:
            raise VortexError("each species needs at least one vortex")

    @property
    def N1(self) -> int:
        return sum(m for _, m in self.species1)

    @property
    def N2(self) -> int:
        return sum(m for _, m in self.species2)

    def check(self, g: WeightedGraph) -> None:
        for vid, _ in self.species1 + self.species2:
            if vid not in g.index:
                raise VortexError(f"vortex at unknown vertex {vid!r}")

    def scaled(self, factor: int) -> "VortexSet":
        return VortexSet([(v, m * factor) for v, m in self.species1],
                         [(v, m * factor) for v, m in self.species2])


def dirac_field(g: WeightedGraph, vortices) -> np.ndarray:
    """Sum of mult * delta_p with delta_p(x) = [x == p] / mu(p), so each delta integrates to 1."""
    out = np.zeros(len(g))
    for vid, mult in _normalize(vortices):
        if vid not in g.index:
            raise VortexError(f"vortex at unknown vertex {vid!r}")
        i = g.index[vid]
        out[i] += mult / g.mu[i]
    return out


def background_rhs(g: WeightedGraph, vortices, N: int) -> np.ndarray:
    return -FOUR_PI * N / g.volume + FOUR_PI * dirac_field(g, vortices)


@dataclass(frozen=True)
class BackgroundPair:
    """(u0, v0) together with the vortex sources 4 pi sum delta they absorb."""

    u0: np.ndarray
    v0: np.ndarray
    N1: int
    N2: int
    total_volume: float
    source_u: np.ndarray
    source_v: np.ndarray
    residual_u: float = 0.0
    residual_v: float = 0.0

    def shifted(self, cu: float, cv: float) -> "BackgroundPair":
        """Same pair with constants added (gauge shift); used to test gauge invariance."""
        return replace(self, u0=self.u0 + cu, v0=self.v0 + cv)


def compute_background(g: WeightedGraph, vortices: VortexSet) -> BackgroundPair:
    """Mean-zero solutions of Delta u0 = -4 pi N1/|V| + 4 pi sum delta_{p'_j} (and v0 likewise)."""
    vortices.check(g)
    src_u = FOUR_PI * dirac_field(g, vortices.species1)
    src_v = FOUR_PI * dirac_field(g, vortices.species2)
    fu = -FOUR_PI * vortices.N1 / g.volume + src_u
    fv = -FOUR_PI * vortices.N2 / g.volume + src_v
    u0 = solve_poisson_mean_zero(g, fu)
    v0 = solve_poisson_mean_zero(g, fv)
    ru = float(np.max(np.abs(laplacian(g, u0) - fu)))
    rv = float(np.max(np.abs(laplacian(g, v0) - fv)))
    for arr in (u0, v0, src_u, src_v):
        arr.setflags(write=False)
    return BackgroundPair(u0, v0, vortices.N1, vortices.N2, g.volume, src_u, src_v, ru, rv)


def background_mean(g: WeightedGraph, bg: BackgroundPair) -> tuple[float, float]:
    return integrate(g, bg.u0) / g.volume, integrate(g, bg.v0) / g.volume
