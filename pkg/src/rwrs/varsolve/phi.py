"""The inner Legendre functional Phi_H(g, u) = sup_gamma [gamma u - int H(gamma g)]."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..scenery import SceneryModel, kasahara_dual

GAMMA_CAP = 1e18


class PowerCumulant:
    """H(t) = Dt * t^p; the model cumulant for tails exp(-D r^q)."""

    family = "power"

    def __init__(self, Dt: float, p: float):
        if Dt <= 0 or p <= 1:
            raise ValueError("need Dt > 0 and p > 1")
        self.Dt, self.p = float(Dt), float(p)

    @classmethod
    def from_tail(cls, D: float, q: float) -> "PowerCumulant":
        return cls(*kasahara_dual(D, q))

    def H(self, t):
        return self.Dt * np.asarray(t, dtype=float) ** self.p

    def dH(self, t):
        return self.p * self.Dt * np.asarray(t, dtype=float) ** (self.p - 1)

    def d2H(self, t):
        return self.p * (self.p - 1) * self.Dt * np.asarray(t, dtype=float) ** (self.p - 2)

    def describe(self) -> dict:
        return {"family": self.family, "Dt": self.Dt, "p": self.p}


@dataclass(frozen=True)
class PhiResult:
    value: float
    gamma: float
    finite: bool = True
    iterations: int = 0

    def __float__(self):
        return self.value


def phi_H(
    g: np.ndarray,
    cell_volume: float,
    u: float,
    H: SceneryModel | PowerCumulant,
    gamma0: float | None = None,
    rtol: float = 1e-12,
) -> PhiResult:
    """Maximize gamma*u - h^d sum H(gamma g) over gamma >= 0.

    ``g`` is the array of density values (nonnegative), ``cell_volume`` is h^d.
    The maximizer solves u = h^d sum g H'(gamma g); Newton steps are kept inside
    a bisection bracket that is grown geometrically.  If u is not reached before
    gamma = 1e18 the result is flagged infinite.
    """
    if u <= 0:
        raise ValueError("u must be positive")
    g = np.asarray(g, dtype=float).ravel()
    if np.any(g < 0):
        raise ValueError("phi_H needs a nonnegative density")
    g = g[g > 0]
    w = cell_volume

    def S(gam):
        return w * float(np.dot(g, H.dH(gam * g)))

    def dS(gam):
        return w * float(np.dot(g * g, H.d2H(gam * g)))

    def value(gam):
        return gam * u - w * float(np.sum(H.H(gam * g)))

    if S(0.0) >= u:
        # the concave map is decreasing from gamma = 0
        return PhiResult(0.0, 0.0)
    lo, hi = 0.0, 1.0 if gamma0 is None or gamma0 <= 0 else float(gamma0)
    while S(hi) < u:
        lo, hi = hi, hi * 4.0
        if hi > GAMMA_CAP:
            return PhiResult(math.inf, math.inf, finite=False)
    gam = hi if gamma0 is None else min(max(gamma0, lo), hi)
    it = 0
    for it in range(1, 200):
        r = S(gam) - u
        if abs(r) <= rtol * u:
            break
        if r > 0:
            hi = gam
        else:
            lo = gam
        slope = dS(gam)
        step = gam - r / slope if slope > 0 else math.nan
        gam = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            break
    return PhiResult(value(gam), gam, iterations=it)


def phi_gradient(g: np.ndarray, cell_volume: float, res: PhiResult, H) -> np.ndarray:
    """d Phi / d g_i at the maximizer (envelope theorem): -h^d gamma H'(gamma g_i)."""
    if not res.finite:
        return np.full(np.shape(g), math.nan)
    if res.gamma == 0.0:
        return np.zeros(np.shape(g))
    return -cell_volume * res.gamma * np.asarray(H.dH(res.gamma * np.asarray(g)))
