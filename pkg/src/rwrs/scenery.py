"""Scenery laws, their cumulant generating functions and sampling.

Each model exposes vectorized ``H``, ``dH`` and ``d2H`` on ``t >= 0`` and an
inverse-CDF sampler ``ppf``.  Fields are sampled lazily: the value at a site is
a pure function of ``(seed, replicate, site)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from ._rng import keyed_uniform
from .localtimes import pack

# integrand is dropped where it falls below this fraction of its maximum
_LOG_CUT = math.log(1e-18)


def kasahara_dual(D: float, q: float) -> tuple[float, float]:
    """Growth constant and exponent (D~, p) of H(t) ~ D~ t^p for tails e^{-D r^q}."""
    if D <= 0:
        raise ValueError("D must be positive")
    if q <= 1:
        raise ValueError("q must exceed 1")
    return (q - 1) * (D * q**q) ** (1.0 / (1 - q)), q / (q - 1)


def _apply(fn, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("cumulant functions are defined for t >= 0")
    out = np.vectorize(fn, otypes=[float])(t)
    return out if out.ndim else float(out)


class SceneryModel:
    """Base class.  Subclasses give either closed forms or a log-density."""

    family = "abstract"
    closed_form = False
    tail: tuple[float, float] | None = None

    # -- law -------------------------------------------------------------
    def ppf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def logpdf(self, y: float) -> float:
        raise NotImplementedError

    def pieces(self) -> list[tuple[float, float]]:
        """Intervals on which the density is smooth (possibly infinite ends)."""
        raise NotImplementedError

    def atoms(self) -> list[tuple[float, float]]:
        """Point masses as (location, mass)."""
        return []

    @property
    def mean(self) -> float:
        return self.dH(0.0)

    # -- cumulants -------------------------------------------------------
    def H(self, t):
        return _apply(lambda s: _tilted(self, s)[0], t)

    def dH(self, t):
        return _apply(lambda s: _tilted(self, s)[1], t)

    def d2H(self, t):
        return _apply(lambda s: _tilted(self, s)[2], t)

    def describe(self) -> dict:
        out = {"family": self.family, "closed_form_H": self.closed_form}
        if self.tail is not None:
            out["tail"] = {"D": self.tail[0], "q": self.tail[1]}
        return out


def _piece_window(g: Callable[[float], float], lo: float, hi: float) -> tuple[float, float, float] | None:
    """Mode and effective support of exp(g) on (lo, hi)."""
    cand = [0.0]
    for e in np.arange(-6, 7, 0.25):
        cand += [10.0**e, -(10.0**e)]
    eps = 1e-300
    cand = sorted(c for c in cand if lo + eps < c < hi - eps)
    if math.isfinite(lo):
        cand.insert(0, lo + 1e-12 * max(1.0, abs(lo)))
    if math.isfinite(hi):
        cand.append(hi - 1e-12 * max(1.0, abs(hi)))
    if not cand:
        return None
    vals = np.array([g(c) for c in cand])
    i = int(np.nanargmax(vals))
    a = cand[max(i - 1, 0)]
    b = cand[min(i + 1, len(cand) - 1)]
    if b > a:
        res = optimize.minimize_scalar(lambda y: -g(y), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, abs(cand[i]))})
        ystar = res.x if -res.fun >= vals[i] else cand[i]
    else:
        ystar = cand[i]
    gstar = g(ystar)
    level = gstar + _LOG_CUT

    def edge(direction):
        bound = hi if direction > 0 else lo
        step = max(1.0, abs(ystar))
        inner = ystar
        while True:
            outer = ystar + direction * step
            if (direction > 0 and outer >= bound) or (direction < 0 and outer <= bound):
                if math.isfinite(bound):
                    return bound
            if g(outer) < level:
                return optimize.brentq(lambda y: g(y) - level, min(inner, outer), max(inner, outer))
            inner = outer
            step *= 2.0
            if step > 1e12:
                raise RuntimeError("could not bracket the integrand tail")

    return ystar, edge(-1), edge(+1)


def _tilted(model: SceneryModel, t: float) -> tuple[float, float, float]:
    """(H, H', H'') at t by integrating exp(t y) against the law in log space."""
    terms = []  # (log weight scale, m0, m1, m2) per piece, relative to its own max
    for lo, hi in model.pieces():
        def g(y, lo=lo, hi=hi):
            if not lo < y < hi:
                return -math.inf
            return t * y + model.logpdf(y)

        win = _piece_window(g, lo, hi)
        if win is None:
            continue
        ystar, a, b = win
        gstar = g(ystar)
        pts = [ystar] if a < ystar < b else None
        m = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for k in range(3):
                val, _ = integrate.quad(lambda y: (y - ystar) ** k * math.exp(g(y) - gstar), a, b,
                                        points=pts, epsabs=0.0, epsrel=1e-12, limit=400)
                m.append(val)
        # central moments about ystar -> raw moments
        m0, c1, c2 = m
        terms.append((gstar, m0, c1 + ystar * m0, c2 + 2 * ystar * c1 + ystar**2 * m0))
    for loc, mass in model.atoms():
        if mass > 0:
            terms.append((t * loc + math.log(mass), 1.0, loc, loc * loc))
    top = max(s for s, *_ in terms)
    Z = M1 = M2 = 0.0
    for s, m0, m1, m2 in terms:
        w = math.exp(s - top)
        Z += w * m0
        M1 += w * m1
        M2 += w * m2
    mean = M1 / Z
    logmgf = 0.0 if t == 0 else top + math.log(Z)
    return logmgf, mean, max(M2 / Z - mean * mean, 0.0)


class GaussianScenery(SceneryModel):
    family = "gaussian"
    closed_form = True

    def __init__(self, sigma: float = 1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.tail = (0.5 / self.sigma**2, 2.0)

    def ppf(self, u):
        return self.sigma * special.ndtri(u)

    def logpdf(self, y):
        s = self.sigma
        return -0.5 * (y / s) ** 2 - math.log(s * math.sqrt(2 * math.pi))

    def cdf(self, y):
        return special.ndtr(np.asarray(y) / self.sigma)

    def pieces(self):
        return [(-math.inf, math.inf)]

    def H(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("cumulant functions are defined for t >= 0")
        out = 0.5 * self.sigma**2 * t * t
        return out if out.ndim else float(out)

    def dH(self, t):
        out = self.sigma**2 * np.asarray(t, dtype=float)
        return out if out.ndim else float(out)

    def d2H(self, t):
        out = np.full(np.shape(t), self.sigma**2)
        return out if out.ndim else float(out)

    def describe(self):
        return {**super().describe(), "sigma": self.sigma}


class WeibullTailScenery(SceneryModel):
    """Symmetric law with P(Y > r) = P(Y < -r) = exp(-D r^q) / 2 for r >= 0."""

    family = "weibull_tail"

    def __init__(self, D: float, q: float):
        if D <= 0 or q <= 1:
            raise ValueError("need D > 0 and q > 1")
        self.D, self.q = float(D), float(q)
        self.tail = (self.D, self.q)
        self._logc = math.log(0.5 * self.q * self.D)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        lower = u < 0.5
        tail_mass = np.where(lower, 2 * u, 2 * (1 - u))
        r = (-np.log(tail_mass) / self.D) ** (1 / self.q)
        return np.where(lower, -r, r)

    def logpdf(self, y):
        r = abs(y)
        if r == 0:
            return -math.inf
        return self._logc + (self.q - 1) * math.log(r) - self.D * r**self.q

    def sf(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= 0, 0.5 * np.exp(-self.D * np.abs(r) ** self.q),
                        1 - 0.5 * np.exp(-self.D * np.abs(r) ** self.q))

    def cdf(self, y):
        return 1 - self.sf(y)

    def pieces(self):
        return [(-math.inf, 0.0), (0.0, math.inf)]

    def describe(self):
        return {**super().describe(), "D": self.D, "q": self.q, "assumption_Y": "exact tail law"}


class BoundedUniformScenery(SceneryModel):
    family = "bounded_uniform"
    closed_form = True

    def __init__(self, a: float, b: float):
        if not a < b:
            raise ValueError("need a < b")
        self.a, self.b = float(a), float(b)

    def ppf(self, u):
        return self.a + (self.b - self.a) * np.asarray(u, dtype=float)

    def logpdf(self, y):
        return -math.log(self.b - self.a) if self.a <= y <= self.b else -math.inf

    def cdf(self, y):
        return np.clip((np.asarray(y, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def pieces(self):
        return [(self.a, self.b)]

    def _parts(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("cumulant functions are defined for t >= 0")
        w = self.b - self.a
        x = t * w
        return t, w, x

    def H(self, t):
        t, w, x = self._parts(t)
        # log E e^{tY} = t a + log((e^{x} - 1) / x), x = t (b - a)
        with np.errstate(divide="ignore", invalid="ignore"):
            small = np.abs(x) < 1e-6
            big = np.where(small, 0.0, x + np.log(-np.expm1(-np.where(small, 1.0, x))) - np.log(np.where(small, 1.0, x)))
            out = t * self.a + np.where(small, x / 2 + x * x / 24, big)
        return out if out.ndim else float(out)

    def dH(self, t):
        t, w, x = self._parts(t)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            small = np.abs(x) < 1e-4
            xs = np.where(small, 1.0, x)
            # mean of the tilted uniform: b - w (1/x - 1/(e^x - 1)) ... written stably
            frac = 1.0 / xs - 1.0 / np.expm1(xs)
            out = self.a + w * np.where(small, 0.5 + x / 12, 1.0 - frac)
        return out if out.ndim else float(out)

    def d2H(self, t):
        t, w, x = self._parts(t)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            small = np.abs(x) < 1e-3
            xs = np.where(small, 1.0, x)
            # variance of tilted uniform on [0,1]: 1/x^2 - e^x/(e^x-1)^2
            big = 1.0 / xs**2 - 1.0 / (4.0 * np.sinh(xs / 2) ** 2)
            out = w * w * np.where(small, 1.0 / 12 - x * x / 240, big)
        return out if out.ndim else float(out)

    def describe(self):
        return {**super().describe(), "a": self.a, "b": self.b}


class ShiftedScenery(SceneryModel):
    """Y + c for a base model Y."""

    family = "shifted"

    def __init__(self, base: SceneryModel, shift: float):
        self.base, self.shift = base, float(shift)
        self.closed_form = base.closed_form
        self.tail = base.tail

    def ppf(self, u):
        return self.base.ppf(u) + self.shift

    def logpdf(self, y):
        return self.base.logpdf(y - self.shift)

    def pieces(self):
        return [(lo + self.shift, hi + self.shift) for lo, hi in self.base.pieces()]

    def atoms(self):
        return [(x + self.shift, m) for x, m in self.base.atoms()]

    def H(self, t):
        return self.base.H(t) + self.shift * np.asarray(t, dtype=float) * 1.0

    def dH(self, t):
        return self.base.dH(t) + self.shift

    def d2H(self, t):
        return self.base.d2H(t)

    def describe(self):
        return {**super().describe(), "shift": self.shift, "base": self.base.describe()}


class FloorScenery(SceneryModel):
    """Law of max(Y, -M): the mass below -M moves to an atom at -M."""

    family = "floor"

    def __init__(self, base: SceneryModel, M: float):
        self.base, self.M = base, float(M)

    def logpdf(self, y):
        return self.base.logpdf(y)

    def pieces(self):
        out = []
        for lo, hi in self.base.pieces():
            lo = max(lo, -self.M)
            if lo < hi:
                out.append((lo, hi))
        return out

    def atoms(self):
        return [(-self.M, float(self.base.cdf(-self.M)))]

    def ppf(self, u):
        return np.maximum(self.base.ppf(u), -self.M)


class ConditionedScenery(SceneryModel):
    """Law of Y given Y >= -M."""

    family = "conditioned"

    def __init__(self, base: SceneryModel, M: float):
        self.base, self.M = base, float(M)
        self._F = float(self.base.cdf(-self.M))
        self._logZ = math.log1p(-self._F)

    def logpdf(self, y):
        return self.base.logpdf(y) - self._logZ

    def pieces(self):
        return FloorScenery.pieces(self)

    def ppf(self, u):
        return self.base.ppf(self._F + (1 - self._F) * np.asarray(u, dtype=float))


@dataclass(frozen=True)
class CutScenery:
    """Decomposition of scenery values at a cut level M."""

    base: SceneryModel
    M: float

    def lower(self, y):
        """y^{(<=M)} = max(min(y, M), -M)."""
        return np.clip(y, -self.M, self.M)

    def upper(self, y):
        """y^{(>M)} = (y - M)_+."""
        return np.maximum(np.asarray(y, dtype=float) - self.M, 0.0)

    def floor(self) -> FloorScenery:
        return FloorScenery(self.base, self.M)

    def conditioned(self) -> ConditionedScenery:
        return ConditionedScenery(self.base, self.M)


def cumulant(m: SceneryModel, t):
    """H(t) = log E exp(t Y) for t >= 0."""
    return m.H(t)


def model_from_config(spec: dict) -> SceneryModel:
    family = spec.get("family")
    params = dict(spec.get("params", {}))
    if family == "gaussian":
        return GaussianScenery(**params)
    if family == "weibull_tail":
        return WeibullTailScenery(**params)
    if family == "bounded_uniform":
        return BoundedUniformScenery(**params)
    if family == "shifted":
        return ShiftedScenery(model_from_config(params["base"]), params["shift"])
    raise ValueError(f"unknown scenery family {family!r}")


# ---------------------------------------------------------------------------
# fields


def field_values(m: SceneryModel, sites, seed: int, replicate=0) -> np.ndarray:
    """Scenery values at lattice ``sites`` (``(k, d)`` array) for one replicate."""
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size == 0:
        return np.zeros(0)
    return m.ppf(keyed_uniform(seed, pack(sites), replicate))


def sample_field(m: SceneryModel, sites: Sequence, seed: int, replicate: int = 0) -> dict:
    """i.i.d. scenery keyed by site; identical for any ordering of ``sites``."""
    sites = [tuple(int(c) for c in s) for s in sites]
    if len(set(sites)) != len(sites):
        raise ValueError("sites must be distinct")
    if not sites:
        return {}
    vals = field_values(m, np.array(sites), seed, replicate)
    return dict(zip(sites, vals.tolist()))


@dataclass(frozen=True)
class RescaledField:
    """x -> Y(floor(x alpha)) / b, piecewise constant on cells of side 1/alpha."""

    model: SceneryModel
    alpha: float
    b: float
    R: float
    seed: int
    replicate: int = 0

    def site_values(self, sites) -> np.ndarray:
        return field_values(self.model, sites, self.seed, self.replicate) / self.b

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if np.any(np.abs(x) > self.R):
            raise ValueError("point outside the box Q_R")
        return self.site_values(np.floor(x * self.alpha).astype(np.int64))


def rescaled_field(m: SceneryModel, alpha: float, b: float, R: float, seed: int, replicate: int = 0) -> RescaledField:
    if alpha < 1 or b < 1:
        raise ValueError("need alpha >= 1 and b >= 1")
    return RescaledField(m, float(alpha), float(b), float(R), seed, replicate)
