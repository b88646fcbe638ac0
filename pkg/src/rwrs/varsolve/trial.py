"""Radial trial functions showing chi = 0 when d > 2q.

psi_n^2 = f(|x|) with f(r) = D r^{-gamma} on (0, 1], D on (1, A], and
D A^{2d} r^{-2d} beyond A.  Along the schedule D = n^{-decay}, A = D^{-1/d},
gamma = (d - D^p)/p the L^2 and L^{2p} norms settle while the energy vanishes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class TrialPoint:
    d: int
    p: float
    n: float
    D: float
    A: float
    gamma: float
    l2_sq: float  # ||psi||_2^2
    l2p_pow: float  # ||psi||_{2p}^{2p}
    half_grad_sq: float  # (1/2) ||grad psi||_2^2
    quad: tuple[float, float, float]
    limits: tuple[float, float]

    @property
    def quad_gap(self) -> float:
        closed = (self.l2_sq, self.l2p_pow, self.half_grad_sq)
        return max(abs(a - b) / abs(a) for a, b in zip(closed, self.quad))

    def to_json(self) -> dict:
        return {
            "d": self.d, "p": self.p, "n": self.n, "D": self.D, "A": self.A, "gamma": self.gamma,
            "l2_sq": self.l2_sq, "l2p_pow": self.l2p_pow, "half_grad_sq": self.half_grad_sq,
            "quadrature": list(self.quad), "quad_gap": self.quad_gap,
            "limit_l2_sq": self.limits[0], "limit_l2p_pow": self.limits[1],
        }


def trial_parameters(d: int, p: float, n: float, decay: float = 1.0) -> tuple[float, float, float]:
    D = float(n) ** (-decay)
    return D, D ** (-1.0 / d), (d - D**p) / p


def _closed_forms(d, p, D, A, g):
    w = sphere_area(d)
    l2 = w / d * D * (2 * A**d + g / (d - g))
    l2p = w * D**p * (p / d) * (g / (d - p * g) + 2 * A**d / (2 * p - 1))
    grad = 0.25 * w * D * (g * g / (d - g - 2) + 4 * d * d * A ** (d - 2) / (d + 2))
    return l2, l2p, 0.5 * grad


def _radial_power(d, c, e, a, b):
    """int_a^b c r^e r^{d-1} dr by quadrature.

    Near-critical exponents at 0 or infinity are handled with QUADPACK's
    algebraic endpoint weight (the tail is mapped to (0, 1] by r = a/s).
    """
    k = e + d
    one = lambda s: 1.0
    if a == 0.0:
        val, _ = integrate.quad(one, 0.0, b, weight="alg", wvar=(k - 1, 0.0))
        return c * val
    if math.isinf(b):
        val, _ = integrate.quad(one, 0.0, 1.0, weight="alg", wvar=(-k - 1, 0.0))
        return c * a**k * val
    val, _ = integrate.quad(lambda r: r ** (k - 1), a, b, epsabs=0, epsrel=1e-12, limit=400)
    return c * val


def _quadrature(d, p, D, A, g):
    """Independent evaluation of the three integrals by 1-D radial quadrature.

    Each piece of psi^2 and of |psi'|^2 is a power c r^e on its interval.
    """
    w = sphere_area(d)
    # (interval, psi^2 as (c, e), |psi'|^2 as (c, e))
    pieces = [
        (0.0, 1.0, (D, -g), (0.25 * g * g * D, -g - 2)),
        (1.0, A, (D, 0.0), (0.0, 0.0)),
        (A, math.inf, (D * A ** (2 * d), -2 * d), (d * d * D * A ** (2 * d), -2 * d - 2)),
    ]
    l2 = l2p = grad = 0.0
    for a, b, (c, e), (cg, eg) in pieces:
        if b <= a:
            continue
        l2 += _radial_power(d, c, e, a, b)
        l2p += _radial_power(d, c**p, e * p, a, b)
        if cg:
            grad += _radial_power(d, cg, eg, a, b)
    return w * l2, w * l2p, 0.5 * w * grad


def trial_sequence_chi_zero(d: int, p: float, n: float, decay: float = 1.0) -> TrialPoint:
    """Closed-form norms and energy of the n-th trial function, plus quadrature."""
    q = p / (p - 1)
    if d <= 2 * q:
        raise ValueError(f"trial sequence needs d > 2q = {2 * q:g}; got d = {d}")
    if n < 1:
        raise ValueError("n must be >= 1")
    D, A, g = trial_parameters(d, p, n, decay)
    closed = _closed_forms(d, p, D, A, g)
    w = sphere_area(d)
    return TrialPoint(d, p, float(n), D, A, g, *closed, quad=_quadrature(d, p, D, A, g), limits=(2 * w / d, w))


def rescaled_K_objective(l2_sq: float, l2p_pow: float, half_grad_sq: float, d: int, p: float, D: float = 0.5) -> float:
    """inf over dilations of energy + D ||psi^2||_p^{-q} for psi normalized in L^2.

    Dilating by beta multiplies the energy by beta^2 and the second term by
    beta^{-d}; the infimum of a beta^2 + b beta^{-d} is
    (d+2)/d * (d a / 2)^{d/(d+2)} b^{2/(d+2)}.
    """
    q = p / (p - 1)
    a = half_grad_sq / l2_sq
    b = D * (l2p_pow ** (1 / p) / l2_sq) ** (-q)
    return (d + 2) / d * (d * a / 2) ** (d / (d + 2)) * b ** (2 / (d + 2))


def gaussian_moments(d: int, p: float, s: float = 1.0) -> tuple[float, float, float]:
    """(||psi||_2^2, ||psi||_{2p}^{2p}, (1/2)||grad psi||^2) for the unit-mass Gaussian of width s."""
    c = (math.pi * s * s) ** (-d / 2)
    return 1.0, c**p * (math.pi * s * s / p) ** (d / 2), d / (4 * s * s)
