"""Finite-range symmetric step kernels, their torus versions and Green's functions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

MAX_TORUS_STATES = 20000


@dataclass(frozen=True)
class StepKernel:
    """One-step law of a lattice walk: a finite list of (offset, probability).

    Offsets are stored as an ``(k, d)`` integer array, probabilities as a
    length-``k`` float array.  Construction validates normalization,
    nonnegativity, exact symmetry ``p(z) == p(-z)`` and regularity of the
    covariance.
    """

    offsets: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        off = np.atleast_2d(np.asarray(self.offsets, dtype=np.int64))
        pr = np.asarray(self.probs, dtype=np.float64).ravel()
        if off.shape[0] != pr.shape[0]:
            raise ValueError("offsets and probs have different lengths")
        if off.shape[1] < 1:
            raise ValueError("dimension must be at least 1")
        # merge duplicate offsets
        uniq, inv = np.unique(off, axis=0, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv.ravel(), pr)
        keep = merged > 0
        off, pr = uniq[keep], merged[keep]
        if np.any(pr < 0):
            raise ValueError("negative step probability")
        if abs(pr.sum() - 1.0) > 1e-12:
            raise ValueError(f"step probabilities sum to {pr.sum()!r}, not 1")
        weights = {tuple(z): w for z, w in zip(off.tolist(), pr)}
        for z, w in weights.items():
            if weights.get(tuple(-c for c in z), 0.0) != w:
                raise ValueError(f"kernel is not symmetric at offset {z}")
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "probs", pr)
        if np.linalg.det(self.covariance) <= 1e-12:
            raise ValueError("step covariance is singular")

    @property
    def d(self) -> int:
        return self.offsets.shape[1]

    @cached_property
    def covariance(self) -> np.ndarray:
        z = self.offsets.astype(np.float64)
        return (z * self.probs[:, None]).T @ z

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.offsets.astype(np.float64)

    @property
    def support_radius(self) -> int:
        return int(np.abs(self.offsets).max())

    def support(self) -> list[tuple[tuple[int, ...], float]]:
        return [(tuple(z), float(w)) for z, w in zip(self.offsets.tolist(), self.probs)]

    def sample_steps(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Draw i.i.d. steps; returns an int64 array of shape ``shape + (d,)``."""
        idx = rng.choice(len(self.probs), size=shape, p=self.probs)
        return self.offsets[idx]


def make_srw(d: int) -> StepKernel:
    """Simple random walk on Z^d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    eye = np.eye(d, dtype=np.int64)
    return StepKernel(np.vstack([eye, -eye]), np.full(2 * d, 1.0 / (2 * d)))


def kernel_from_config(spec) -> StepKernel:
    """Build a kernel from a built-in name (``"srw-1d"`` etc.) or a list of
    ``{"offset": [...], "prob": p}`` entries."""
    if isinstance(spec, str):
        names = {"srw-1d": 1, "srw-2d": 2, "srw-3d": 3}
        if spec not in names:
            raise ValueError(f"unknown kernel name {spec!r}")
        return make_srw(names[spec])
    entries = list(spec)
    if not entries:
        raise ValueError("empty kernel specification")
    for e in entries:
        if set(e) != {"offset", "prob"}:
            raise ValueError(f"kernel entry must have keys offset, prob: {e!r}")
    return StepKernel([e["offset"] for e in entries], [e["prob"] for e in entries])


# ---------------------------------------------------------------------------
# torus


def torus_sites(d: int, R: int) -> np.ndarray:
    """Sites of the torus of radius R as an ``((2R)^d, d)`` array.

    Coordinates run over {-R, ..., R-1}; the ordering is C-order over that box.
    """
    axis = np.arange(-R, R)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def wrap(z: np.ndarray, R: int) -> np.ndarray:
    """Reduce lattice points modulo 2R into {-R, ..., R-1}."""
    return np.mod(np.asarray(z) + R, 2 * R) - R


def torus_index(z: np.ndarray, R: int) -> np.ndarray:
    """Flat C-order index of (already wrapped) torus points."""
    z = np.atleast_2d(z) + R
    side = 2 * R
    idx = np.zeros(z.shape[0], dtype=np.int64)
    for k in range(z.shape[1]):
        idx = idx * side + z[:, k]
    return idx


@dataclass(frozen=True)
class TorusKernel:
    base: StepKernel
    R: int
    matrix: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    def sites(self) -> np.ndarray:
        return torus_sites(self.d, self.R)

    def index_of(self, z) -> np.ndarray:
        return torus_index(wrap(np.atleast_2d(z), self.R), self.R)


def periodize(k: StepKernel, R: int) -> TorusKernel:
    """Transition matrix of the walk wrapped onto the torus of side 2R.

    Every step z from site x lands on ``wrap(x + z)``; probabilities of steps
    that alias to the same target add up, which is the finite sum over lattice
    translates by multiples of 2R.
    """
    R = int(R)
    if R < 1:
        raise ValueError("R must be >= 1")
    if 2 * R + 1 <= 2 * k.support_radius:
        raise ValueError("torus too small for the kernel support")
    sites = torus_sites(k.d, R)
    N = sites.shape[0]
    if N > MAX_TORUS_STATES:
        raise ValueError(f"torus with {N} states exceeds {MAX_TORUS_STATES}")
    P = np.zeros((N, N))
    rows = np.arange(N)
    for z, w in zip(k.offsets, k.probs):
        cols = torus_index(wrap(sites + z, R), R)
        np.add.at(P, (rows, cols), w)
    return TorusKernel(k, R, P)


def transition_power(t: TorusKernel, s: int) -> np.ndarray:
    """s-step transition matrix by repeated squaring."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    result = np.eye(t.n_states)
    base = t.matrix.copy()
    while s:
        if s & 1:
            result = result @ base
        s >>= 1
        if s:
            base = base @ base
    return result


def green_function(t: TorusKernel, lam: float) -> np.ndarray:
    """G = sum_s e^{-lam s} P^s, from the linear system (I - e^{-lam} P) G = I."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    N = t.n_states
    A = np.eye(N) - math.exp(-lam) * t.matrix
    G = scipy.linalg.solve(A, np.eye(N), assume_a="sym")
    resid = np.abs(A @ G - np.eye(N)).max()
    if resid > 1e-9:
        raise RuntimeError(f"Green's function solve residual {resid:.3e}")
    return G


def _green_row(t: TorusKernel, lam: float, x: int = 0) -> np.ndarray:
    # one row only: solve (I - e^{-lam} P) g = e_x (P symmetric)
    N = t.n_states
    A = np.eye(N) - math.exp(-lam) * t.matrix
    e = np.zeros(N)
    e[x] = 1.0
    g = scipy.linalg.solve(A, e, assume_a="sym")
    if np.abs(A @ g - e).max() > 1e-9:
        raise RuntimeError("Green's function solve residual too large")
    return g


def green_growth_exponent(
    k: StepKernel,
    R: float,
    p_prime: float,
    alphas: Sequence[float],
) -> tuple[float, np.ndarray]:
    """Log-log slope of ``sum_y G^{(R alpha)}_{alpha^-2}(0, y)^p'`` against alpha.

    Returns ``(slope, sums)``.  The growth bound predicts a slope of at most
    ``d + (2 - d) p'``.
    """
    d = k.d
    if p_prime <= 1:
        raise ValueError("p' must exceed 1")
    if d >= 3 and p_prime >= d / (d - 2):
        raise ValueError(f"p' must be below d/(d-2) = {d / (d - 2)} in d={d}")
    alphas = np.asarray(list(alphas), dtype=float)
    if alphas.size < 2:
        raise ValueError("need at least two scales to fit a slope")
    sums = []
    for a in alphas:
        t = periodize(k, math.ceil(R * a))
        origin = int(t.index_of(np.zeros(d, dtype=np.int64))[0])
        g = _green_row(t, a ** -2.0, origin)
        sums.append(np.sum(g ** p_prime))
    sums = np.asarray(sums)
    slope = np.polyfit(np.log(alphas), np.log(sums), 1)[0]
    return float(slope), sums

