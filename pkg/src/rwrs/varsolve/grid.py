"""Cell-centered grids on Q_R = [-R, R]^d, the discrete energy and mollifiers."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

BOUNDARY_MODES = ("dirichlet", "periodic")


@dataclass(frozen=True)
class GridFunction:
    """Values at the m^d cell centers of Q_R, with mesh width h = 2R/m."""

    R: float
    m: int
    values: np.ndarray
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.bc not in BOUNDARY_MODES:
            raise ValueError(f"unknown boundary mode {self.bc!r}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 1 or any(s != self.m for s in v.shape):
            raise ValueError("values must have shape (m,)*d")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function has non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.m

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def axis(self) -> np.ndarray:
        return -self.R + (np.arange(self.m) + 0.5) * self.h

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis()] * self.d), indexing="ij")

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def lp_norm(self, p: float) -> float:
        return float((np.sum(np.abs(self.values) ** p) * self.cell_volume) ** (1.0 / p))

    def with_values(self, values) -> "GridFunction":
        return replace(self, values=np.asarray(values, dtype=float))

    def normalized_density(self) -> "GridFunction":
        if np.any(self.values < 0):
            raise ValueError("a density must be nonnegative")
        return self.with_values(self.values / self.integral())

    @classmethod
    def from_function(cls, fn, R: float, m: int, d: int, bc: str = "dirichlet") -> "GridFunction":
        g = cls(R, m, np.zeros((m,) * d), bc)
        return g.with_values(fn(*g.mesh()))


def _diff_1d(m: int, bc: str) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """1-D forward difference and the matching cell selector.

    Dirichlet: cells -1..m-1 (m+1 rows) with zero values outside the grid.
    Periodic: cells 0..m-1 with wrap-around.
    """
    if bc == "periodic":
        D = sp.diags([-np.ones(m), np.ones(m - 1)], [0, 1], shape=(m, m), format="lil")
        D[m - 1, 0] += 1.0
        return D.tocsr(), sp.identity(m, format="csr")
    D = sp.diags([-np.ones(m), np.ones(m)], [-1, 0], shape=(m + 1, m), format="csr")
    S = sp.diags([np.ones(m)], [-1], shape=(m + 1, m), format="csr")
    return D, S


@lru_cache(maxsize=64)
def _stiffness(m: int, d: int, bc: str, h: float, gamma: tuple) -> sp.csr_matrix:
    G = np.asarray(gamma, dtype=float).reshape(d, d)
    D1, S1 = _diff_1d(m, bc)
    Ds = []
    for k in range(d):
        op = None
        for j in range(d):
            f = D1 if j == k else S1
            op = f if op is None else sp.kron(op, f, format="csr")
        Ds.append(op)
    Q = None
    for k in range(d):
        for l in range(d):
            if G[k, l] == 0:
                continue
            term = G[k, l] * (Ds[k].T @ Ds[l])
            Q = term if Q is None else Q + term
    return (h ** (d - 2) * Q).tocsr()


def stiffness(m: int, d: int, bc: str, h: float, Gamma) -> sp.csr_matrix:
    """Sparse Q with energy(psi) = psi^T Q psi / 2 (psi flattened in C order)."""
    G = np.atleast_2d(np.asarray(Gamma, dtype=float))
    if G.shape != (d, d):
        raise ValueError(f"Gamma must be {d}x{d}")
    return _stiffness(m, d, bc, float(h), tuple(G.ravel().tolist()))


def energy(psi: GridFunction, Gamma) -> float:
    """(1/2) |Gamma^{1/2} grad psi|^2 integrated, with forward differences."""
    Q = stiffness(psi.m, psi.d, psi.bc, psi.h, Gamma)
    v = psi.values.ravel()
    return 0.5 * float(v @ (Q @ v))


# ---------------------------------------------------------------------------
# mollifier


class UnderResolvedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Mollifier:
    """Bump exp(-1/(1-|x/delta|^2)) sampled on the grid, normalized so h^d sum = 1."""

    delta: float
    h: float
    d: int
    weights: np.ndarray

    @property
    def radius_cells(self) -> int:
        return self.weights.shape[0] // 2

    @property
    def resolved(self) -> bool:
        return self.delta >= self.h


def make_mollifier(delta: float, h: float, d: int) -> Mollifier:
    if delta <= 0:
        raise ValueError("delta must be positive")
    r = int(np.ceil(delta / h))
    ax = np.arange(-r, r + 1) * h
    X = np.meshgrid(*([ax] * d), indexing="ij")
    rho2 = sum(x * x for x in X) / delta**2
    w = np.zeros_like(rho2)
    inside = rho2 < 1
    w[inside] = np.exp(-1.0 / (1.0 - rho2[inside]))
    if w.sum() == 0:
        w[(r,) * d] = 1.0
    w /= w.sum() * h**d
    return Mollifier(float(delta), float(h), d, w)


def mollify(f: GridFunction, kappa: Mollifier) -> GridFunction:
    """f * kappa.  Periodic grids wrap; Dirichlet grids are extended by the
    kernel radius so that no mass is lost."""
    if abs(kappa.h - f.h) > 1e-12 * f.h or kappa.d != f.d:
        raise ValueError("mollifier built for a different grid")
    if not kappa.resolved:
        warnings.warn(f"mollifier width {kappa.delta} below mesh width {f.h}; returning input",
                      UnderResolvedWarning, stacklevel=2)
        return f
    w = kappa.weights * f.cell_volume
    if f.bc == "periodic":
        if kappa.weights.shape[0] > f.m:
            raise ValueError("mollifier wider than the torus")
        out = ndimage.convolve(f.values, w, mode="wrap")
        return f.with_values(out)
    r = kappa.radius_cells
    padded = np.pad(f.values, r)
    out = ndimage.convolve(padded, w, mode="constant", cval=0.0)
    return GridFunction(f.R + r * f.h, f.m + 2 * r, out, "dirichlet")


def mollify_adjoint(g: np.ndarray, kappa: Mollifier, bc: str, h: float) -> np.ndarray:
    """Adjoint of :func:`mollify` (in the Euclidean pairing of value arrays)."""
    if not kappa.resolved:
        return g
    w = kappa.weights * h ** kappa.d
    if bc == "periodic":
        return ndimage.convolve(g, w, mode="wrap")
    r = kappa.radius_cells
    full = ndimage.convolve(g, w, mode="constant", cval=0.0)
    return full[(slice(r, -r),) * g.ndim] if r else full
