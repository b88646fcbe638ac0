"""Principal eigenvalues of (1/2) div(Gamma grad) + f and their lattice counterparts.

Three levels are compared:

* the continuum eigenvalue lambda_R(f) on a fine cell-centered grid,
* the principal eigenvalue of the transfer matrix A = e^{f_n/2a^2} P e^{f_n/2a^2}
  on the lattice box of side 2 R a (its log times a^2),
* the exact finite-n value (a^2/n) log E[exp(sum_k f_n(S_k)/a^2); S stays in box].
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kernels import MAX_TORUS_STATES, StepKernel, periodize, torus_index, torus_sites
from .localtimes import pack
from .varsolve.grid import GridFunction, stiffness

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class PotentialProblem:
    f: GridFunction
    Gamma: np.ndarray | None = None

    def __post_init__(self):
        G = np.eye(self.f.d) if self.Gamma is None else np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        if G.shape != (self.f.d, self.f.d):
            raise ValueError("Gamma has the wrong shape")
        object.__setattr__(self, "Gamma", G)

    @property
    def bc(self) -> str:
        return self.f.bc

    def operator(self) -> sp.csr_matrix:
        """Symmetric matrix whose top eigenvalue is lambda_R(f) on the grid."""
        f = self.f
        Q = stiffness(f.m, f.d, f.bc, f.h, self.Gamma)
        return (sp.diags(f.values.ravel()) - Q / (2 * f.cell_volume)).tocsr()

    def rayleigh(self, psi: np.ndarray) -> float:
        v = np.asarray(psi, dtype=float).ravel()
        return float(v @ (self.operator() @ v)) / float(v @ v)


@dataclass
class EigenResult:
    value: float
    psi: GridFunction
    converged: bool = True


def potential(fn: Callable, R: float, m: int, d: int = 1, bc: str = "dirichlet") -> GridFunction:
    """Sample ``fn(x_1, ..., x_d)`` at the cell centers of Q_R."""
    g = GridFunction.from_function(fn, R, m, d, bc)
    if not np.all(np.isfinite(g.values)):
        raise ValueError("potential must be bounded")
    return g


def _top_eigpair(M, seed: int = 0) -> tuple[float, np.ndarray, bool]:
    N = M.shape[0]
    if N <= DENSE_LIMIT:
        w, V = scipy.linalg.eigh(M.toarray() if sp.issparse(M) else M, subset_by_index=[N - 1, N - 1])
        return float(w[0]), V[:, 0], True
    v0 = np.random.default_rng(seed).random(N) + 0.5
    try:
        w, V = spla.eigsh(M, k=1, which="LA", v0=v0, tol=1e-12, maxiter=20 * N)
        return float(w[0]), V[:, 0], True
    except spla.ArpackNoConvergence as exc:
        if len(exc.eigenvalues):
            return float(exc.eigenvalues[0]), exc.eigenvectors[:, 0], False
        w, V = scipy.linalg.eigh(M.toarray(), subset_by_index=[N - 1, N - 1])
        return float(w[0]), V[:, 0], True


def principal_eigenvalue_continuum(prob: PotentialProblem, seed: int = 0) -> EigenResult:
    """Top of the spectrum of diag(f) - Q/(2h^d); eigenfunction positive with h^d sum psi^2 = 1."""
    if prob.f.m < 16:
        raise ValueError("mesh too coarse; need m >= 16")
    lam, v, ok = _top_eigpair(prob.operator(), seed)
    v = v / math.sqrt(prob.f.cell_volume * float(v @ v))
    if v.sum() < 0:
        v = -v
    return EigenResult(lam, prob.f.with_values(v.reshape(prob.f.values.shape)), ok)


# ---------------------------------------------------------------------------
# lattice transfer matrices


def cell_average(fn: Callable, sites: np.ndarray, alpha: float, order: int = 4) -> np.ndarray:
    """f_n(z) = alpha^d * integral of f over the cell z/alpha + [0, 1/alpha)^d."""
    sites = np.atleast_2d(sites)
    d = sites.shape[1]
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = (x + 1) / 2, w / 2
    out = np.zeros(len(sites))
    for idx in np.ndindex(*([order] * d)):
        pts = (sites + x[list(idx)]) / alpha
        out += np.prod(w[list(idx)]) * np.asarray(fn(*pts.T), dtype=float)
    return out


@dataclass
class TransferMatrix:
    """A(z, z') = e^{f_n(z)/2a^2} p(z, z') e^{f_n(z')/2a^2} on the box {-Ra..Ra-1}^d."""

    kernel: StepKernel
    R: float
    alpha: float
    bc: str
    sites: np.ndarray = field(repr=False)
    f_lattice: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, k: StepKernel, fn: Callable, R: float, alpha: float, bc: str = "dirichlet") -> "TransferMatrix":
        L = R * alpha
        if abs(L - round(L)) > 1e-9:
            raise ValueError("R * alpha must be an integer")
        L = int(round(L))
        N = (2 * L) ** k.d
        if N > MAX_TORUS_STATES:
            raise ValueError(f"box with {N} sites exceeds {MAX_TORUS_STATES}")
        if bc == "periodic":
            t = periodize(k, L)
            sites, P = t.sites(), t.matrix
        elif bc == "dirichlet":
            sites = torus_sites(k.d, L)
            P = np.zeros((N, N))
            rows = np.arange(N)
            for z, w in zip(k.offsets, k.probs):
                tgt = sites + z
                inside = np.all((tgt >= -L) & (tgt < L), axis=1)
                np.add.at(P, (rows[inside], torus_index(tgt[inside], L)), w)
        else:
            raise ValueError("bc must be dirichlet or periodic")
        f = cell_average(fn, sites, alpha)
        return cls(k, R, alpha, bc, sites, f, P)

    @property
    def half_weights(self) -> np.ndarray:
        return np.exp(self.f_lattice / (2 * self.alpha**2))

    @property
    def matrix(self) -> np.ndarray:
        e = self.half_weights
        return e[:, None] * self.P * e[None, :]

    def origin_index(self) -> int:
        return int(torus_index(np.zeros((1, self.kernel.d), dtype=np.int64), int(round(self.R * self.alpha)))[0])

    def eig(self):
        return np.linalg.eigh(self.matrix)

    def principal_eigenvalue(self) -> float:
        return float(self.eig()[0][-1])

    def lattice_limit(self) -> float:
        """alpha^2 log of the Perron root: the n -> infinity limit of the transfer value."""
        return self.alpha**2 * math.log(self.principal_eigenvalue())

    def cumulant(self, n: int) -> float:
        """(a^2/n) log E[exp(sum_{k<n} f_n(S_k)/a^2); S_0..S_{n-1} in the box], exactly."""
        if n < 1:
            raise ValueError("n must be >= 1")
        lam, V = self.eig()
        top = lam[-1]
        if top <= 0:
            return -math.inf
        e = self.half_weights
        o = self.origin_index()
        coef = V[o] * (V.T @ e)
        ratio = lam / top
        s = float(np.sum(coef * np.sign(ratio) ** (n - 1) * np.abs(ratio) ** (n - 1)))
        if s <= 0:
            return -math.inf
        return self.alpha**2 / n * ((n - 1) * math.log(top) + math.log(s) + math.log(e[o]))

    def cumulant_by_iteration(self, n: int) -> float:
        """Same quantity by n-1 matrix-vector products (an independent check)."""
        A = self.matrix
        e = self.half_weights
        v = e.copy()
        logscale = 0.0
        for _ in range(n - 1):
            v = A @ v
            s = v.max()
            if s == 0:
                return -math.inf
            v /= s
            logscale += math.log(s)
        o = self.origin_index()
        return self.alpha**2 / n * (logscale + math.log(v[o] * e[o]))


def transfer_cumulant(k: StepKernel, fn: Callable, R: float, alpha: float, n: int, bc: str = "dirichlet") -> float:
    return TransferMatrix.build(k, fn, R, alpha, bc).cumulant(n)


def survival_probability(k: StepKernel, R: float, alpha: float, n: int) -> float:
    """P(S_0..S_{n-1} all in the box), by direct vector iteration of the killed walk."""
    t = TransferMatrix.build(k, lambda *x: np.zeros_like(x[0]), R, alpha, "dirichlet")
    v = np.zeros(len(t.sites))
    v[t.origin_index()] = 1.0
    for _ in range(n - 1):
        v = v @ t.P
    return float(v.sum())


def convergence_table(k: StepKernel, fn: Callable, R: float, alphas, Ts, m: int = 1024, bc: str = "dirichlet") -> list[dict]:
    """Rows (alpha, T, n, value, lattice_eig, continuum_eig) for the two-step limit."""
    cont = principal_eigenvalue_continuum(PotentialProblem(potential(fn, R, m, k.d, bc), k.covariance)).value
    rows = []
    for a in alphas:
        t = TransferMatrix.build(k, fn, R, a, bc)
        lat = t.lattice_limit()
        for T in Ts:
            n = int(round(T * a * a))
            rows.append({"alpha": a, "T": T, "n": n, "value": t.cumulant(n),
                         "lattice_eig": lat, "continuum_eig": cont})
    return rows


def table_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: (repr(float(r[c])) if isinstance(r[c], float) else r[c]) for c in columns})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# discrete Dirichlet form


def discrete_dirichlet_form(k: StepKernel, g) -> float:
    """(1/2) sum_{z, z'} p(z, z') (g(z) - g(z'))^2 for finitely supported g.

    ``g`` is a dict {site tuple: value} or a pair (sites array, values array).
    Uses the identity sum_z g(z)^2 - sum_{z, o} p(o) g(z) g(z + o).
    """
    if isinstance(g, dict):
        sites = np.array(list(g.keys()), dtype=np.int64).reshape(len(g), -1) if g else np.zeros((0, k.d), np.int64)
        vals = np.array(list(g.values()), dtype=float)
    else:
        sites, vals = np.atleast_2d(np.asarray(g[0], dtype=np.int64)), np.asarray(g[1], dtype=float)
    if len(vals) == 0:
        return 0.0
    keys = pack(sites)
    order = np.argsort(keys)
    keys, vals, sites = keys[order], vals[order], sites[order]
    total = float(vals @ vals)
    for o, w in zip(k.offsets, k.probs):
        nk = pack(sites + o)
        pos = np.clip(np.searchsorted(keys, nk), 0, len(keys) - 1)
        hit = keys[pos] == nk
        total -= w * float(np.dot(vals[hit], vals[pos[hit]]))
    return total


def lattice_sample(fn: Callable, alpha: float, R: float, d: int) -> tuple[np.ndarray, np.ndarray]:
    """g(z) = alpha^{-d/2} psi((z + 1/2)/alpha) on the box {-Ra..Ra-1}^d."""
    L = int(math.ceil(R * alpha))
    sites = torus_sites(d, L)
    x = (sites + 0.5) / alpha
    return sites, alpha ** (-d / 2) * np.asarray(fn(*x.T), dtype=float)
