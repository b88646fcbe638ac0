"""Minimization on the discrete unit L^2 sphere: chi, K_{D,q} and K_H(u)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import GridFunction, energy, make_mollifier, mollify, mollify_adjoint, stiffness
from .phi import PhiResult, PowerCumulant, phi_H, phi_gradient

MODES = ("chi", "K_Dq", "K_H")


@dataclass
class RateProblem:
    """One variational problem on the box Q_R = [-R, R]^d."""

    d: int = 1
    mode: str = "K_Dq"
    Gamma: np.ndarray | None = None
    D: float = 0.5
    q: float = 2.0
    scenery: object | None = None  # anything with H, dH, d2H; mode K_H only
    u: float = 1.0
    R: float = 8.0
    m: int = 128
    bc: str = "dirichlet"
    delta: float = 0.0
    max_iter: int = 20000
    tol: float = 1e-9
    n_restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        self.Gamma = np.eye(self.d) if self.Gamma is None else np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        G = self.Gamma
        if G.shape != (self.d, self.d) or not np.allclose(G, G.T) or np.linalg.eigvalsh(G).min() <= 0:
            raise ValueError("Gamma must be a symmetric positive definite d x d matrix")
        if self.mode in ("chi", "K_Dq") and self.q <= 1:
            raise ValueError("q must exceed 1")
        if self.mode == "K_Dq" and self.D <= 0:
            raise ValueError("D must be positive")
        if self.mode == "K_H" and self.u <= 0:
            raise ValueError("u must be positive")
        if self.R <= 0 or self.m < 2:
            raise ValueError("need R > 0 and m >= 2")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.bc not in ("dirichlet", "periodic"):
            raise ValueError("bc must be dirichlet or periodic")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")

    @property
    def p(self) -> float:
        return self.q / (self.q - 1)

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.m

    @property
    def cumulant(self):
        return self.scenery if self.scenery is not None else PowerCumulant.from_tail(self.D, self.q)

    def grid(self, values=None) -> GridFunction:
        v = np.zeros((self.m,) * self.d) if values is None else np.reshape(values, (self.m,) * self.d)
        return GridFunction(self.R, self.m, v, self.bc)

    def grid_info(self) -> dict:
        return {"R": self.R, "m": self.m, "delta": self.delta, "bc": self.bc}


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptResult:
    psi: np.ndarray
    value: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list, repr=False)


def _normalize(psi: np.ndarray, w: float) -> np.ndarray:
    return psi / math.sqrt(w * float(np.dot(psi, psi)))


def minimize_on_sphere(
    fg: Callable[[np.ndarray], tuple[float, np.ndarray]],
    psi0: np.ndarray,
    w: float,
    max_iter: int = 20000,
    tol: float = 1e-9,
    window: int = 50,
    callback: Callable[[np.ndarray], None] | None = None,
) -> OptResult:
    """Projected gradient descent on {w * sum psi^2 = 1}.

    Barzilai-Borwein steps (alternating long/short) with a nonmonotone Armijo
    backtracking; the iterate is renormalized after every step.  Stops once the
    objective has changed by less than ``tol`` (relative) over ``window``
    accepted iterations.
    """
    psi = _normalize(np.asarray(psi0, dtype=float).ravel(), w)
    F, G = fg(psi)
    if not math.isfinite(F):
        return OptResult(psi, F, False, 0, [F])

    def tangent(x, g):
        return g - (np.dot(g, x) / np.dot(x, x)) * x

    gt = tangent(psi, G)
    gn = float(np.linalg.norm(gt))
    tau = 1e-2 * float(np.linalg.norm(psi)) / gn if gn > 0 else 1.0
    hist = [F]
    best = (F, psi)
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        if gn == 0.0:
            converged = True
            break
        ref = max(hist[-10:])
        accepted = False
        for _ in range(60):
            trial = _normalize(psi - tau * gt, w)
            Ft, Gt = fg(trial)
            if Ft <= ref - 1e-4 * tau * gn * gn:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            # no representable descent left along the gradient
            converged = True
            break
        gtt = tangent(trial, Gt)
        s = trial - psi
        y = gtt - gt
        sy = abs(float(np.dot(s, y)))
        if sy > 0:
            tau = float(np.dot(s, s)) / sy if k % 2 else sy / float(np.dot(y, y))
        tau = min(max(tau, 1e-12), 1e12)
        psi, F, gt = trial, Ft, gtt
        gn = float(np.linalg.norm(gt))
        hist.append(F)
        if F < best[0]:
            best = (F, psi)
        if callback is not None:
            callback(psi)
        if k >= window and abs(hist[-window - 1] - best[0]) <= tol * abs(best[0]):
            converged = True
            break
    return OptResult(best[1], best[0], converged, k, hist)


def initial_guess(prob: RateProblem, restart: int) -> np.ndarray:
    """Gaussian bump plus a 1e-3 floor; restart 0 is centered, others random."""
    X = prob.grid().mesh()
    R = prob.R
    if restart == 0:
        c = np.zeros(prob.d)
        s = R / 4
    else:
        rng = np.random.default_rng([prob.seed, restart])
        c = rng.uniform(-R / 4, R / 4, size=prob.d)
        s = R / 4 * rng.uniform(0.5, 2.0)
    r2 = sum((x - ci) ** 2 for x, ci in zip(X, c))
    return (np.exp(-r2 / (2 * s * s)) + 1e-3).ravel()


# ---------------------------------------------------------------------------
# objectives


class _Objective:
    """Shared pieces: the discrete energy and the (optional) mollified density."""

    def __init__(self, prob: RateProblem):
        self.prob = prob
        self.w = prob.h ** prob.d
        self.shape = (prob.m,) * prob.d
        self.Q = stiffness(prob.m, prob.d, prob.bc, prob.h, prob.Gamma)
        self.kappa = None
        if prob.delta > 0:
            k = make_mollifier(prob.delta, prob.h, prob.d)
            if k.resolved:
                self.kappa = k
            else:
                warnings.warn("mollifier width below mesh width; solving without mollification", stacklevel=3)

    def energy(self, psi):
        Qpsi = self.Q @ psi
        return 0.5 * float(psi @ Qpsi), Qpsi

    def density(self, psi) -> np.ndarray:
        g = (psi * psi).reshape(self.shape)
        if self.kappa is None:
            return g
        gf = GridFunction(self.prob.R, self.prob.m, g, self.prob.bc)
        return mollify(gf, self.kappa).values

    def pull_back(self, psi, dF_dg) -> np.ndarray:
        """Chain rule through g = (psi^2) * kappa."""
        if self.kappa is not None:
            dF_dg = mollify_adjoint(dF_dg, self.kappa, self.prob.bc, self.prob.h)
        return 2.0 * psi * dF_dg.ravel()


class KDqObjective(_Objective):
    """energy(psi) + D * ||psi^2 (* kappa)||_p^{-q}."""

    def __call__(self, psi):
        P = self.prob
        E, Qpsi = self.energy(psi)
        g = self.density(psi)
        N = self.w * float(np.sum(g**P.p))
        T = P.D * N ** (-P.q / P.p)
        dT = -P.D * P.q * N ** (-P.q / P.p - 1) * self.w * g ** (P.p - 1)
        return E + T, Qpsi + self.pull_back(psi, dT)


class ChiObjective(_Objective):
    """Scale-free form energy(psi) * ||psi||_{2p}^{-4q/d} (no mollifier).

    The continuum form is flat along dilations, but on a grid it is not: left
    alone, iterates drift toward grid-scale spikes where the discrete ratio
    undercuts the continuum one.  The factor ``1 + anchor * (log N)^2`` with
    N = ||psi||_{2p}^{2p} pins the second constraint ||psi||_{2p} = 1 and equals
    one on it.  Being multiplicative it keeps the objective linear in Gamma.
    ``scale_free`` is the unpenalized ratio that gets reported.
    """

    anchor = 1.0

    def parts(self, psi):
        P = self.prob
        a = 2 * P.q / (P.p * P.d)
        E, Qpsi = self.energy(psi)
        ap = np.abs(psi)
        N = self.w * float(np.sum(ap ** (2 * P.p)))
        dN = self.w * 2 * P.p * ap ** (2 * P.p - 2) * psi
        F = E * N**-a
        return F, Qpsi * N**-a - a * E * N ** (-a - 1) * dN, N, dN

    def scale_free(self, psi) -> float:
        return self.parts(psi)[0]

    def __call__(self, psi):
        F, G, N, dN = self.parts(psi)
        L = math.log(N)
        pen = 1.0 + self.anchor * L * L
        return F * pen, G * pen + F * 2 * self.anchor * L / N * dN


class KHObjective(_Objective):
    """energy(psi) + Phi_H(psi^2 (* kappa), u); the inner sup is warm-started."""

    def __init__(self, prob: RateProblem):
        super().__init__(prob)
        self.H = prob.cumulant
        self.last: PhiResult | None = None

    def phi(self, psi) -> tuple[PhiResult, np.ndarray]:
        g = self.density(psi)
        w = self.prob.h ** self.prob.d
        g0 = self.last.gamma if self.last is not None and self.last.finite and self.last.gamma > 0 else None
        res = phi_H(g, w, self.prob.u, self.H, gamma0=g0)
        if res.finite:
            self.last = res
        return res, g

    def __call__(self, psi):
        E, Qpsi = self.energy(psi)
        res, g = self.phi(psi)
        if not res.finite:
            return math.inf, np.full_like(psi, math.nan)
        dphi = phi_gradient(g, self.w, res, self.H)
        return E + res.value, Qpsi + self.pull_back(psi, dphi)


_OBJECTIVES = {"K_Dq": KDqObjective, "chi": ChiObjective, "K_H": KHObjective}


def objective(prob: RateProblem) -> _Objective:
    return _OBJECTIVES[prob.mode](prob)


# ---------------------------------------------------------------------------
# solvers


@dataclass
class SolveResult:
    mode: str
    value: float
    psi: GridFunction
    converged: bool
    finite: bool = True
    gamma: float | None = None
    restarts: list = field(default_factory=list)
    iterations: int = 0
    grid: dict = field(default_factory=dict)
    restart_minimizers: list = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        out = {
            "mode": self.mode,
            "value": self.value if self.finite else None,
            "finite": self.finite,
            "converged": self.converged,
            "grid": self.grid,
            "restart_values": [v if math.isfinite(v) else None for v in self.restarts],
            "iterations": self.iterations,
        }
        if self.gamma is not None:
            out["gamma"] = self.gamma
        return out


def _run(prob: RateProblem, obj: _Objective, psi0=None) -> SolveResult:
    runs = []
    starts = [np.asarray(psi0, dtype=float).ravel()] if psi0 is not None else [
        initial_guess(prob, j) for j in range(prob.n_restarts)
    ]
    for x0 in starts:
        runs.append(minimize_on_sphere(obj, x0, obj.w, prob.max_iter, prob.tol))
    best = min(runs, key=lambda r: r.value)
    psi = prob.grid(np.abs(best.psi))
    finite = math.isfinite(best.value)
    return SolveResult(
        mode=prob.mode,
        value=best.value,
        psi=psi,
        converged=best.converged and finite,
        finite=finite,
        restarts=[r.value for r in runs],
        iterations=sum(r.iterations for r in runs),
        grid=prob.grid_info(),
        restart_minimizers=[np.abs(r.psi) for r in runs],
    )


def _check_floor(prob: RateProblem, obj: _Objective, psi: np.ndarray) -> None:
    # a unit-mass density on a box of volume V has ||g||_p >= V^{-1/q}
    g = obj.density(psi)
    vol = g.size * obj.w
    norm = (obj.w * float(np.sum(g**prob.p))) ** (1 / prob.p)
    assert norm >= vol ** (-1 / prob.q) * (1 - 1e-9), "L^p floor violated"


def solve_K_Dq(prob: RateProblem, psi0=None) -> SolveResult:
    """K_{D,q} on the grid: Dirichlet box value or periodic (mollified) value."""
    prob = replace(prob, mode="K_Dq")
    obj = KDqObjective(prob)
    res = _run(prob, obj, psi0)
    _check_floor(prob, obj, res.psi.values.ravel())
    return res


@dataclass
class ChiResult:
    value: float
    route_a: float
    route_b: float
    route_gap: float
    kappa: float
    psi: GridFunction
    converged: bool
    K_Dq: float
    grid: dict = field(default_factory=dict)
    restarts: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "mode": "chi",
            "restart_values": self.restarts,
            "value": self.value,
            "route_a": self.route_a,
            "route_b": self.route_b,
            "route_gap": self.route_gap,
            "kappa": self.kappa,
            "K_Dq": self.K_Dq,
            "converged": self.converged,
            "grid": self.grid,
        }


def K_from_chi(chi: float, d: int, D: float) -> float:
    return (d + 2) * (D / 2) ** (2 / (d + 2)) * (chi / d) ** (d / (d + 2))


def chi_from_K(K: float, d: int, D: float) -> float:
    return d * (K / (d + 2)) ** ((d + 2) / d) * (D / 2) ** (-2 / d)


def solve_chi(prob: RateProblem, psi0=None) -> ChiResult:
    """chi by two routes: (a) direct scale-free minimization, (b) inverting the
    closed-form relation from K_{D,q} (computed with the problem's D)."""
    pa = replace(prob, mode="chi", delta=0.0)
    obj = ChiObjective(pa)
    ra = _run(pa, obj, psi0)
    rb = solve_K_Dq(replace(prob, mode="K_Dq", delta=0.0))
    chi_b = chi_from_K(rb.value, prob.d, prob.D)
    chi_a = obj.scale_free(ra.psi.values.ravel())
    return ChiResult(
        value=chi_a,
        route_a=chi_a,
        route_b=chi_b,
        route_gap=abs(chi_a - chi_b) / abs(chi_a),
        kappa=chi_a ** (-prob.d / (4 * prob.q)),
        psi=ra.psi,
        converged=ra.converged and rb.converged,
        K_Dq=rb.value,
        grid=pa.grid_info(),
        restarts=[obj.scale_free(x) for x in ra.restart_minimizers],
    )


def solve_K_H(prob: RateProblem, psi0=None) -> SolveResult:
    """K_H(u) on the grid; the gradient of Phi uses the envelope theorem."""
    prob = replace(prob, mode="K_H")
    obj = KHObjective(prob)
    res = _run(prob, obj, psi0)
    if res.finite:
        obj.last = None
        res.gamma = obj.phi(res.psi.values.ravel())[0].gamma
    return res


def solve(prob: RateProblem):
    return {"K_Dq": solve_K_Dq, "chi": solve_chi, "K_H": solve_K_H}[prob.mode](prob)


# ---------------------------------------------------------------------------
# finite-box study


def box_convergence_study(base: RateProblem, R_list, delta_list, keep_h: bool = True) -> list[dict]:
    """Dirichlet and periodic values over a grid of (R, delta).

    With ``keep_h`` the mesh width of ``base`` is kept, so m grows with R.
    Rows carry R, delta, bc, value and converged, in a stable order.
    """
    R_list = list(R_list)
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise ValueError("R_list must be strictly ascending")
    if base.mode == "chi":
        raise ValueError("box study applies to K_Dq and K_H")
    fn = solve_K_Dq if base.mode == "K_Dq" else solve_K_H
    rows = []
    for R in R_list:
        m = int(round(2 * R / base.h)) if keep_h else base.m
        for delta in delta_list:
            for bc in ("dirichlet", "periodic"):
                r = fn(replace(base, R=float(R), m=m, delta=float(delta), bc=bc))
                rows.append({"R": float(R), "delta": float(delta), "bc": bc,
                             "value": r.value if r.finite else math.inf, "converged": r.converged})
    return rows


def sandwich_violations(rows: list[dict], rtol: float = 0.02) -> list[str]:
    """Check the box-study contract; returns human-readable violations."""
    out = []
    by = {(r["R"], r["delta"], r["bc"]): r["value"] for r in rows}
    Rs = sorted({r["R"] for r in rows})
    ds = sorted({r["delta"] for r in rows})
    for d in ds:
        for R in Rs:
            dv, pv = by[(R, d, "dirichlet")], by[(R, d, "periodic")]
            if pv < dv * (1 - rtol):
                out.append(f"periodic {pv:.6g} below dirichlet {dv:.6g} at R={R}, delta={d}")
        for R0, R1 in zip(Rs, Rs[1:]):
            a, b = by[(R0, d, "dirichlet")], by[(R1, d, "dirichlet")]
            if b > a * (1 + rtol):
                out.append(f"dirichlet value grew from {a:.6g} (R={R0}) to {b:.6g} (R={R1}), delta={d}")
    return out
