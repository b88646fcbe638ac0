"""Random walk in random scenery: Z_n, deviation scales and tail estimators."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from ._rng import BLOCK, block_rng
from .kernels import StepKernel
from .localtimes import LocalTimeField, lambda_samples, pack
from .scenery import BoundedUniformScenery, GaussianScenery, SceneryModel, field_values

_SCENERY_SALT = 0x5CE7E11


# ---------------------------------------------------------------------------
# scales


def reference_scale(n, d: int):
    """a_n^{(0)}, the order of typical fluctuations of Z_n / n."""
    n = np.asarray(n, dtype=float)
    if d == 1:
        return n ** -0.25
    if d == 2:
        return (n / np.log(n)) ** -0.5
    return n ** -0.5


@dataclass(frozen=True)
class ScaleRegime:
    """Deviation regime: ``case`` is ``"V"``, ``"L"`` or ``"small-dev"``.

    ``b`` maps n to the threshold b_n.  Case V needs the tail exponent ``q``.
    """

    case: str
    d: int
    b: Callable[[float], float] = field(compare=False)
    q: float | None = None
    label: str = ""

    def __post_init__(self):
        if self.case not in ("V", "L", "small-dev"):
            raise ValueError(f"unknown regime {self.case!r}")
        if self.case == "V" and (self.q is None or self.q <= 1):
            raise ValueError("case V needs q > 1")
        if self.case == "small-dev" and self.d != 2:
            raise ValueError("the small-deviation regime is for d = 2")

    @classmethod
    def very_large(cls, d: int, q: float, b: Callable[[float], float], label: str = "") -> "ScaleRegime":
        return cls("V", d, b, q, label)

    @classmethod
    def large(cls, d: int, u: float = 1.0) -> "ScaleRegime":
        return cls("L", d, lambda n: u, None, f"u={u}")

    @classmethod
    def small_dev(cls, theta: float) -> "ScaleRegime":
        """b_n = n^{-1/2} (log n)^theta with theta in (1/2, 1)."""
        if not 0.5 < theta < 1:
            raise ValueError("theta must lie in (1/2, 1)")
        return cls("small-dev", 2, lambda n: n ** -0.5 * math.log(n) ** theta, None, f"theta={theta}")

    def alpha(self, n: float) -> float:
        if self.case == "V":
            return n ** (1 / (self.d + 2)) * self.b(n) ** (-self.q / (self.d + 2))
        if self.case == "L":
            return n ** (1 / (self.d + 2))
        raise ValueError("no spatial scale in the small-deviation regime")

    def speed(self, n: float) -> float:
        """Normalizing factor s_n with log P ~ -s_n * rate."""
        if self.case == "V":
            return n ** (self.d / (self.d + 2)) * self.b(n) ** (2 * self.q / (self.d + 2))
        if self.case == "L":
            return n ** (self.d / (self.d + 2))
        return self.b(n) ** 2 * n / math.log(n)

    def check(self, n: float) -> None:
        b = self.b(n)
        if self.case == "V":
            if not (b >= 1 and b**self.q <= n):
                raise ValueError(f"b_n = {b} outside 1 <= b_n <= n^(1/q)")
            a = self.alpha(n)
            if abs(a ** (self.d + 2) * b**self.q / n - 1) > 1e-12:
                raise AssertionError("alpha^(d+2) b^q != n")
        elif self.case == "small-dev":
            a0 = reference_scale(n, 2)
            a1 = n ** -0.5 * math.log(n)
            if not a0 <= b <= a1:
                raise ValueError(f"b_n = {b} outside [a_n^(0), a_n^(1)]")


# ---------------------------------------------------------------------------
# estimates


@dataclass
class TailEstimate:
    method: str
    n: int
    b: float
    estimate: float
    stderr: float
    replicates: int
    log_estimate: float = float("nan")
    rate_normalized: float | None = None
    prediction: float | None = None

    def __post_init__(self):
        if math.isnan(self.log_estimate):
            self.log_estimate = math.log(self.estimate) if self.estimate > 0 else -math.inf

    def normalize(self, regime: ScaleRegime, prediction: float | None = None) -> "TailEstimate":
        self.rate_normalized = self.log_estimate / regime.speed(self.n)
        if prediction is not None:
            self.prediction = prediction
        return self

    def to_json(self) -> dict:
        return asdict(self)


def rwrs_value(f: LocalTimeField, field: dict, path: np.ndarray | None = None) -> float:
    """Z_n = sum_z Y(z) l_n(z).  With ``path`` given, the time sum is checked too."""
    total = 0.0
    for site, c in f.as_dict().items():
        if site not in field:
            raise KeyError(f"scenery missing at visited site {site}")
        total += field[site] * c
    if path is not None:
        tsum = float(sum(field[tuple(int(c) for c in s)] for s in np.asarray(path)))
        if abs(tsum - total) > 1e-9 * max(1.0, abs(total)):
            raise AssertionError(f"site sum {total} != time sum {tsum}")
    return total


def _blocks(replicates: int, fn, workers: int):
    nb = math.ceil(replicates / BLOCK)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, range(nb)))
    return [fn(b) for b in range(nb)]


def rwrs_samples(k: StepKernel, m: SceneryModel, n: int, replicates: int, seed: int, workers: int = 1) -> np.ndarray:
    """Z_n for independent (walk, scenery) replicates.

    Scenery values are only generated on visited sites, keyed by replicate
    index and site, on a stream separate from the walk.
    """

    def run(b):
        rng = block_rng(seed, b, stream=2)
        size = min(BLOCK, replicates - b * BLOCK)
        steps = k.sample_steps(rng, (size, n - 1))
        pos = np.zeros((size, n, k.d), dtype=np.int64)
        np.cumsum(steps, axis=1, out=pos[:, 1:])
        rep = (b * BLOCK + np.arange(size, dtype=np.uint64))[:, None]
        y = field_values(m, pos.reshape(-1, k.d), seed ^ _SCENERY_SALT,
                         np.broadcast_to(rep, (size, n)).ravel()).reshape(size, n)
        return y.sum(axis=1)

    return np.concatenate(_blocks(replicates, run, workers))


def tail_naive(k: StepKernel, m: SceneryModel, n: int, b: float, replicates: int, seed: int,
               workers: int = 1) -> TailEstimate:
    """Fraction of replicates with Z_n / n > b."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    z = rwrs_samples(k, m, n, replicates, seed, workers)
    return _naive_from_samples(z, n, b)


def _naive_from_samples(z: np.ndarray, n: int, b: float) -> TailEstimate:
    p = float(np.mean(z / n > b))
    N = len(z)
    return TailEstimate("naive", n, float(b), p, math.sqrt(p * (1 - p) / N), N)


def tail_naive_curve(k, m, n, b_values: Sequence[float], replicates, seed, workers=1) -> list[TailEstimate]:
    """Naive estimates on one set of replicates for several thresholds."""
    z = rwrs_samples(k, m, n, replicates, seed, workers)
    return [_naive_from_samples(z, n, b) for b in b_values]


def _gaussian_sigma(scenery) -> float:
    if isinstance(scenery, GaussianScenery):
        return scenery.sigma
    if isinstance(scenery, SceneryModel):
        raise TypeError("the conditional-Gaussian estimator needs a centered Gaussian scenery")
    return float(scenery)


def _cond_gaussian_from_lambda(lam: np.ndarray, sigma: float, n: int, b: float) -> TailEstimate:
    x = n * b / (sigma * np.sqrt(lam.astype(float)))
    lp = special.log_ndtr(-x)
    top = lp.max()
    w = np.exp(lp - top)
    mean_w = w.mean()
    log_est = top + math.log(mean_w)
    N = len(lam)
    # standard error of the mean, carried on the log scale to survive underflow
    rel = (w.std(ddof=1) / math.sqrt(N) / mean_w) if N > 1 else 0.0
    est = math.exp(log_est)
    return TailEstimate("cond-gaussian", n, float(b), est, est * rel, N, log_estimate=log_est)


def tail_cond_gaussian(k: StepKernel, scenery, n: int, b: float, replicates: int, seed: int,
                       workers: int = 1) -> TailEstimate:
    """Average over walks of P(Z_n > n b | walk) = Phi-bar(n b / (sigma sqrt(Lambda_n)))."""
    sigma = _gaussian_sigma(scenery)
    lam = lambda_samples(k, [n], replicates, seed, workers)[:, 0]
    return _cond_gaussian_from_lambda(lam, sigma, n, b)


def cond_gaussian_series(k: StepKernel, scenery, n_list: Sequence[int], b: Callable[[float], float],
                         replicates: int, seed: int, workers: int = 1) -> list[TailEstimate]:
    """Conditional-Gaussian estimates at several n, each walk observed at every n."""
    sigma = _gaussian_sigma(scenery)
    n_list = sorted(int(n) for n in n_list)
    lam = lambda_samples(k, n_list, replicates, seed, workers)
    return [_cond_gaussian_from_lambda(lam[:, j], sigma, n, b(n)) for j, n in enumerate(n_list)]


# ---------------------------------------------------------------------------
# brute force


def _uniform_sum_sf(c: Sequence[int], x: float) -> float:
    """P(sum_i c_i U_i > x) for i.i.d. U_i ~ U[0,1] and positive integer weights."""
    c = list(c)
    k = len(c)
    total = 0.0
    for r in range(k + 1):
        for S in itertools.combinations(c, r):
            v = x - sum(S)
            if v > 0:
                total += (-1) ** r * v**k
    cdf = total / (math.factorial(k) * math.prod(c))
    return min(max(1.0 - cdf, 0.0), 1.0)


def exact_enum(k: StepKernel, m: SceneryModel, n: int, b: float) -> float:
    """P(Z_n / n > b) by summing over every walk path of n positions."""
    K = len(k.probs)
    if K ** (n - 1) > 2**24:
        raise ValueError("instance too large for enumeration")
    if not isinstance(m, (GaussianScenery, BoundedUniformScenery)):
        raise TypeError("exact enumeration supports gaussian and bounded_uniform sceneries")
    if n == 1:
        choices = np.zeros((1, 0), dtype=np.int64)
    else:
        choices = np.array(list(itertools.product(range(K), repeat=n - 1)), dtype=np.int64)
    P = choices.shape[0]
    logw = np.log(k.probs)[choices].sum(axis=1) if n > 1 else np.zeros(1)
    pos = np.zeros((P, n, k.d), dtype=np.int64)
    if n > 1:
        np.cumsum(k.offsets[choices], axis=1, out=pos[:, 1:])
    keys = np.sort(pack(pos), axis=1)
    total = 0.0
    cache: dict = {}
    for i in range(P):
        _, cnt = np.unique(keys[i], return_counts=True)
        sig = tuple(sorted(cnt.tolist()))
        if sig not in cache:
            if isinstance(m, GaussianScenery):
                lam = sum(c * c for c in sig)
                cache[sig] = float(special.ndtr(-n * b / (m.sigma * math.sqrt(lam))))
            else:
                if len(sig) > 5:
                    raise ValueError("bounded scenery enumeration supports at most 5 distinct sites")
                x = (n * b - n * m.a) / (m.b - m.a)
                cache[sig] = _uniform_sum_sf(sig, x)
        total += math.exp(logw[i]) * cache[sig]
    return total


# ---------------------------------------------------------------------------
# rate tables


def regime_prediction(regime: ScaleRegime, *, K: float | None = None) -> float | None:
    """Predicted limit of the rate-normalized log-probability.

    Small deviations: -pi/4.  Cases V and L: ``-K`` with K computed by the
    variational solvers and passed in.
    """
    if regime.case == "small-dev":
        return -math.pi / 4
    return None if K is None else -K


def rate_table(regime: ScaleRegime, estimator: Callable[[int, float], TailEstimate],
               n_list: Sequence[int], prediction: float | None = None) -> list[dict]:
    """Rate-normalized log-probabilities along ``n_list``.

    ``estimator(n, b)`` returns a :class:`TailEstimate`.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3:
        raise ValueError("rate tables need at least three values of n")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly ascending")
    if prediction is None:
        prediction = regime_prediction(regime)
    rows = []
    for n in n_list:
        est = estimator(n, regime.b(n)).normalize(regime, prediction)
        se = est.stderr / est.estimate / regime.speed(n) if est.estimate > 0 else float("nan")
        rows.append({"n": n, "b": est.b, "rate_normalized": est.rate_normalized,
                     "prediction": prediction, "stderr": se, "estimate": est.estimate,
                     "log_estimate": est.log_estimate})
    return rows
