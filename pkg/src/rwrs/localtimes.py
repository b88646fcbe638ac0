"""Walk simulation and local-time bookkeeping.

Lattice sites are packed into single int64 keys, 16 signed bits per axis, so a
local-time field is a small sorted array of (key, count) pairs.  Walks must stay
within |coordinate| < 32768; that is checked, not assumed.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ._rng import BLOCK, block_rng
from .kernels import StepKernel, wrap

COORD_LIMIT = 1 << 15
_SHIFT = 16
_MASK = (1 << _SHIFT) - 1


def pack(points) -> np.ndarray:
    """Pack an ``(..., d)`` integer array of lattice points into int64 keys."""
    z = np.asarray(points, dtype=np.int64)
    d = z.shape[-1]
    if d > 4:
        raise ValueError("packed keys support d <= 4")
    if z.size and np.abs(z).max() >= COORD_LIMIT:
        raise OverflowError("lattice coordinate outside the 16-bit packing range")
    key = np.zeros(z.shape[:-1], dtype=np.int64)
    for k in range(d):
        key = (key << _SHIFT) | (z[..., k] + COORD_LIMIT)
    return key


def unpack(keys, d: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty(keys.shape + (d,), dtype=np.int64)
    for k in range(d - 1, -1, -1):
        out[..., k] = (keys & _MASK) - COORD_LIMIT
        keys = keys >> _SHIFT
    return out


@dataclass
class LocalTimeField:
    """Occupation counts of a path: ``n`` positions, sparse counts per site.

    ``lam`` (the self-intersection local time) is kept up to date by
    :meth:`visit`, which adds ``2*count + 1`` per visit.
    """

    d: int
    n: int = 0
    counts: dict = field(default_factory=dict)
    lam: int = 0

    def visit(self, site) -> None:
        key = int(pack(np.asarray(site, dtype=np.int64).reshape(self.d)))
        c = self.counts.get(key, 0)
        self.counts[key] = c + 1
        self.lam += 2 * c + 1
        self.n += 1

    @classmethod
    def from_path(cls, path: np.ndarray) -> "LocalTimeField":
        """Bulk construction from positions S_0..S_{n-1} (shape ``(n, d)``)."""
        path = np.asarray(path, dtype=np.int64)
        keys, cnt = np.unique(pack(path), return_counts=True)
        f = cls(d=path.shape[1], n=int(path.shape[0]))
        f.counts = dict(zip(keys.tolist(), cnt.tolist()))
        f.lam = int(np.sum(cnt.astype(np.int64) ** 2))
        return f

    @property
    def range(self) -> int:
        return len(self.counts)

    def sites(self) -> np.ndarray:
        return unpack(np.fromiter(self.counts.keys(), dtype=np.int64, count=len(self.counts)), self.d)

    def values(self) -> np.ndarray:
        return np.fromiter(self.counts.values(), dtype=np.int64, count=len(self.counts))

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {tuple(z): c for z, c in zip(self.sites().tolist(), self.values().tolist())}

    def check(self) -> None:
        v = self.values()
        assert int(v.sum()) == self.n
        assert int(np.sum(v * v)) == self.lam
        assert self.n <= self.lam <= self.n * self.n
        assert self.range * self.lam >= self.n * self.n


@dataclass(frozen=True)
class ScaledLocalTimes:
    """The density L(x) = (alpha^d / n) * l(floor(x alpha))."""

    base: LocalTimeField
    alpha: float

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.floor(x * self.alpha).astype(np.int64)
        keys = pack(z)
        c = np.array([self.base.counts.get(int(k), 0) for k in keys], dtype=float)
        return self.alpha ** self.base.d / self.base.n * c

    def total_mass(self) -> float:
        # each site carries l(z) * alpha^{-d} of Lebesgue mass times alpha^d/n
        return float(self.base.values().sum()) / self.base.n


def simulate_path(k: StepKernel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Positions S_0 = 0, S_1, ..., S_{n-1} as an ``(n, d)`` array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    steps = k.sample_steps(rng, n - 1)
    path = np.zeros((n, k.d), dtype=np.int64)
    np.cumsum(steps, axis=0, out=path[1:])
    return path


def simulate_walk(k: StepKernel, n: int, seed: int) -> tuple[np.ndarray, LocalTimeField]:
    """One walk of ``n`` positions and its local times, reproducible from ``seed``."""
    path = simulate_path(k, n, block_rng(seed, 0))
    return path, LocalTimeField.from_path(path)


def self_intersection(f: LocalTimeField) -> int:
    return f.lam


def self_intersection_from_path(path: np.ndarray) -> int:
    """Number of ordered time pairs (j, k) with S_j == S_k, by direct comparison."""
    path = np.asarray(path)
    eq = np.all(path[:, None, :] == path[None, :, :], axis=-1)
    return int(eq.sum())


def periodized_local_times(f: LocalTimeField, R: int) -> LocalTimeField:
    """Fold local times onto the torus {-R..R-1}^d (side 2R)."""
    if R < 1:
        raise ValueError("R must be >= 1")
    sites = wrap(f.sites(), R)
    keys = pack(sites)
    vals = f.values()
    uk, inv = np.unique(keys, return_inverse=True)
    tot = np.zeros(len(uk), dtype=np.int64)
    np.add.at(tot, inv.ravel(), vals)
    out = LocalTimeField(d=f.d, n=f.n)
    out.counts = dict(zip(uk.tolist(), tot.tolist()))
    out.lam = int(np.sum(tot * tot))
    return out


def scaled_density_pairing(s: ScaledLocalTimes, g: Callable[[np.ndarray], np.ndarray]) -> float:
    """<L_n, g> with g sampled once per lattice cell at the cell midpoint.

    ``g`` takes an ``(m, d)`` array of points and returns ``m`` values.
    """
    sites = s.base.sites().astype(float)
    mid = (sites + 0.5) / s.alpha
    gv = np.asarray(g(mid), dtype=float)
    return float(np.dot(s.base.values() / s.base.n, gv))


# ---------------------------------------------------------------------------
# batched Monte Carlo of self-intersection local times


def _batch_lambda(k: StepKernel, checkpoints: Sequence[int], size: int, rng) -> np.ndarray:
    nmax = max(checkpoints)
    steps = k.sample_steps(rng, (size, nmax - 1))
    pos = np.zeros((size, nmax, k.d), dtype=np.int64)
    np.cumsum(steps, axis=1, out=pos[:, 1:])
    keys = pack(pos)
    out = np.empty((size, len(checkpoints)), dtype=np.int64)
    for j, n in enumerate(checkpoints):
        kk = np.sort(keys[:, :n], axis=1)
        # runs of equal keys in each sorted row; every row opens a new run
        starts = np.ones((size, n), dtype=bool)
        starts[:, 1:] = kk[:, 1:] != kk[:, :-1]
        idx = np.flatnonzero(starts.ravel())
        runs = np.diff(np.append(idx, size * n))
        out[:, j] = np.bincount(idx // n, weights=runs.astype(np.float64) ** 2, minlength=size).astype(np.int64)
    return out


def lambda_samples(
    k: StepKernel,
    checkpoints: Sequence[int],
    replicates: int,
    seed: int,
    workers: int = 1,
) -> np.ndarray:
    """Self-intersection local times at several times along the same walks.

    Returns an int64 array ``(replicates, len(checkpoints))``; row ``i`` comes
    from one walk observed at each checkpoint.  Output does not depend on
    ``workers``.
    """
    checkpoints = sorted(int(c) for c in checkpoints)
    nmax = checkpoints[-1]
    # keep each batch around 2^22 positions
    sub = max(1, min(BLOCK, (1 << 22) // nmax))
    nblocks = math.ceil(replicates / BLOCK)

    def run_block(b):
        rng = block_rng(seed, b, stream=1)
        m = min(BLOCK, replicates - b * BLOCK)
        parts = []
        done = 0
        while done < m:
            s = min(sub, m - done)
            parts.append(_batch_lambda(k, checkpoints, s, rng))
            done += s
        return np.vstack(parts)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            blocks = list(ex.map(run_block, range(nblocks)))
    else:
        blocks = [run_block(b) for b in range(nblocks)]
    return np.vstack(blocks)


class Welford:
    """Mergeable running mean / variance."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x) -> "Welford":
        for v in np.atleast_1d(np.asarray(x, dtype=float)):
            self.count += 1
            delta = v - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (v - self.mean)
        return self

    def merge(self, other: "Welford") -> "Welford":
        out = Welford()
        out.count = self.count + other.count
        if out.count == 0:
            return out
        delta = other.mean - self.mean
        out.mean = self.mean + delta * other.count / out.count
        out.m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / out.count
        return out

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else float("nan")


def replicate_rows(
    k: StepKernel,
    n: int,
    seeds: Iterable[int],
    functionals: dict[str, Callable[[LocalTimeField], float]] | None = None,
) -> str:
    """CSV text with one row per replicate: seed, n, lambda, range, functionals."""
    functionals = functionals or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "n", "lambda", "range", *functionals])
    for s in seeds:
        _, f = simulate_walk(k, n, s)
        w.writerow([s, n, f.lam, f.range, *(repr(float(fn(f))) for fn in functionals.values())])
    return buf.getvalue()
