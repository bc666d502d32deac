"""Orbit simulation of Birkhoff sums, tail frequencies and the empirical CLT.

Orbits of expanding maps lose one mantissa bit per doubling of length, so
after ~50 steps a naive float orbit of ``2x mod 1`` is identically 0. Each
step therefore keeps the state only to a resolution ``2^-40`` of the box
side and redraws the bits below it uniformly: for a uniform (or
cell-constant) initial law this is a lazy sample of the exact orbit law.

Random numbers come from Philox streams keyed by ``(seed, chunk index)``
with a fixed chunk size, so results do not depend on how chunks are
distributed over worker threads.
"""
from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .errors import GridMismatch, ZeroVariance
from .maps import Observable, PiecewiseAffineMap
from .partition import UlamPartition

CHUNK = 1 << 16
REFRESH_BITS = 40
Z95 = 1.959963984540054


def worker_count() -> int:
    try:
        cap = int(os.environ.get("TWISTOP_THREADS", "0"))
    except ValueError:
        cap = 0
    n = os.cpu_count() or 1
    return max(1, min(n, cap) if cap > 0 else n)


@dataclass(frozen=True)
class InitialLaw:
    """Uniform law on the phase space, or a cell-constant density against it."""

    kind: str = "uniform"
    partition: UlamPartition | None = None
    density: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "density"):
            raise ValueError(f"unknown law kind {self.kind!r}")
        if self.kind == "density":
            if self.partition is None or self.density is None:
                raise ValueError("a density law needs a partition and cell values")
            d = np.asarray(self.density, dtype=float).reshape(-1)
            if d.size != self.partition.n_cells:
                raise GridMismatch("density does not match the partition")
            if d.min() < 0:
                raise ValueError("density must be nonnegative")
            mass = d.sum() * self.partition.cell_measure
            if abs(mass - 1.0) > 1e-9:
                raise ValueError(f"density integrates to {mass}, not 1")
            object.__setattr__(self, "density", d)

    @classmethod
    def from_function(cls, partition: UlamPartition, func) -> "InitialLaw":
        d = partition.project(func)
        return cls("density", partition, d / (d.sum() * partition.cell_measure))

    def cell_masses(self, partition: UlamPartition) -> np.ndarray:
        if self.kind == "uniform":
            return partition.measures.copy()
        if self.partition.shape != partition.shape:
            raise GridMismatch("law and partition differ")
        return self.density * partition.cell_measure

    def sample(self, box, rng, size) -> np.ndarray:
        lo = np.asarray(box.lower)
        sides = box.sides
        if self.kind == "uniform":
            return lo + rng.random((size, len(lo))) * sides
        p = self.density * self.partition.cell_measure
        cdf = np.cumsum(p)
        cdf /= cdf[-1]
        cells = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(cdf) - 1)
        widths = self.partition.widths
        lows = np.stack(np.unravel_index(cells, self.partition.shape), -1) * widths + lo
        return lows + rng.random((size, len(lo))) * widths


def _refresh(x, lo, w, rng):
    """Keep ``x`` to resolution ``w`` and redraw the finer bits."""
    return lo + (np.floor((x - lo) / w) + rng.random(x.shape)) * w


def _step_indices(T, x):
    idx = T.branch_index(x)
    bad = idx < 0
    if bad.any():
        # measure-zero boundary hits: nudge by one ulp, then the other way
        x[bad] = np.nextafter(x[bad], np.inf)
        idx[bad] = T.branch_index(x[bad])
        bad = idx < 0
        if bad.any():
            x[bad] = np.nextafter(np.nextafter(x[bad], -np.inf), -np.inf)
            idx[bad] = T.branch_index(x[bad])
    return idx


def _simulate_chunk(T, phi, law, checkpoints, size, seed, chunk):
    rng = np.random.Generator(np.random.Philox(key=[seed, chunk]))
    box = T.phase_space
    lo = np.asarray(box.lower)
    w = box.sides * 2.0 ** -REFRESH_BITS
    x = law.sample(box, rng, size)
    out = np.empty((len(checkpoints), size))
    S = np.zeros(size)
    n_max = checkpoints[-1]
    c = 0
    for k in range(n_max):
        idx = _step_indices(T, x)
        S += phi(x)
        while c < len(checkpoints) and checkpoints[c] == k + 1:
            out[c] = S
            c += 1
        if k + 1 == n_max:
            break
        x, _ = T.apply(x, idx)
        x = _refresh(x, lo, w, rng)
    return out


def simulate_birkhoff(T: PiecewiseAffineMap, phi: Observable, law: InitialLaw, n,
                      samples: int, seed: int = 0, threads: int | None = None) -> np.ndarray:
    """Birkhoff sums ``S_n = sum_{k<n} phi(T^k x_0)`` for ``samples`` initial points.

    ``n`` may be an increasing sequence; the result then has one row per
    entry, all taken along the same orbits.
    """
    scalar = np.isscalar(n)
    checkpoints = [int(n)] if scalar else [int(k) for k in n]
    if min(checkpoints) < 1 or samples < 1 or checkpoints != sorted(checkpoints):
        raise ValueError("need n >= 1 (increasing) and samples >= 1")
    chunks = [(c, min(CHUNK, samples - c * CHUNK)) for c in range((samples + CHUNK - 1) // CHUNK)]
    threads = threads or worker_count()

    def run(args):
        c, size = args
        return _simulate_chunk(T, phi, law, checkpoints, size, seed, c)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(a) for a in chunks]
    sums = np.concatenate(parts, axis=1)
    return sums[0] if scalar else sums


def wilson_interval(hits: int, samples: int, z=Z95) -> tuple[float, float]:
    if samples <= 0:
        return (0.0, 1.0)
    p = hits / samples
    denom = 1.0 + z * z / samples
    centre = (p + z * z / (2 * samples)) / denom
    half = z / denom * np.sqrt(p * (1 - p) / samples + z * z / (4 * samples * samples))
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == samples else min(1.0, centre + half)
    return (lo, hi)


@dataclass
class TailEstimate:
    n: int
    eps: float
    samples: int
    hits: int
    p_hat: float
    ci95: tuple[float, float]
    empirical_rate: float | None
    seed: int

    def to_dict(self):
        return {"n": self.n, "eps": self.eps, "samples": self.samples, "hits": self.hits,
                "p_hat": self.p_hat, "ci95": list(self.ci95),
                "empirical_rate": self.empirical_rate, "seed": self.seed}


def _tail_from_sums(S, n, eps, seed) -> TailEstimate:
    hits = int(np.count_nonzero(S > n * eps))
    samples = S.size
    p = hits / samples
    rate = None if hits == 0 else float(-np.log(p) / n)
    return TailEstimate(int(n), float(eps), int(samples), hits, p, wilson_interval(hits, samples), rate, seed)


def tail_estimate(T, phi, law, n, eps, samples, seed=0) -> TailEstimate:
    """Frequency of the strict exceedance ``S_n > n*eps``."""
    S = simulate_birkhoff(T, phi, law, n, samples, seed)
    return _tail_from_sums(S, n, eps, seed)


def empirical_rate_sweep(T, phi, law, n_schedule: Sequence[int], eps, samples, seed=0) -> list[TailEstimate]:
    sched = [int(k) for k in n_schedule]
    sums = simulate_birkhoff(T, phi, law, sched, samples, seed)
    return [_tail_from_sums(S, n, eps, seed) for n, S in zip(sched, sums)]


@dataclass
class CltEmpirical:
    n: int
    samples: int
    seed: int
    ks_distance: float
    sample_variance: float
    sigma2: float

    def to_dict(self):
        return {"n": self.n, "samples": self.samples, "seed": self.seed,
                "ks_distance": self.ks_distance, "sample_variance": self.sample_variance,
                "sigma2": self.sigma2}


def ks_against_normal(x, sigma2) -> float:
    """Sup distance between the empirical CDF of ``x`` and N(0, sigma2)."""
    return float(stats.kstest(np.asarray(x, dtype=float),
                              lambda u: ndtr(u / np.sqrt(sigma2))).statistic)


def empirical_clt(T, phi, law, n, samples, seed, sigma2) -> CltEmpirical:
    if sigma2 <= 1e-12:
        raise ZeroVariance("the limiting normal law is degenerate")
    S = simulate_birkhoff(T, phi, law, n, samples, seed) / np.sqrt(n)
    var = float(S.var(ddof=1)) if S.size > 1 else 0.0
    return CltEmpirical(int(n), int(samples), int(seed), ks_against_normal(S, sigma2), var, float(sigma2))


# ---------------------------------------------------------------- exact oracle

def exact_markov_tail(K, phi_values, cell_masses, n: int, eps: float, step=None) -> float:
    """``P(S_n > n*eps)`` for the cell chain of a Markov partition.

    Valid when the partition is Markov for the map, the observable is
    constant on cells and the initial law is cell-constant: then the cell
    itinerary is a Markov chain with ``P(i -> j) = K[j, i] m_j / m_i``.
    Observable values must lie on a lattice ``min(phi) + step * Z``.
    """
    matrix = K.matrix if hasattr(K, "matrix") else K
    m = K.measures if hasattr(K, "measures") else None
    phi = np.asarray(phi_values, dtype=float)
    N = phi.size
    if step is None:
        u = np.unique(phi)
        diffs = np.diff(u)
        step = float(diffs.min()) if diffs.size else 1.0
    base = float(np.min(phi))
    offs = np.rint((phi - base) / step).astype(np.int64)
    if np.abs(base + offs * step - phi).max() > 1e-12 * max(1.0, np.abs(phi).max()):
        raise ValueError("observable values are not on a lattice base + step * Z")
    span = int(offs.max())
    L = n * span + 1
    if m is None:
        m = np.full(N, 1.0 / N)
    trans = matrix.multiply(m[:, None]).multiply(1.0 / m[None, :]).tocsr()
    D = np.zeros((N, L))
    D[:, 0] = np.asarray(cell_masses, dtype=float)
    for k in range(n):
        shifted = np.zeros_like(D)
        for o in np.unique(offs):
            rows = offs == o
            shifted[rows, o:] = D[rows, :L - o]
        D = shifted
        if k + 1 < n:
            D = trans @ D
    dist = D.sum(axis=0)
    sums = base * n + step * np.arange(L)
    return float(dist[sums > n * eps].sum())


# ---------------------------------------------------------------- binary stream

def write_bsum(path, sums, n, seed) -> None:
    """Raw sums as ``BSUM`` + (n, samples, seed) as uint64 + float64 data, little endian."""
    data = np.asarray(sums, dtype="<f8").ravel()
    with open(path, "wb") as fh:
        fh.write(b"BSUM")
        fh.write(struct.pack("<QQQ", int(n), data.size, int(seed)))
        fh.write(data.tobytes())


def read_bsum(path):
    with open(path, "rb") as fh:
        if fh.read(4) != b"BSUM":
            raise ValueError("not a BSUM file")
        n, samples, seed = struct.unpack("<QQQ", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != samples:
        raise ValueError("truncated BSUM file")
    return data, n, seed
