"""Oscillation seminorm ``|f|_alpha`` of grid functions and a Lasota-Yorke probe.

Grid functions are piecewise constant on an :class:`UlamPartition` and
extended by zero outside the phase space, so the essential oscillation over
a ball is the max minus min of the cell values the ball meets in a set of
positive measure (including the zero exterior when the ball leaves M).

In one dimension the integral of ``x -> osc(f, B_eps(x))`` is computed
exactly: it is constant between the points ``edge ± eps``. In higher
dimension it uses midpoint quadrature on a sub-grid of every (zero-padded)
cell, and the eps scan starts no lower than one cell width.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import nnls

from .errors import GridMismatch
from .partition import UlamPartition

SUBGRID_BUDGET = 256  # quadrature points per cell in d >= 2


@dataclass(frozen=True)
class GridFunction:
    partition: UlamPartition
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values).reshape(-1)
        if v.size != self.partition.n_cells:
            raise GridMismatch(f"{v.size} values for {self.partition.n_cells} cells")
        object.__setattr__(self, "values", v)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.partition, self.values + other.values)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.partition, self.values * other.values)
        return GridFunction(self.partition, self.values * other)

    __rmul__ = __mul__

    def l1(self) -> float:
        return float(np.abs(self.values).sum() * self.partition.cell_measure)


@dataclass
class NormReport:
    l1: float
    seminorm_alpha: float
    norm_alpha: float
    epsilon0: float
    epsilon_grid: list[float]
    per_epsilon: list[float] = field(default_factory=list)
    alpha: float = 1.0

    def to_dict(self) -> dict:
        return {"l1": self.l1, "seminorm_alpha": self.seminorm_alpha,
                "norm_alpha": self.norm_alpha, "epsilon0": self.epsilon0, "alpha": self.alpha,
                "epsilon_grid": list(self.epsilon_grid), "per_epsilon": list(self.per_epsilon)}


def _spread(vals):
    if np.iscomplexobj(vals):
        # bounding-box diameter: an upper bound for the complex oscillation
        return np.hypot(np.ptp(vals.real), np.ptp(vals.imag))
    return np.ptp(vals)


def oscillation(f: GridFunction, eps: float, x) -> float:
    """``ess sup - ess inf`` of ``f`` (zero outside M) over the closed ball ``B_eps(x)``."""
    part = f.partition
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = np.asarray(part.box.lower), np.asarray(part.box.upper)
    # a cell counts when its distance to x is below eps (positive-measure overlap)
    picks = []
    for k in range(part.dim):
        e = part.edges[k]
        gap = np.maximum(0.0, np.maximum(e[:-1] - x[k], x[k] - e[1:]))
        picks.append(gap)
    grids = np.meshgrid(*picks, indexing="ij")
    dist2 = sum(g ** 2 for g in grids).ravel()
    vals = f.values[dist2 < eps * eps]
    exterior = np.any(x - eps < lo) or np.any(x + eps > hi)
    if exterior:
        vals = np.append(vals, 0.0)
    return float(_spread(vals)) if vals.size else 0.0


class _RangeTable:
    """Sparse table for O(1) range max/min queries over a 1D array."""

    def __init__(self, a):
        self.mx = [a]
        self.mn = [a]
        j = 1
        while (1 << j) <= len(a):
            prev_mx, prev_mn = self.mx[-1], self.mn[-1]
            half = 1 << (j - 1)
            self.mx.append(np.maximum(prev_mx[:-half], prev_mx[half:]))
            self.mn.append(np.minimum(prev_mn[:-half], prev_mn[half:]))
            j += 1

    def query(self, left, right):
        length = right - left + 1
        j = np.floor(np.log2(length)).astype(int)
        mx = np.empty(left.shape, dtype=self.mx[0].dtype)
        mn = np.empty(left.shape, dtype=self.mn[0].dtype)
        for level in np.unique(j):
            sel = j == level
            a = left[sel]
            b = right[sel] - (1 << level) + 1
            mx[sel] = np.maximum(self.mx[level][a], self.mx[level][b])
            mn[sel] = np.minimum(self.mn[level][a], self.mn[level][b])
        return mx, mn


def _osc_integral_1d(f: GridFunction, eps: float) -> float:
    part = f.partition
    e = part.edges[0]
    lo, hi = e[0], e[-1]
    n = len(e) - 1
    padded = np.concatenate([[0.0], f.values, [0.0]])
    parts = [padded.real] if not np.iscomplexobj(padded) else [padded.real, padded.imag]
    tables = [_RangeTable(p) for p in parts]
    bp = np.unique(np.concatenate([e - eps, e + eps]))
    mids = 0.5 * (bp[1:] + bp[:-1])
    lengths = np.diff(bp)
    h = (hi - lo) / n

    def cell_of(y):
        # padded index: 0 left exterior, 1..n cells, n+1 right exterior
        k = np.floor((y - lo) / h).astype(np.int64) + 1
        k = np.clip(k, 1, n)
        # correct for rounding against the actual edges
        k = np.where(y < e[k - 1], k - 1, k)
        k = np.where(y >= e[np.minimum(k, n)], k + 1, k)
        k = np.where(y < lo, 0, k)
        return np.where(y > hi, n + 1, np.clip(k, 0, n + 1))

    left = cell_of(mids - eps)
    right = cell_of(mids + eps)
    spreads = []
    for t in tables:
        mx, mn = t.query(left, right)
        spreads.append(mx - mn)
    osc = spreads[0] if len(spreads) == 1 else np.hypot(*spreads)
    return float(np.sum(osc * lengths) / part.box.volume)


def _subgrid_size(eps, h, dim) -> int:
    """Quadrature points per axis and cell: spacing about ``eps/16``, capped."""
    cap = max(1, int(round(SUBGRID_BUDGET ** (1.0 / dim))))
    return int(min(cap, max(1, np.ceil(16.0 * h.max() / eps))))


def _osc_integral_nd(f: GridFunction, eps: float) -> float:
    part = f.partition
    h = part.widths
    d = part.dim
    r = [int(np.ceil(eps / hk)) + 1 for hk in h]
    arr = f.values.reshape(part.shape)
    pads = [(rk, rk) for rk in r]
    offsets = np.meshgrid(*[np.arange(-rk, rk + 1) for rk in r], indexing="ij")
    s = _subgrid_size(eps, h, d)

    def axis_gap(o, u, hk):
        # distance from a point at fraction u of its cell to the cell o steps away
        return np.where(o > 0, (o - u) * hk, np.where(o < 0, (u - o - 1) * hk, 0.0))

    layers = [arr.real, arr.imag] if np.iscomplexobj(arr) else [arr]
    padded = [np.pad(a, pads) for a in layers]
    total = 0.0
    for sub in np.ndindex(*([s] * d)):
        u = (np.asarray(sub) + 0.5) / s
        gap2 = sum(axis_gap(o, u[k], h[k]) ** 2 for k, o in enumerate(offsets))
        footprint = gap2 < eps * eps
        spreads = [ndimage.maximum_filter(a, footprint=footprint, mode="constant", cval=0.0)
                   - ndimage.minimum_filter(a, footprint=footprint, mode="constant", cval=0.0)
                   for a in padded]
        osc = spreads[0] if len(spreads) == 1 else np.hypot(*spreads)
        total += float(osc.sum())
    return total * np.prod(h) / s ** d / part.box.volume


def osc_integral(f: GridFunction, eps: float) -> float:
    """``∫ osc(f, B_eps(x)) dx`` over R^d (normalised by the volume of M)."""
    if f.partition.dim == 1:
        return _osc_integral_1d(f, eps)
    return _osc_integral_nd(f, eps)


def epsilon_grid(eps0: float, n_eps: int = 20, floor: float = 0.0) -> np.ndarray:
    """Geometric grid from ``max(eps0/100, floor)`` to ``eps0``."""
    lo = max(eps0 / 100.0, floor)
    if n_eps == 1 or lo >= eps0:
        return np.array([eps0])
    return np.geomspace(lo, eps0, n_eps)


def seminorm_alpha(f: GridFunction, alpha: float = 1.0, eps0: float = 1 / 32,
                   n_eps: int = 20) -> NormReport:
    """``|f|_alpha = sup_{eps <= eps0} eps^-alpha ∫ osc(f, B_eps(x)) dx`` on a geometric eps grid."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    # below one cell width the grid quadrature of a ball in d >= 2 is unreliable
    floor = 0.0 if f.partition.dim == 1 else float(f.partition.widths.max())
    grid = epsilon_grid(eps0, n_eps, floor)
    per = [osc_integral(f, float(e)) / e ** alpha for e in grid]
    semi = float(max(per))
    l1 = f.l1()
    return NormReport(l1, semi, l1 + semi, float(eps0), [float(e) for e in grid],
                      [float(p) for p in per], float(alpha))


def algebra_constant(fs, gs, alpha=1.0, eps0=1 / 32, n_eps=20) -> float:
    """Largest ``||fg||_alpha / (||f||_alpha ||g||_alpha)`` over a test family."""
    best = 0.0
    for f in fs:
        nf = seminorm_alpha(f, alpha, eps0, n_eps).norm_alpha
        for g in gs:
            ng = seminorm_alpha(g, alpha, eps0, n_eps).norm_alpha
            if nf == 0 or ng == 0:
                continue
            nfg = seminorm_alpha(f * g, alpha, eps0, n_eps).norm_alpha
            best = max(best, nfg / (nf * ng))
    return best


@dataclass
class LasotaYorkeProbe:
    k: np.ndarray
    norm_alpha: np.ndarray
    l1: np.ndarray
    eta: float
    A: float
    B: float
    residual: float
    contraction_observed: bool

    def rows(self):
        return list(zip(self.k.tolist(), self.norm_alpha.tolist(), self.l1.tolist()))

    def to_dict(self):
        return {"rows": [list(r) for r in self.rows()], "eta": self.eta, "A": self.A,
                "B": self.B, "residual": self.residual,
                "contraction_observed": self.contraction_observed}


def lasota_yorke_probe(K, f: GridFunction, alpha=1.0, eps0=1 / 32, k_max=12, n_eps=20,
                       residual_tol=0.05) -> LasotaYorkeProbe:
    """Track ``||K^k f||_alpha`` and fit ``A eta^k ||f||_alpha + B ||K^k f||_1``."""
    if K.partition.shape != f.partition.shape:
        raise GridMismatch("matrix and grid function live on different partitions")
    x = f.values.astype(float)
    norms, l1s = [], []
    for _ in range(k_max + 1):
        rep = seminorm_alpha(GridFunction(f.partition, x), alpha, eps0, n_eps)
        norms.append(rep.norm_alpha)
        l1s.append(rep.l1)
        x = K.matrix @ x
    norms, l1s = np.array(norms), np.array(l1s)
    ks = np.arange(k_max + 1)
    scale = max(norms.max(), 1e-300)
    best = (np.inf, 1.0, 0.0, 0.0)
    for eta in np.linspace(0.0, 1.5, 301)[1:]:
        design = np.column_stack([eta ** ks * norms[0], l1s])
        coef, res = nnls(design, norms)
        rel = res / (scale * np.sqrt(len(ks)))
        if rel < best[0] - 1e-12:
            best = (rel, eta, coef[0], coef[1])
    rel, eta, A, B = best
    return LasotaYorkeProbe(ks, norms, l1s, float(eta), float(A), float(B), float(rel),
                            bool(eta < 1.0 and rel < residual_tol))
