"""Uniform product grids over a rectangular phase space."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPartition


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box ``[lower, upper]`` in R^d."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate rectangle {lo} x {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, x, closed=True, tol=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lower) - tol
        hi = np.asarray(self.upper) + tol
        if closed:
            return np.all((x >= lo) & (x <= hi), axis=-1)
        return np.all((x > lo) & (x < hi), axis=-1)

    def overlap_volume(self, other: "Rectangle") -> float:
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        return float(np.prod(np.clip(hi - lo, 0.0, None)))

    def contains_rect(self, other: "Rectangle", tol=1e-12) -> bool:
        return bool(np.all(np.asarray(other.lower) >= np.asarray(self.lower) - tol)
                    and np.all(np.asarray(other.upper) <= np.asarray(self.upper) + tol))


UNIT_INTERVAL = Rectangle((0.0,), (1.0,))


@dataclass(frozen=True)
class UlamPartition:
    """Product grid of ``shape[k]`` equal cells along each axis of ``box``.

    Cells are indexed row-major (last axis fastest). Cell measures are
    normalised so that the whole box has mass one.
    """

    box: Rectangle
    shape: tuple[int, ...]
    edges: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        if len(shape) != self.box.dim:
            raise EmptyPartition(f"resolution {shape} does not match dimension {self.box.dim}")
        if any(n < 1 for n in shape):
            raise EmptyPartition(f"resolution must be positive, got {shape}")
        object.__setattr__(self, "shape", shape)
        edges = tuple(np.linspace(a, b, n + 1)
                      for a, b, n in zip(self.box.lower, self.box.upper, shape))
        object.__setattr__(self, "edges", edges)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def widths(self) -> np.ndarray:
        return self.box.sides / np.asarray(self.shape)

    @property
    def cell_measure(self) -> float:
        return 1.0 / self.n_cells

    @property
    def measures(self) -> np.ndarray:
        return np.full(self.n_cells, self.cell_measure)

    def axis_index(self, x, axis) -> np.ndarray:
        """Cell index along one axis; -1 outside the box."""
        x = np.asarray(x, dtype=float)
        e = self.edges[axis]
        k = np.searchsorted(e, x, side="right") - 1
        k = np.where(x == e[-1], len(e) - 2, k)
        return np.where((x < e[0]) | (x > e[-1]), -1, k)

    def cell_index(self, points) -> np.ndarray:
        """Flat row-major index of the cell containing each point (-1 outside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            pts = pts.reshape(-1, self.dim)
        idx = np.zeros(pts.shape[0], dtype=np.int64)
        bad = np.zeros(pts.shape[0], dtype=bool)
        for k in range(self.dim):
            ik = self.axis_index(pts[:, k], k)
            bad |= ik < 0
            idx = idx * self.shape[k] + ik
        return np.where(bad, -1, idx)

    def midpoints(self) -> np.ndarray:
        """Cell centres, shape ``(n_cells, dim)`` in row-major order."""
        centres = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        grids = np.meshgrid(*centres, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def cell_bounds(self, index) -> Rectangle:
        multi = np.unravel_index(int(index), self.shape)
        lo = [self.edges[k][i] for k, i in enumerate(multi)]
        hi = [self.edges[k][i + 1] for k, i in enumerate(multi)]
        return Rectangle(tuple(lo), tuple(hi))

    def integrate(self, values) -> complex | float:
        """Quadrature of a cell-value vector against the normalised measure."""
        values = np.asarray(values)
        return values.sum() * self.cell_measure

    def project(self, func, per_axis=4) -> np.ndarray:
        """Cell averages of ``func`` by tensor midpoint rule with ``per_axis`` nodes."""
        offs = (np.arange(per_axis) + 0.5) / per_axis
        sub = np.stack(np.meshgrid(*([offs] * self.dim), indexing="ij"), -1).reshape(-1, self.dim)
        lows = self.midpoints() - 0.5 * self.widths
        acc = np.zeros(self.n_cells)
        for s in sub:
            acc += np.asarray(func(lows + s * self.widths), dtype=float)
        return acc / len(sub)

    def refine(self, factor=2) -> "UlamPartition":
        return UlamPartition(self.box, tuple(n * factor for n in self.shape))
