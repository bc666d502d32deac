"""Piecewise affine expanding maps, observables, and the regularity check.

A map is a finite list of affine branches ``x -> A x + b`` defined on
disjoint open boxes that tile the phase space. Optional per-axis wrapping
reduces the image modulo the side length of the phase space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma

from .errors import (BoundaryPoint, ExpansionViolation, GridMismatch,
                     InvalidBranch, SingularBranch)
from .partition import Rectangle, UlamPartition, UNIT_INTERVAL


@dataclass(frozen=True)
class Branch:
    domain: Rectangle
    linear: np.ndarray
    offset: np.ndarray
    label: str = ""
    wrap: tuple[bool, ...] = ()

    def __post_init__(self):
        d = self.domain.dim
        A = np.array(self.linear, dtype=float).reshape(d, d)
        b = np.array(self.offset, dtype=float).reshape(d)
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "linear", A)
        object.__setattr__(self, "offset", b)
        wrap = tuple(bool(w) for w in self.wrap) or (False,) * d
        if len(wrap) != d:
            raise InvalidBranch(f"branch {self.label!r}: wrap flags must have length {d}")
        object.__setattr__(self, "wrap", wrap)
        object.__setattr__(self, "label", str(self.label))

    @property
    def is_diagonal(self) -> bool:
        A = self.linear
        return bool(np.all(A == np.diag(np.diag(A))))

    def inverse_norm(self) -> float:
        """Operator 2-norm of the inverse linear part."""
        sv = np.linalg.svd(self.linear, compute_uv=False)
        if sv[-1] == 0.0 or sv[-1] < 1e-14 * sv[0]:
            raise SingularBranch(f"branch {self.label!r} has a singular linear part")
        return float(1.0 / sv[-1])

    def image_box(self) -> Rectangle:
        """Bounding box of the (unwrapped) image of the domain."""
        lo, hi = np.asarray(self.domain.lower), np.asarray(self.domain.upper)
        d = len(lo)
        corners = np.array([[hi[k] if (c >> k) & 1 else lo[k] for k in range(d)]
                            for c in range(2 ** d)])
        img = corners @ self.linear.T + self.offset
        return Rectangle(tuple(img.min(axis=0)), tuple(img.max(axis=0)))


@dataclass(frozen=True)
class PiecewiseAffineMap:
    branches: tuple[Branch, ...]
    phase_space: Rectangle = UNIT_INTERVAL
    alpha: float = 1.0
    name: str = ""
    _bounds: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.branches:
            raise InvalidBranch("a map needs at least one branch")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        for br in self.branches:
            if br.domain.dim != self.dim:
                raise InvalidBranch(f"branch {br.label!r} has dimension {br.domain.dim}, map has {self.dim}")
            br.inverse_norm()
        lows = np.array([br.domain.lower for br in self.branches])
        highs = np.array([br.domain.upper for br in self.branches])
        object.__setattr__(self, "_bounds", (lows, highs))

    @property
    def dim(self) -> int:
        return self.phase_space.dim

    @property
    def labels(self) -> list[str]:
        return [br.label for br in self.branches]

    def validate(self, require_expanding=True, tol=1e-12):
        """Check disjointness, coverage, images inside M and (optionally) expansion."""
        M = self.phase_space
        brs = self.branches
        for i, a in enumerate(brs):
            if not M.contains_rect(a.domain, tol):
                raise InvalidBranch(f"branch {a.label!r} domain leaves the phase space")
            for b in brs[i + 1:]:
                if a.domain.overlap_volume(b.domain) > tol * M.volume:
                    raise InvalidBranch(f"branch domains {a.label!r} and {b.label!r} overlap")
        covered = sum(br.domain.volume for br in brs)
        if abs(covered - M.volume) > 1e-9 * M.volume:
            raise InvalidBranch(f"branch domains cover volume {covered}, phase space has {M.volume}")
        for br in brs:
            img = br.image_box()
            for k in range(self.dim):
                if br.wrap[k]:
                    continue
                if img.lower[k] < M.lower[k] - 1e-9 or img.upper[k] > M.upper[k] + 1e-9:
                    raise InvalidBranch(f"image of branch {br.label!r} leaves the phase space along axis {k}")
            if require_expanding and br.inverse_norm() >= 1.0:
                raise InvalidBranch(f"branch {br.label!r} is not expanding")
        return self

    def branch_index(self, points) -> np.ndarray:
        """Index of the branch whose open domain contains each point; -1 otherwise."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        lows, highs = self._bounds
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        for i in range(len(self.branches)):
            inside = np.all((pts > lows[i]) & (pts < highs[i]), axis=1)
            out[inside] = i
        return out

    def apply(self, points, index=None) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised T on an ``(n, d)`` array. Points off every open domain give NaN."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        idx = self.branch_index(pts) if index is None else index
        out = np.full_like(pts, np.nan)
        M = self.phase_space
        for i, br in enumerate(self.branches):
            sel = idx == i
            if not sel.any():
                continue
            y = pts[sel] @ br.linear.T + br.offset
            for k in range(self.dim):
                if br.wrap[k]:
                    L = M.upper[k] - M.lower[k]
                    y[:, k] = M.lower[k] + np.mod(y[:, k] - M.lower[k], L)
            out[sel] = y
        return out, idx

    def evaluate(self, x) -> tuple[np.ndarray | float, str]:
        """T(x) and the label of the branch used; raises BoundaryPoint off the open domains."""
        x = np.asarray(x, dtype=float)
        y, idx = self.apply(x.reshape(1, self.dim))
        if idx[0] < 0:
            raise BoundaryPoint(f"{x.tolist()} is not interior to any branch domain")
        y = y[0]
        return (float(y[0]) if x.ndim == 0 else y), self.branches[idx[0]].label

    def branch_of(self, x) -> str:
        idx = self.branch_index(np.asarray(x, dtype=float).reshape(1, self.dim))[0]
        if idx < 0:
            raise BoundaryPoint(f"{np.asarray(x).tolist()} is not interior to any branch domain")
        return self.branches[idx].label

    def default_epsilon0(self) -> float:
        sides = np.concatenate([br.domain.sides for br in self.branches])
        return float(sides.min() / 16.0)


def _interval_map(cuts, slope, name, wrap=False):
    """1D map with ``T(x) = slope*x - k`` on the k-th interval ``[cuts[k], cuts[k+1])``."""
    branches = []
    for k in range(len(cuts) - 1):
        branches.append(Branch(Rectangle((cuts[k],), (cuts[k + 1],)),
                               [[slope]], [-float(k)], label=str(k + 1),
                               wrap=(wrap,)))
    return PiecewiseAffineMap(tuple(branches), UNIT_INTERVAL, 1.0, name)


def doubling() -> PiecewiseAffineMap:
    return _interval_map([0.0, 0.5, 1.0], 2.0, "doubling")


def beta_map(beta=2.5) -> PiecewiseAffineMap:
    """``x -> beta*x mod 1`` on [0, 1]."""
    n_full = math.ceil(beta) - 1
    cuts = [k / beta for k in range(n_full + 1)] + [1.0]
    if cuts[-2] >= 1.0:
        cuts = cuts[:-1]
    return _interval_map(cuts, beta, f"beta-{beta:g}")


def triple_2d() -> PiecewiseAffineMap:
    branches = []
    for a in range(3):
        for b in range(3):
            dom = Rectangle((a / 3, b / 3), ((a + 1) / 3, (b + 1) / 3))
            branches.append(Branch(dom, np.diag([3.0, 3.0]), [-a, -b], label=f"{a},{b}"))
    return PiecewiseAffineMap(tuple(branches), Rectangle((0.0, 0.0), (1.0, 1.0)), 1.0, "triple-2d")


def identity_map() -> PiecewiseAffineMap:
    """Non-expanding diagnostic map; every Ulam matrix is the identity."""
    return PiecewiseAffineMap((Branch(UNIT_INTERVAL, [[1.0]], [0.0], label="1"),),
                              UNIT_INTERVAL, 1.0, "identity")


BUILTIN_MAPS: dict[str, Callable[[], PiecewiseAffineMap]] = {
    "doubling": doubling,
    "beta-2.5": lambda: beta_map(2.5),
    "triple-2d": triple_2d,
    "identity": identity_map,
}


# ---------------------------------------------------------------- regularity

def expansion_constant(T: PiecewiseAffineMap) -> float:
    return max(br.inverse_norm() for br in T.branches)


def distortion_constant(T: PiecewiseAffineMap) -> float:
    # det DT_i^{-1} is constant on each affine branch
    return 0.0


def unit_ball_volume(d: int) -> float:
    if d < 0:
        raise ValueError("dimension must be nonnegative")
    return float(math.pi ** (d / 2) / gamma(d / 2 + 1))


def _faces(rect: Rectangle):
    d = rect.dim
    for k in range(d):
        for side in (rect.lower[k], rect.upper[k]):
            lo = list(rect.lower)
            hi = list(rect.upper)
            lo[k] = hi[k] = side
            yield np.array(lo), np.array(hi)


def complexity_Y(T: PiecewiseAffineMap) -> int:
    """Largest number of (branch, boundary face) pairs sharing a point.

    Every face is a closed box whose extent along each axis is bounded by
    domain coordinates, so the maximum is attained on the grid of those
    coordinates and an exact finite enumeration suffices.
    """
    faces_lo, faces_hi = [], []
    for br in T.branches:
        for lo, hi in _faces(br.domain):
            faces_lo.append(lo)
            faces_hi.append(hi)
    faces_lo = np.array(faces_lo)
    faces_hi = np.array(faces_hi)
    coords = [np.unique(np.concatenate([[br.domain.lower[k], br.domain.upper[k]]
                                        for br in T.branches]))
              for k in range(T.dim)]
    cand = np.stack(np.meshgrid(*coords, indexing="ij"), -1).reshape(-1, T.dim)
    tol = 1e-12
    best = 0
    for start in range(0, len(cand), 4096):
        c = cand[start:start + 4096, None, :]
        hit = np.all((c >= faces_lo - tol) & (c <= faces_hi + tol), axis=-1)
        best = max(best, int(hit.sum(axis=1).max()))
    return best


@dataclass(frozen=True)
class RegularityReport:
    s: float
    distortion_c: float
    Y: int
    eta0: float
    gamma_prev: float
    gamma_d: float
    alpha: float
    dim: int
    passes: bool

    def to_dict(self) -> dict:
        return {"s": self.s, "distortion_c": self.distortion_c, "Y": self.Y,
                "eta0": self.eta0, "gamma_prev": self.gamma_prev,
                "gamma_d": self.gamma_d, "alpha": self.alpha, "dim": self.dim,
                "passes": self.passes}


def eta0_value(s, Y, alpha, d) -> RegularityReport:
    if not s < 1.0:
        raise ExpansionViolation(f"expansion constant s = {s} is not < 1")
    g_prev, g_d = unit_ball_volume(d - 1), unit_ball_volume(d)
    eta = s ** alpha + (4.0 * s / (1.0 - s)) * Y * g_prev / g_d
    return RegularityReport(float(s), 0.0, int(Y), float(eta), g_prev, g_d,
                            float(alpha), int(d), bool(eta < 1.0 and s < 1.0))


def eta0(T: PiecewiseAffineMap) -> RegularityReport:
    """Saussol's combined constant for ``T``. A value >= 1 is reported, not raised."""
    report = eta0_value(expansion_constant(T), complexity_Y(T), T.alpha, T.dim)
    return report


# ---------------------------------------------------------------- observables

@dataclass(frozen=True)
class Observable:
    """Real observable stored by its cell values on a partition.

    ``pointwise`` (optional) evaluates the underlying function exactly for
    orbit simulation; cell values are its projection. ``shift`` is subtracted
    from both representations.
    """

    partition: UlamPartition
    values: np.ndarray
    pointwise: Callable[[np.ndarray], np.ndarray] | None = None
    shift: float = 0.0
    name: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.partition.n_cells:
            raise GridMismatch(f"{v.size} values for {self.partition.n_cells} cells")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def bound(self) -> float:
        return float(np.abs(self.values).max())

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.partition.dim)
        if self.pointwise is not None:
            return np.asarray(self.pointwise(pts), dtype=float) - self.shift
        idx = self.partition.cell_index(pts)
        return self.values[np.clip(idx, 0, None)]

    def scaled(self, c: float) -> "Observable":
        pw = None if self.pointwise is None else (lambda p, f=self.pointwise: c * f(p))
        return Observable(self.partition, c * self.values, pw, c * self.shift, self.name)

    def plus_constant(self, a: float) -> "Observable":
        return Observable(self.partition, self.values + a, self.pointwise, self.shift - a, self.name)


def table_observable(partition: UlamPartition, values: Sequence[float], name="table") -> Observable:
    return Observable(partition, np.asarray(values, dtype=float), None, 0.0, name)


def function_observable(partition: UlamPartition, func, name="expression", per_axis=4) -> Observable:
    return Observable(partition, partition.project(func, per_axis), func, 0.0, name)


def digit_observable(partition: UlamPartition) -> Observable:
    """Indicator of the upper half of the first axis, minus 1/2."""
    box = partition.box
    mid = 0.5 * (box.lower[0] + box.upper[0])

    def digit(p):
        return np.where(p[:, 0] >= mid, 0.5, -0.5)

    return Observable(partition, partition.project(digit, 2), digit, 0.0, "digit")


def expression_observable(partition: UlamPartition, expr: str) -> Observable:
    """Observable from a numpy expression in ``x0, x1, ...`` (``x`` aliases ``x0``)."""
    namespace = {k: getattr(np, k) for k in
                 ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "where",
                  "floor", "minimum", "maximum", "pi", "tanh", "sign")}
    namespace["np"] = np
    code = compile(expr, "<observable>", "eval")

    def func(p):
        local = dict(namespace)
        for k in range(p.shape[1]):
            local[f"x{k}"] = p[:, k]
        local["x"] = p[:, 0]
        out = eval(code, {"__builtins__": {}}, local)
        return np.broadcast_to(np.asarray(out, dtype=float), (p.shape[0],))

    return function_observable(partition, func, name=expr)


def center_observable(phi: Observable, density, partition: UlamPartition | None = None) -> Observable:
    """Subtract the mean of ``phi`` against the density ``v`` (cell quadrature)."""
    part = partition or phi.partition
    v = np.asarray(density, dtype=float).reshape(-1)
    if part.shape != phi.partition.shape or v.size != part.n_cells:
        raise GridMismatch("observable, density and partition disagree")
    mean = float(np.sum(phi.values * v) * part.cell_measure)
    return Observable(phi.partition, phi.values - mean, phi.pointwise, phi.shift + mean, phi.name)
