"""Ulam discretisation of the transfer operator and its twisted versions.

Convention: ``K[j, i] = m(B_i ∩ T^{-1} B_j) / m(B_j)``. Density vectors hold
cell averages, so for a uniform grid ``K`` is column stochastic and
``sum_j m_j (K f)_j = sum_i m_i f_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, GridMismatch, NonAffineExact
from .maps import Observable, PiecewiseAffineMap
from .partition import UlamPartition

_DROP = 1e-13  # relative overlap below which a transition is rounding noise


@dataclass(frozen=True)
class TransferMatrix:
    matrix: sp.csc_matrix
    partition: UlamPartition
    method: str = "exact-affine"
    samples: int | None = None
    seed: int | None = None
    twist: complex = 0.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def measures(self) -> np.ndarray:
        return self.partition.measures

    def __matmul__(self, f):
        return self.matrix @ f

    def rmatvec(self, g):
        return self.matrix.T @ g

    def to_triplets(self, path) -> None:
        """Write ``N nnz`` then one ``j i value`` line per entry (1-based indices)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.row, coo.col))
        with open(path, "w") as fh:
            fh.write(f"{self.n} {coo.nnz}\n")
            for k in order:
                v = coo.data[k]
                if np.iscomplexobj(coo.data):
                    fh.write(f"{coo.row[k] + 1} {coo.col[k] + 1} {v.real:.17g} {v.imag:.17g}\n")
                else:
                    fh.write(f"{coo.row[k] + 1} {coo.col[k] + 1} {v:.17g}\n")


def read_triplets(path) -> sp.csc_matrix:
    with open(path) as fh:
        n, nnz = (int(t) for t in fh.readline().split())
        rows, cols, vals = [], [], []
        for line in fh:
            parts = line.split()
            rows.append(int(parts[0]) - 1)
            cols.append(int(parts[1]) - 1)
            vals.append(float(parts[2]) if len(parts) == 3 else complex(float(parts[2]), float(parts[3])))
    if len(vals) != nnz:
        raise ValueError(f"header announces {nnz} entries, found {len(vals)}")
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))


def _axis_transfer(edges, dom_lo, dom_hi, slope, offset, wrap):
    """One-axis factor of an affine branch: sparse ``W[j, i] = |B_i ∩ U ∩ T^-1 B_j| / |B_j|``."""
    n = len(edges) - 1
    lo, hi = edges[0], edges[-1]
    h = (hi - lo) / n
    p = np.maximum(edges[:-1], dom_lo)
    q = np.minimum(edges[1:], dom_hi)
    src = np.nonzero(q > p)[0]
    p, q = p[src], q[src]
    y0 = slope * p + offset
    y1 = slope * q + offset
    y0, y1 = np.minimum(y0, y1), np.maximum(y0, y1)
    jlo = np.floor((y0 - lo) / h).astype(np.int64)
    jhi = np.ceil((y1 - lo) / h).astype(np.int64) - 1
    span = int((jhi - jlo).max()) + 1 if len(src) else 0
    rows, cols, vals = [], [], []
    for r in range(span):
        j = jlo + r
        active = j <= jhi
        # exact grid edges where available, lattice extension outside
        jin = np.clip(j, 0, n - 1)
        left = np.where((j >= 0) & (j < n), edges[jin], lo + j * h)
        right = np.where((j >= 0) & (j < n), edges[np.clip(j + 1, 0, n)], lo + (j + 1) * h)
        ov = np.minimum(y1, right) - np.maximum(y0, left)
        keep = active & (ov > _DROP * h)
        if wrap:
            jj = np.mod(j, n)
        else:
            outside = keep & ((j < 0) | (j >= n))
            if outside.any() and (ov[outside] > 1e-9 * h).any():
                raise ValueError("branch image leaves the phase space")
            keep &= (j >= 0) & (j < n)
            jj = j
        rows.append(jj[keep])
        cols.append(src[keep])
        vals.append(ov[keep] / abs(slope) / h)
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _kron_all(factors):
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return out


def build_exact(T: PiecewiseAffineMap, partition: UlamPartition) -> TransferMatrix:
    """Closed-form intersection volumes for branches with diagonal linear part."""
    if partition.box != T.phase_space:
        raise GridMismatch("partition box differs from the map's phase space")
    N = partition.n_cells
    K = sp.csr_matrix((N, N))
    for br in T.branches:
        if not br.is_diagonal:
            raise NonAffineExact(f"branch {br.label!r}: exact assembly needs a diagonal linear part")
        factors = [_axis_transfer(partition.edges[k], br.domain.lower[k], br.domain.upper[k],
                                  br.linear[k, k], br.offset[k], br.wrap[k])
                   for k in range(T.dim)]
        K = K + _kron_all(factors)
    K = sp.csc_matrix(K)
    K.sum_duplicates()
    K.eliminate_zeros()
    return TransferMatrix(K, partition, "exact-affine")


def _stratified_points(partition: UlamPartition, cells, per_axis, rng):
    d = partition.dim
    k = per_axis ** d
    strata = np.stack(np.meshgrid(*([np.arange(per_axis)] * d), indexing="ij"), -1).reshape(-1, d)
    jitter = rng.random((len(cells), k, d))
    frac = (strata[None, :, :] + jitter) / per_axis
    lows = partition.midpoints()[cells] - 0.5 * partition.widths
    return lows[:, None, :] + frac * partition.widths


def build_sampled(T: PiecewiseAffineMap, partition: UlamPartition, samples=1024, seed=0,
                  chunk_cells=4096) -> TransferMatrix:
    """Monte Carlo Ulam matrix from ``samples`` stratified points per cell."""
    if samples < 1000:
        raise ValueError("sampled assembly needs at least 1000 points per cell")
    if partition.box != T.phase_space:
        raise GridMismatch("partition box differs from the map's phase space")
    per_axis = int(np.ceil(samples ** (1.0 / partition.dim) - 1e-9))
    count = per_axis ** partition.dim
    N = partition.n_cells
    rows, cols = [], []
    for start in range(0, N, chunk_cells):
        cells = np.arange(start, min(N, start + chunk_cells))
        # one generator per chunk keeps assembly independent of chunking elsewhere
        rng = np.random.Generator(np.random.Philox(key=[seed, start]))
        pts = _stratified_points(partition, cells, per_axis, rng).reshape(-1, partition.dim)
        src = np.repeat(cells, count)
        idx = T.branch_index(pts)
        miss = idx < 0
        if miss.any():
            pts[miss] = np.nextafter(pts[miss], np.inf)
            idx[miss] = T.branch_index(pts[miss])
        y, idx = T.apply(pts, idx)
        tgt = partition.cell_index(y)
        ok = (tgt >= 0) & (idx >= 0)
        rows.append(tgt[ok])
        cols.append(src[ok])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    vals = np.full(rows.shape, 1.0 / count)
    K = sp.csc_matrix((vals, (rows, cols)), shape=(N, N))
    K.sum_duplicates()
    return TransferMatrix(K, partition, "sampled", count, seed)


def build_ulam(T: PiecewiseAffineMap, partition: UlamPartition, method="exact-affine",
               samples=1024, seed=0) -> TransferMatrix:
    if method in ("exact", "exact-affine"):
        return build_exact(T, partition)
    if method == "sampled":
        return build_sampled(T, partition, samples, seed)
    raise ValueError(f"unknown assembly method {method!r}")


def twist(K: TransferMatrix, phi: Observable | np.ndarray, z: complex) -> TransferMatrix:
    """Matrix of ``f -> P(exp(z*phi) f)``: column ``i`` scaled by ``exp(z*phi_i)``."""
    values = phi.values if isinstance(phi, Observable) else np.asarray(phi)
    if isinstance(phi, Observable) and phi.partition.shape != K.partition.shape:
        raise GridMismatch("observable lives on a different partition")
    if values.shape != (K.n,):
        raise GridMismatch(f"observable has {values.size} cells, matrix has {K.n}")
    if z == 0:
        return K
    if np.imag(z) == 0:
        scale = np.exp(np.real(z) * values)
    else:
        scale = np.exp(complex(z) * values)
    base = K.matrix
    if K.twist != 0:
        raise ValueError("twist an untwisted matrix")
    return replace(K, matrix=sp.csc_matrix(base @ sp.diags(scale)), twist=complex(z))


def apply(K: TransferMatrix, f) -> np.ndarray:
    f = np.asarray(f)
    if f.shape != (K.n,):
        raise DimensionMismatch(f"vector of shape {f.shape} for a {K.n}x{K.n} matrix")
    return K.matrix @ f


def koopman(K: TransferMatrix, g) -> np.ndarray:
    """Cell averages of ``g∘T`` for a cell-constant ``g`` (adjoint of ``K`` in L^2(m))."""
    m = K.measures
    return (K.matrix.T @ (np.asarray(g) * m)) / m


def _pullback_axis(edges, dom_lo, dom_hi, slope, offset, wrap):
    """``L[j, i] = |B_i ∩ U ∩ T^-1 B_j|`` computed on the source side.

    The source interval is cut at the preimages of target cell edges and
    each piece is classified by its image midpoint.
    """
    n = len(edges) - 1
    lo, hi = edges[0], edges[-1]
    L = hi - lo
    a, b = max(edges[0], dom_lo), min(edges[-1], dom_hi)
    ya, yb = sorted((slope * a + offset, slope * b + offset))
    k0 = int(np.floor((ya - lo) / L)) - 1
    k1 = int(np.ceil((yb - lo) / L)) + 1
    targets = np.concatenate([edges[:-1] + k * L for k in range(k0, k1)] + [[edges[-1] + (k1 - 1) * L]])
    pre = (targets - offset) / slope
    cuts = np.unique(np.concatenate([edges, pre, [a, b]]))
    cuts = cuts[(cuts >= a) & (cuts <= b)]
    left, right = cuts[:-1], cuts[1:]
    length = right - left
    good = length > 0
    left, right, length = left[good], right[good], length[good]
    mid = 0.5 * (left + right)
    i = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, n - 1)
    y = slope * mid + offset
    if wrap:
        y = lo + np.mod(y - lo, L)
    j = np.clip(np.searchsorted(edges, y, side="right") - 1, 0, n - 1)
    return sp.csr_matrix((length, (j, i)), shape=(n, n))


def pullback_integrals(T: PiecewiseAffineMap, partition: UlamPartition) -> sp.csr_matrix:
    """Sparse ``V[j, i] = m(B_i ∩ T^-1 B_j)`` in normalised measure, from preimage cuts."""
    if any(not br.is_diagonal for br in T.branches):
        raise NonAffineExact("preimage cutting needs diagonal linear parts")
    N = partition.n_cells
    V = sp.csr_matrix((N, N))
    for br in T.branches:
        factors = [_pullback_axis(partition.edges[k], br.domain.lower[k], br.domain.upper[k],
                                  br.linear[k, k], br.offset[k], br.wrap[k])
                   for k in range(T.dim)]
        V = V + _kron_all(factors)
    return V / T.phase_space.volume


def duality_check(K: TransferMatrix, T: PiecewiseAffineMap, f, g, n_samples=0, seed=0) -> float:
    """``|∫ f (g∘T) dm - ∫ (K f) g dm|`` for cell-constant ``f`` and ``g``.

    The left side uses exact preimage volumes when all branches are diagonal,
    otherwise ``n_samples`` random points per cell.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    part = K.partition
    rhs = float(np.sum(apply(K, f) * g) * part.cell_measure)
    if all(br.is_diagonal for br in T.branches) and n_samples == 0:
        V = pullback_integrals(T, part)
        lhs = float(g @ (V @ f))
    else:
        n_samples = max(n_samples, 1000)
        rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
        cells = np.arange(part.n_cells)
        per_axis = int(np.ceil(n_samples ** (1.0 / part.dim) - 1e-9))
        pts = _stratified_points(part, cells, per_axis, rng).reshape(-1, part.dim)
        y, idx = T.apply(pts)
        gy = np.where(idx >= 0, g[np.clip(part.cell_index(np.nan_to_num(y)), 0, None)], 0.0)
        per_cell = gy.reshape(part.n_cells, -1).mean(axis=1)
        lhs = float(np.sum(f * per_cell) * part.cell_measure)
    return abs(lhs - rhs)
