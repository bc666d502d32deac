"""Leading eigen-data, spectral gap, correlations and the Green-Kubo variance.

Everything is power iteration on the sparse Ulam matrix. The leading
right eigenvector ``v`` is normalised by ``<m, v> = 1`` and the left one
``phi*`` (a vector of cell weights, so ``<phi*, f> = phi* . f``) by
``<phi*, v> = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import (EigenvalueNotOne, GridMismatch, NoConvergence, NonSummable,
                     NotCentered, ZeroIterate)
from .ulam import TransferMatrix

EIGEN_TOL = 1e-12
GAP_THRESHOLD = 1e-3
TAIL_TOL = 1e-12


@dataclass
class SpectralData:
    eigenvalue: complex
    right: np.ndarray
    left: np.ndarray
    residual: float
    iterations: int
    normalization: str = "<m,v>=1, <phi*,v>=1"

    @property
    def is_real(self) -> bool:
        return abs(np.imag(self.eigenvalue)) <= 1e-12 * max(1.0, abs(self.eigenvalue))

    def to_dict(self) -> dict:
        lam = complex(self.eigenvalue)
        return {"lambda_re": lam.real, "lambda_im": lam.imag,
                "residual": self.residual, "iterations": self.iterations,
                "normalization": self.normalization}


@dataclass
class GapReport:
    lambda2_modulus: float
    decay_rate_fit: float
    mixing_flag: bool
    threshold: float = GAP_THRESHOLD
    converged: bool = True

    def to_dict(self) -> dict:
        return {"lambda2_modulus": self.lambda2_modulus, "decay_rate_fit": self.decay_rate_fit,
                "mixing_flag": self.mixing_flag, "threshold": self.threshold,
                "converged": self.converged}


@dataclass
class VarianceReport:
    sigma2: float
    c0: float
    correlations: np.ndarray
    truncation_n: int
    truncation_bound: float
    rate: float = 0.0

    def to_dict(self) -> dict:
        return {"sigma2": self.sigma2, "c0": self.c0, "truncation_n": self.truncation_n,
                "truncation_bound": self.truncation_bound, "rate": self.rate,
                "correlations": [float(c) for c in self.correlations]}


def _matvec(K, x, transpose=False):
    M = K.matrix if isinstance(K, TransferMatrix) else K
    return M.T @ x if transpose else M @ x


def _power(K, x, weights, tol, max_iter, transpose=False):
    """Power iteration, normalising so that ``weights . x = 1``."""
    def normalise(y):
        s = weights @ y
        if abs(s) < 1e-300:
            k = int(np.argmax(np.abs(y)))
            s = y[k] / abs(y[k]) if y[k] != 0 else 0.0
            if s == 0:
                raise ZeroIterate("iterate vanished")
            return y / (s * np.linalg.norm(y))
        return y / s

    x = normalise(x)
    lam_prev = np.inf
    for it in range(1, max_iter + 1):
        y = _matvec(K, x, transpose)
        if not np.any(y):
            raise ZeroIterate("iterate vanished: the operator annihilates the start vector")
        lam = (weights @ y) / (weights @ x)
        # eigenvalue stagnation alone can stop early on a warm start
        resid = np.abs(y - lam * x).max() / max(np.abs(x).max(), 1e-300)
        x = normalise(y)
        if abs(lam - lam_prev) < tol * max(1.0, abs(lam)) and resid < 100 * tol * max(1.0, abs(lam)):
            return lam, x, it
        lam_prev = lam
    raise NoConvergence(f"power iteration did not converge in {max_iter} steps", estimate=lam)


def leading_eigen(K: TransferMatrix, tol=EIGEN_TOL, max_iter=10_000, v0=None, w0=None) -> SpectralData:
    """Leading eigenvalue with its right and left eigenvectors."""
    m = K.measures
    dtype = np.result_type(K.matrix.dtype, float)
    v = np.ones(K.n, dtype=dtype) if v0 is None else np.asarray(v0, dtype=dtype)
    lam_r, v, it_r = _power(K, v, m.astype(dtype), tol, max_iter)
    w = m.astype(dtype) if w0 is None else np.asarray(w0, dtype=dtype)
    # normalise the left iterate against the right eigenvector
    lam_l, w, it_l = _power(K, w, v, tol, max_iter, transpose=True)
    Kv = K.matrix @ v
    lam = (w @ Kv) / (w @ v)
    if abs(lam - lam_r) > 1e3 * tol * max(1.0, abs(lam)):
        raise NoConvergence("left and right iterations found different eigenvalues", estimate=lam)
    v = v / (m @ v)
    w = w / (w @ v)
    residual = float(np.linalg.norm(K.matrix @ v - lam * v) / np.linalg.norm(v))
    if np.isrealobj(K.matrix.data) or abs(np.imag(lam)) < 1e-14:
        if np.isrealobj(K.matrix.data):
            lam, v, w = float(np.real(lam)), np.real(v), np.real(w)
    return SpectralData(lam, v, w, residual, it_r + it_l)


def invariant_density(K: TransferMatrix, tol=EIGEN_TOL, max_iter=10_000) -> SpectralData:
    if K.twist != 0:
        raise ValueError("invariant density needs the untwisted matrix")
    sd = leading_eigen(K, tol, max_iter)
    if abs(sd.eigenvalue - 1.0) > 1e-8:
        raise EigenvalueNotOne(f"leading eigenvalue {sd.eigenvalue} is not 1")
    if sd.right.min() < -1e-10:
        raise EigenvalueNotOne("leading eigenvector has negative entries")
    sd.right = np.clip(sd.right, 0.0, None)
    sd.right /= K.measures @ sd.right
    return sd


def spectral_gap(K: TransferMatrix, spectral: SpectralData, tol=1e-8, probe_steps=200,
                 threshold=GAP_THRESHOLD, seed=0, method="auto", arpack_max_n=10_000) -> GapReport:
    """Second eigenvalue modulus from the deflated map ``f -> K f - lambda <phi*, f> v``.

    A power iteration on the deflated operator detects nilpotent remainders
    (Markov Ulam matrices) by norm collapse and otherwise yields the
    geometric-mean growth rate of the iterate. With ``method="auto"`` that
    rate is refined by ARPACK for matrices up to ``arpack_max_n`` cells:
    Ulam spectra cluster in near-degenerate complex pairs where the power
    growth rate converges slowly.
    """
    lam, v, w = spectral.eigenvalue, spectral.right, spectral.left
    dtype = np.result_type(K.matrix.dtype, v.dtype, float)

    def deflated(x):
        y = K.matrix @ x
        y = y - lam * (w @ x) * v
        # project back onto the complement of v against rounding drift
        return y - (w @ y) * v

    def report(estimate, converged):
        return GapReport(float(estimate), float(estimate),
                         bool(abs(lam) - estimate > threshold), threshold, converged)

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(K.n).astype(dtype)
    x = x - (w @ x) * v
    x /= np.linalg.norm(x)
    logs = []
    for _ in range(probe_steps):
        x = deflated(x)
        nx = np.linalg.norm(x)
        if nx < 1e-14:
            return report(0.0, True)
        logs.append(np.log(nx))
        x /= nx
    probe = float(np.exp(np.mean(logs[len(logs) // 2:])))
    if method == "power" or K.n <= 8 or (method == "auto" and K.n > arpack_max_n):
        return report(probe, False)

    op = spla.LinearOperator((K.n, K.n), matvec=deflated, dtype=dtype)
    v_start = rng.standard_normal(K.n).astype(dtype)
    try:
        ev = spla.eigs(op, k=6, ncv=min(K.n - 1, 40), which="LM", return_eigenvectors=False,
                       tol=tol, maxiter=300, v0=v_start)
        return report(np.abs(ev).max(), True)
    except spla.ArpackNoConvergence as exc:
        found = np.abs(exc.eigenvalues)
        return report(max(probe, float(found.max()) if found.size else 0.0), False)


def _fit_rate(seq, floor=1e-13):
    """Slope of log|C_n| against n over the significant tail (0 if it dies out)."""
    a = np.abs(np.asarray(seq, dtype=float))
    n = np.arange(len(a))
    keep = (n >= 1) & (a > floor * max(a[0], 1e-300))
    if keep.sum() < 3:
        return 0.0
    idx = n[keep]
    tail = idx >= idx[len(idx) // 2]
    slope = np.polyfit(idx[tail], np.log(a[keep][tail]), 1)[0]
    return float(min(np.exp(slope), 1.0))


@dataclass
class CorrelationSequence:
    values: np.ndarray
    rate_fit: float
    prefactor_fit: float = field(default=1.0)


def correlation_sequence(K: TransferMatrix, spectral: SpectralData, f, g, n_max: int) -> CorrelationSequence:
    """``C_n = ∫ f (g∘T^n) dμ - ∫f dμ ∫g dμ`` for n = 0..n_max."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (K.n,) or g.shape != (K.n,):
        raise GridMismatch("correlation inputs must be cell vectors of the matrix size")
    m, v = K.measures, spectral.right
    mean_f = float(np.sum(f * v * m))
    mean_g = float(np.sum(g * v * m))
    x = f * v
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        out[n] = float(np.sum(g * x * m)) - mean_f * mean_g
        x = K.matrix @ x
    rate = _fit_rate(out)
    return CorrelationSequence(out, rate)


def green_kubo_variance(K: TransferMatrix, spectral: SpectralData, phi, tail_tol=TAIL_TOL,
                        n_max=10_000, rate=None) -> VarianceReport:
    """``sigma^2 = C_0 + 2 sum_{n>=1} C_n`` truncated by a geometric tail bound."""
    phi = np.asarray(getattr(phi, "values", phi), dtype=float)
    m, v = K.measures, spectral.right
    mean = float(np.sum(phi * v * m))
    if abs(mean) > 1e-10:
        raise NotCentered(f"observable has mean {mean} against the invariant density")
    x = phi * v
    c0 = float(np.sum(phi * x * m))
    scale = max(abs(c0), 1e-300)
    cs = [c0]
    total = c0
    bound = 0.0
    n_stop = 0
    for n in range(1, n_max + 1):
        x = K.matrix @ x
        cn = float(np.sum(phi * x * m))
        cs.append(cn)
        total += 2.0 * cn
        r = rate if rate is not None else _fit_rate(cs)
        r = min(r, 0.999)
        if abs(cn) <= tail_tol * (1.0 - r) * scale or not np.any(x):
            n_stop = n
            bound = 2.0 * abs(cn) * r / (1.0 - r)
            break
    else:
        raise NonSummable(f"correlations still above tolerance after {n_max} terms")
    sigma2 = c0 + 2.0 * float(np.sum(cs[1:]))
    return VarianceReport(sigma2, c0, np.array(cs), n_stop, bound,
                          rate if rate is not None else _fit_rate(cs))
