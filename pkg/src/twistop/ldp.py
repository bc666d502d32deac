"""Scaled cumulant generating function, rate function and the CLT check.

``Lambda(theta) = log lambda(theta)`` where ``lambda(theta)`` is the leading
eigenvalue of the twisted Ulam matrix ``f -> K(exp(theta*phi) f)``. The rate
function is its Legendre transform restricted to a window where the twisted
operator keeps a spectral gap and the curve is numerically convex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (ComplexEigenFailure, NoConvergence, NonConvexCurve, NotMixing,
                     WindowCollapse, WindowTooNarrow, ZeroVariance, ZeroIterate)
from .spectral import (EIGEN_TOL, GAP_THRESHOLD, leading_eigen, spectral_gap)
from .ulam import TransferMatrix, twist

CONVEXITY_TOL = 1e-8
VARIANCE_TOL = 1e-8
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class TwistedEigenvalue:
    """``z -> lambda(z)`` for a fixed matrix and observable, with warm starts."""

    def __init__(self, K: TransferMatrix, phi, tol=EIGEN_TOL):
        self.K = K
        self.phi = np.asarray(getattr(phi, "values", phi), dtype=float)
        self.tol = tol
        self._warm = {}

    def spectral(self, z):
        Kz = twist(self.K, self.phi, z)
        key = "complex" if np.iscomplex(z) else "real"
        v0, w0 = self._warm.get(key, (None, None))
        sd = leading_eigen(Kz, self.tol, v0=v0, w0=w0)
        self._warm[key] = (sd.right, sd.left)
        return Kz, sd

    def __call__(self, z):
        return self.spectral(z)[1].eigenvalue

    def Lambda(self, theta: float) -> float:
        return float(np.log(np.real(self(float(theta)))))


@dataclass
class LambdaCurve:
    theta: np.ndarray
    lam: np.ndarray
    Lambda: np.ndarray
    gap: np.ndarray
    valid_window: tuple[float, float]
    evaluator: Callable[[float], float] | None = field(default=None, repr=False)

    def Lambda_at(self, theta: float) -> float:
        if self.evaluator is not None:
            return self.evaluator(theta)
        from scipy.interpolate import CubicSpline
        return float(CubicSpline(self.theta, self.Lambda)(theta))

    def to_rows(self):
        return [(float(t), float(l), float(L), float(g))
                for t, l, L, g in zip(self.theta, self.lam, self.Lambda, self.gap)]


def _second_differences(x, y):
    h1 = np.diff(x)[:-1]
    h2 = np.diff(x)[1:]
    return 2.0 * (h2 * y[:-2] - (h1 + h2) * y[1:-1] + h1 * y[2:]) / (h1 * h2 * (h1 + h2))


def lambda_curve(K: TransferMatrix, phi, theta_max=2.0, n_theta=21, threshold=GAP_THRESHOLD,
                 tol=EIGEN_TOL, check_mixing=True) -> LambdaCurve:
    """Leading twisted eigenvalues on a symmetric theta grid, with the valid window."""
    if n_theta < 9:
        raise ValueError("n_theta must be at least 9")
    if theta_max <= 0:
        raise ValueError("theta_max must be positive")
    if n_theta % 2 == 0:
        n_theta += 1  # keep 0 on the grid
    ev = TwistedEigenvalue(K, phi, tol)
    if check_mixing:
        _, sd0 = ev.spectral(0.0)
        if not spectral_gap(K, sd0, threshold=threshold).mixing_flag:
            raise NotMixing("the untwisted operator has no spectral gap")
    thetas = np.linspace(-theta_max, theta_max, n_theta)
    thetas[n_theta // 2] = 0.0
    lam = np.empty(n_theta)
    gaps = np.empty(n_theta)
    ok = np.zeros(n_theta, dtype=bool)
    # sweep outward from 0 so warm starts follow a continuous branch
    order = np.argsort(np.abs(thetas), kind="stable")
    for k in order:
        try:
            Kz, sd = ev.spectral(float(thetas[k]))
        except (NoConvergence, ZeroIterate):
            lam[k], gaps[k] = np.nan, np.nan
            continue
        lam[k] = float(np.real(sd.eigenvalue))
        g = spectral_gap(Kz, sd, threshold=threshold, method="power")
        gaps[k] = g.lambda2_modulus
        ok[k] = lam[k] > 0 and g.mixing_flag
    with np.errstate(divide="ignore", invalid="ignore"):
        Lam = np.log(lam)
    convex = np.ones(n_theta, dtype=bool)
    finite = np.isfinite(Lam)
    if finite.all():
        convex[1:-1] = _second_differences(thetas, Lam) >= -CONVEXITY_TOL
    good = ok & finite & convex
    centre = n_theta // 2
    r = 0
    while centre + r + 1 < n_theta and good[centre + r + 1] and good[centre - r - 1]:
        r += 1
    if r == 0:
        raise WindowCollapse("no valid twist parameter beyond 0")
    w = float(thetas[centre + r])
    return LambdaCurve(thetas, lam, Lam, gaps, (-w, w), ev.Lambda)


@dataclass
class DerivativeReport:
    d1: float
    d2: float
    sigma2: float
    rel_error: float
    h: float

    def to_dict(self):
        return {"Lambda_prime_0": self.d1, "Lambda_second_0": self.d2, "sigma2": self.sigma2,
                "rel_error": self.rel_error, "h": self.h}


def check_derivatives(curve: LambdaCurve, sigma2: float, h=1e-3) -> DerivativeReport:
    """Fourth-order central differences of Lambda at 0 against the Green-Kubo variance."""
    lo, hi = curve.valid_window
    if 2 * h > min(-lo, hi):
        raise WindowTooNarrow(f"window {curve.valid_window} does not contain [-2h, 2h]")
    L = curve.Lambda_at
    f = {k: L(k * h) for k in (-2, -1, 0, 1, 2)}
    d1 = (-f[2] + 8 * f[1] - 8 * f[-1] + f[-2]) / (12 * h)
    d2 = (-f[2] + 16 * f[1] - 30 * f[0] + 16 * f[-1] - f[-2]) / (12 * h * h)
    rel = abs(d2 - sigma2) / max(sigma2, 1e-12)
    return DerivativeReport(float(d1), float(d2), float(sigma2), float(rel), h)


def golden_max(func, a, b, tol=1e-10, max_iter=200):
    """Maximiser of a unimodal ``func`` on ``[a, b]`` by golden-section search."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = func(d)
    x = 0.5 * (a + b)
    return x, func(x)


@dataclass
class RateFunction:
    theta_cap: float
    eps_minus: float
    eps_plus: float
    eps: np.ndarray
    c: np.ndarray
    argmax_theta: np.ndarray
    curve: LambdaCurve = field(repr=False, default=None)

    def __call__(self, eps: float) -> float:
        return legendre_point(self.curve, eps, self.theta_cap)[0]

    def to_rows(self):
        return [(float(e), float(c), float(t)) for e, c, t in zip(self.eps, self.c, self.argmax_theta)]

    def to_dict(self):
        return {"theta_cap": self.theta_cap, "eps_minus": self.eps_minus, "eps_plus": self.eps_plus}


def legendre_point(curve: LambdaCurve, eps: float, theta_cap: float | None = None):
    """``sup_{|theta| <= cap} theta*eps - Lambda(theta)`` and its maximiser."""
    cap = curve.valid_window[1] if theta_cap is None else theta_cap
    inside = np.abs(curve.theta) <= cap + 1e-15
    th = curve.theta[inside]
    vals = th * eps - curve.Lambda[inside]
    k = int(np.argmax(vals))
    a = th[max(k - 1, 0)]
    b = th[min(k + 1, len(th) - 1)]
    if eps == 0.0:
        return 0.0 - curve.Lambda_at(0.0), 0.0
    theta, _ = golden_max(lambda t: t * eps - curve.Lambda_at(t), a, b)
    value = theta * eps - curve.Lambda_at(theta)
    return float(value), float(theta)


def rate_function(curve: LambdaCurve, n_eps=41, sigma2: float | None = None,
                  margin=0.02) -> RateFunction:
    """Legendre transform of ``Lambda`` on a grid strictly inside ``(eps_-, eps_+)``."""
    lo, cap = curve.valid_window
    if sigma2 is None:
        sigma2 = check_derivatives(curve, 0.0, h=min(1e-3, cap / 4)).d2
    if sigma2 <= VARIANCE_TOL:
        raise ZeroVariance(f"asymptotic variance {sigma2:.3g} vanishes; the rate function is degenerate")
    inside = np.abs(curve.theta) <= cap + 1e-15
    if np.any(_second_differences(curve.theta[inside], curve.Lambda[inside]) < -CONVEXITY_TOL):
        raise NonConvexCurve("Lambda is not convex on the window")
    eps_plus = curve.Lambda_at(cap) / cap
    eps_minus = curve.Lambda_at(-cap) / (-cap)
    half = max(n_eps // 2, 1) + 1
    neg = np.linspace(eps_minus * (1 - margin), 0.0, half)
    pos = np.linspace(0.0, eps_plus * (1 - margin), half)
    grid = np.concatenate([neg, pos[1:]])
    cs, args = [], []
    for e in grid:
        c, t = legendre_point(curve, float(e), cap)
        cs.append(c)
        args.append(t)
    return RateFunction(float(cap), float(eps_minus), float(eps_plus), grid,
                        np.array(cs), np.array(args), curve)


@dataclass
class CltCheck:
    n: int
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    max_abs_error: float

    def to_rows(self):
        return [(float(t), self.n, float(l.real), float(l.imag), float(r), float(abs(l - r)))
                for t, l, r in zip(self.t, self.lhs, self.rhs)]


def clt_characteristic_check(K: TransferMatrix, phi, sigma2: float, t_grid: Sequence[float],
                             n_schedule: Sequence[int], tol=1e-14) -> list[CltCheck]:
    """Compare ``lambda(i t / sqrt(n))^n`` with ``exp(-t^2 sigma^2 / 2)``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.abs(t_grid) > 3.0 + 1e-12):
        raise ValueError("t_grid must lie in [-3, 3]")
    ev = TwistedEigenvalue(K, phi, tol)
    out = []
    for n in n_schedule:
        lhs = np.empty(len(t_grid), dtype=complex)
        for k, t in enumerate(t_grid):
            z = 1j * t / np.sqrt(n)
            try:
                lam = complex(ev(z)) if t != 0 else 1.0 + 0j
            except (NoConvergence, ZeroIterate) as exc:
                raise ComplexEigenFailure(f"leading eigenvalue at z = {z} not isolated") from exc
            lhs[k] = lam ** n
        rhs = np.exp(-t_grid ** 2 * sigma2 / 2.0)
        out.append(CltCheck(int(n), t_grid.copy(), lhs, rhs, float(np.abs(lhs - rhs).max())))
    return out
