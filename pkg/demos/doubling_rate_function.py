"""Rate function of the doubling map's binary digit, checked against the closed form.

For T(x) = 2x mod 1 and phi = digit - 1/2 the twisted eigenvalue is
cosh(theta/2) exactly, so Lambda and its Legendre transform are known.
"""
import numpy as np

from twistop import (BUILTIN_MAPS, UlamPartition, build_ulam, center_observable,
                     digit_observable, green_kubo_variance, invariant_density, lambda_curve,
                     rate_function)

T = BUILTIN_MAPS["doubling"]()
P = UlamPartition(T.phase_space, (1024,))
K = build_ulam(T, P)

sd = invariant_density(K)
phi = center_observable(digit_observable(P), sd.right)
var = green_kubo_variance(K, sd, phi)
print(f"Green-Kubo variance: {var.sigma2:.12f} (exact 1/4)")

curve = lambda_curve(K, phi, theta_max=2.0, n_theta=21)
print(f"valid theta window: {curve.valid_window}")
print(f"max |lambda - cosh(theta/2)| = {np.abs(curve.lam - np.cosh(curve.theta / 2)).max():.2e}")

rate = rate_function(curve, 41, var.sigma2)
for eps in (0.05, 0.1, 0.2):
    p = 0.5 + eps
    exact = p * np.log(2 * p) + (1 - p) * np.log(2 * (1 - p))
    print(f"c({eps}) = {rate(eps):.10f}   binary entropy form {exact:.10f}")
