"""Empirical tail probabilities P(S_n > 0.1 n) for the doubling map against the exact law.

The digit process is a fair coin, so the tail is a binomial survival
function. Rates -log(p)/n approach the spectral rate c(0.1) from above.
"""
import math

from twistop import (BUILTIN_MAPS, InitialLaw, UlamPartition, build_ulam, digit_observable,
                     empirical_rate_sweep, exact_markov_tail)

T = BUILTIN_MAPS["doubling"]()
P = UlamPartition(T.phase_space, (2,))
K = build_ulam(T, P)
phi = digit_observable(P)
c01 = 0.6 * math.log(1.2) + 0.4 * math.log(0.8)

for t in empirical_rate_sweep(T, phi, InitialLaw(), [25, 50, 100], 0.1, 200_000, seed=2024):
    exact = exact_markov_tail(K, phi.values, P.measures, t.n, 0.1)
    print(f"n={t.n:3d}  p_hat={t.p_hat:.5f}  ci95=({t.ci95[0]:.5f}, {t.ci95[1]:.5f})  "
          f"exact={exact:.5f}  rate={t.empirical_rate:.4f}  (limit {c01:.4f})")
