"""Grid refinement for the beta-2.5 map: the density and lambda curve settle as N grows."""
import numpy as np

from twistop import (BUILTIN_MAPS, UlamPartition, build_ulam, center_observable,
                     digit_observable, invariant_density, lambda_curve, spectral_gap)

T = BUILTIN_MAPS["beta-2.5"]()
prev = None
for N in (256, 512, 1024, 2048):
    P = UlamPartition(T.phase_space, (N,))
    K = build_ulam(T, P)
    sd = invariant_density(K)
    gap = spectral_gap(K, sd)
    curve = lambda_curve(K, center_observable(digit_observable(P), sd.right), 1.0, 11)
    line = f"N={N:5d}  |lambda_2|={gap.lambda2_modulus:.6f}  lambda(1)={curve.lam[-1]:.8f}"
    if prev is not None:
        l1 = np.abs(np.repeat(prev, 2) - sd.right).mean()
        line += f"  density L1 change {l1:.2e}"
    print(line)
    prev = sd.right
