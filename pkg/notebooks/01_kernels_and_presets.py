"""
Noise kernels and parameter presets
===================================

A look at the two correlation kernels, their curvature at zero, and what
the circulant embedding does with them on a small ring.
"""

import numpy as np

from collapse_sim.noise import GridSpec, kernel_row, spectral_factor
from collapse_sim.physics import PRESETS, csl_kernel, dp_kernel, preset

# the presets, with where they come from
for name, p in PRESETS.items():
    spread = f"  +/- {p.uncertainty_decades:g} decades" if p.uncertainty_decades else ""
    print(f"{name:9s} {p.model:3s} {p.params}{spread}  [{p.provenance}]")

grw = csl_kernel(preset("GRW").params)
dp = dp_kernel(preset("DP-Diosi").params)

# CSL falls off on the scale rC, DP like 1/|u| beyond R0
u = np.array([0.0, 0.5e-7, 1e-7, 2e-7, 5e-7])
print("\nCSL D(u)/D(0):", np.round(grw(u) / grw.value_at_zero, 4))
u = np.array([0.0, 1e-15, 3e-15, 1e-14, 1e-13])
print("DP  D(u)/D(0):", np.round(dp(u) / dp.value_at_zero, 4))

# curvature at zero sets the heating rate
print("\nCSL D''(0) =", grw.curvature_at_zero, "  DP D''(0) =", dp.curvature_at_zero)

# on a 32-point ring the covariance spectrum is non-negative, so sqrt is safe
grid = GridSpec(32, 2.5e-8)
row = kernel_row(grw, grid)
s = spectral_factor(grw, grid)
print("\nsmallest Fourier coefficient / D(0):", np.fft.fft(row).real.min() / row[0])
print("spectral factor (first 6):", s[:6])
