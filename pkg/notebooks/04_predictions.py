"""
Closed-form predictions
=======================

Contrast loss in a matter-wave interferometer and heating of a trapped
particle, for the presets and a sweep in mass.
"""

import numpy as np

from collapse_sim.physics import CODATA_2018, preset
from collapse_sim.predictions import HeatingSetup, InterferometricSetup, contrast_reduction, heating_power

m0 = CODATA_2018.m0

for name in ("GRW", "Adler-A", "Adler-B"):
    p = preset(name).params
    print(f"{name}: heating of one nucleon {heating_power(p, HeatingSetup(m0)):.3e} W")

# contrast for a 1 um separation and 10 ms flight, growing mass
p = preset("Adler-A").params
print("\nmass (m0)   contrast (Adler-A)")
for m in np.logspace(3, 5.5, 6):
    c = contrast_reduction(p, InterferometricSetup(m * m0, 0.01, 1e-6))
    print(f"{m:9.2e}   {c:.6f}")

# separation dependence saturates once it exceeds rC
print("\nseparation (m)   1 - contrast (GRW, 1e5 m0)")
for d in (1e-9, 1e-8, 1e-7, 1e-6, 1e-5):
    c = contrast_reduction(preset("GRW").params, InterferometricSetup(1e5 * m0, 0.01, d))
    print(f"{d:12.0e}     {1 - c:.3e}")
