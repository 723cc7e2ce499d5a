"""
Trajectories against the master equation
========================================

The averaged trajectories should reproduce the deterministic density-matrix
evolution. With a free Hamiltonian both also show the steady energy growth
set by the kernel curvature.
"""

import numpy as np

from collapse_sim.master import MasterEquation, heating_rate_1d
from collapse_sim.noise import GridSpec
from collapse_sim.physics import CODATA_2018, CslParams, csl_kernel
from collapse_sim.sde import CollapseSystem, Hamiltonian, TrajectoryConfig, run_ensemble
from collapse_sim.states import gaussian_packet, trace_distance

m0 = CODATA_2018.m0
rC = 1e-7
grid = GridSpec(64, rC / 6.4)
kernel = csl_kernel(CslParams(1e7, rC))  # an exaggerated rate so heating shows in 100 ns
h = Hamiltonian.free(grid, m0)
psi0 = gaussian_packet(grid, rC)

T = 1e-7
master = MasterEquation(h, kernel).integrate(psi0.density(), T, n_samples=11)
stats = run_ensemble(psi0, CollapseSystem(h, kernel), TrajectoryConfig(dt=1e-9, n_steps=100, stride=10, n_trajectories=2000))

print("   t (ns)    E master (J)     E SDE (J)")
for t, a, b in zip(stats.times, master.observables["energy"], stats.observables["energy"]):
    print(f"{t * 1e9:8.1f}  {a:.5e}  {b:.5e}")

slope = np.polyfit(master.times, master.observables["energy"], 1)[0]
print(f"\nmaster slope / curvature rate = {slope / heating_rate_1d(kernel, m0):.4f}")
print(f"trace distance at T: {trace_distance(stats.mean_density_matrix, master.final):.4f}")
