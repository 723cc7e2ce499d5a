"""
Single trajectories and an ensemble
===================================

A two-point superposition under CSL noise. Each run ends in one of the two
cells; the ensemble average decoheres at the predicted rate.
"""

import numpy as np

from collapse_sim.analysis import fit_decay_rate
from collapse_sim.master import decoherence_rate
from collapse_sim.noise import GridSpec
from collapse_sim.physics import CODATA_2018, CslParams, csl_kernel
from collapse_sim.sde import CollapseSystem, Hamiltonian, TrajectoryConfig, evolve, run_ensemble
from collapse_sim.states import two_point_superposition

m0 = CODATA_2018.m0
rC = 1e-7
grid = GridSpec(32, rC / 2)
kernel = csl_kernel(CslParams(1.0, rC))  # lambda = 1/s makes the rate O(1) for a nucleon
system = CollapseSystem(Hamiltonian.zero(grid, m0), kernel)

psi0 = two_point_superposition(grid, 8, 24)  # 16 cells = 8 rC apart
config = TrajectoryConfig(dt=5e-3, n_steps=1000, stride=100, master_seed=1)

# a few trajectories: watch the populations of the two cells
for k in range(4):
    rec = evolve(psi0, system, config, trajectory_index=k)
    p = rec.final_state.probabilities
    print(f"trajectory {k}: P(left) = {p[8]:.4f}  P(right) = {p[24]:.4f}")

# ensemble mean coherence vs the closed-form rate
stats = run_ensemble(psi0, system, TrajectoryConfig(dt=5e-3, n_steps=400, stride=20, n_trajectories=2048))
rate, se = fit_decay_rate(stats)
expected = decoherence_rate(kernel, m0, 16 * grid.dx)
print(f"\nfitted rate {rate:.4f} +/- {se:.4f} 1/s, expected {expected:.4f} 1/s")
print("coherence:", np.round(stats.observables["coherence"][::4], 3))
