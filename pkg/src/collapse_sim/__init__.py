"""Collapse-model dynamics (CSL and Diosi-Penrose): stochastic trajectories,
master-equation oracle, closed-form predictions and exclusion regions."""

__version__ = "0.1.0"

from .physics import (  # noqa: E402
    CODATA_2018,
    CslParams,
    DpParams,
    NoiseKernel,
    PhysicalConstants,
    csl_kernel,
    dp_kernel,
    preset,
)
from .noise import GridSpec, spectral_factor, sample_increment  # noqa: E402
from .states import DensityState, WaveState, gaussian_packet, two_point_superposition  # noqa: E402
from .sde import CollapseSystem, Hamiltonian, TrajectoryConfig, evolve, run_ensemble, step  # noqa: E402
from .master import MasterEquation, decoherence_rate, heating_rate_1d, master_rhs  # noqa: E402
from .predictions import HeatingSetup, InterferometricSetup, contrast_reduction, heating_power  # noqa: E402
from .exclusion import ExperimentRecord, combine, dp_exclude_from_heating, is_excluded  # noqa: E402
