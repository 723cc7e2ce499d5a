"""Deterministic master equation for the ensemble average of the collapse SDE.

Averaging the Ito equation over the noise gives

    d rho/dt = -(i/hbar) [H, rho] - 1/2 sum_{x,y} D(x - y) [M(x), [M(y), rho]]

(the spatial sums carry ``dx`` each). For position-diagonal ``M`` the
dissipator is an entrywise damping ``-Gamma_kl rho_kl``; the matrix
``Gamma`` is assembled here from the double-commutator sum itself, and the
stepping code (RK4) shares nothing with the trajectory integrator.
See ``docs/master_equation.md`` for the derivation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, KernelNotSmooth
from .physics import CODATA_2018, NoiseKernel
from .sde import Hamiltonian, MassDensityOperator
from .states import DensityState

__all__ = [
    "MAX_ORACLE_POINTS",
    "damping_matrix",
    "master_rhs",
    "MasterEquation",
    "MasterSolution",
    "decoherence_rate",
    "heating_rate_1d",
]

MAX_ORACLE_POINTS = 64


def _kernel_matrix(kernel: NoiseKernel, mop: MassDensityOperator) -> np.ndarray:
    grid = mop.grid
    x = np.arange(grid.n_points) * grid.dx
    sep = np.abs(x[:, None] - x[None, :])
    sep = np.minimum(sep, grid.length - sep)
    return np.asarray(kernel.on_ring(sep, grid.length), dtype=float)


def damping_matrix(mop: MassDensityOperator, kernel: NoiseKernel) -> np.ndarray:
    """``Gamma`` with ``(1/2) sum_ij D_ij [M_i, [M_j, rho]] = Gamma * rho`` entrywise.

    Uses the literal double sum over source points with ``dx`` weights:
    ``[M_i, [M_j, rho]]_kl = (mu_i(k) - mu_i(l)) (mu_j(k) - mu_j(l)) rho_kl``.
    """
    n = mop.grid.n_points
    if n > MAX_ORACLE_POINTS:
        raise InvalidParameter(f"oracle grids are capped at {MAX_ORACLE_POINTS} points, got {n}")
    dx = mop.grid.dx
    mu = np.stack([dx * mop.diagonal(i) for i in range(n)])  # (source i, basis k)
    a = mu[:, :, None] - mu[:, None, :]  # (i, k, l)
    d = _kernel_matrix(kernel, mop)
    return 0.5 * np.einsum("ikl,ij,jkl->kl", a, d, a, optimize=True)


def _rhs(rho, hmat, gamma, hbar):
    comm = hmat @ rho - rho @ hmat
    return (-1j / hbar) * comm - gamma * rho


def master_rhs(
    rho: DensityState, h: Hamiltonian, mop: MassDensityOperator, kernel: NoiseKernel
) -> np.ndarray:
    """Time derivative of ``rho`` under the averaged collapse dynamics."""
    n = rho.n_points
    if h.grid.n_points != n or mop.grid.n_points != n:
        raise DimensionMismatch(f"rho is {n}x{n} but the grid has {mop.grid.n_points} points")
    return _rhs(rho.matrix, h.matrix(), damping_matrix(mop, kernel), h.hbar)


@dataclass
class MasterSolution:
    times: np.ndarray
    states: list
    observables: Dict[str, np.ndarray]

    @property
    def final(self) -> DensityState:
        return self.states[-1]


class MasterEquation:
    """Precomputed ``H`` and ``Gamma`` for repeated integration."""

    def __init__(self, h: Hamiltonian, kernel: NoiseKernel, mop: Optional[MassDensityOperator] = None):
        self.h = h
        self.kernel = kernel
        self.mop = mop or MassDensityOperator(h.grid, h.mass)
        if self.mop.grid != h.grid:
            raise DimensionMismatch("Hamiltonian and mass density live on different grids")

    @cached_property
    def hmat(self) -> np.ndarray:
        return self.h.matrix()

    @cached_property
    def gamma(self) -> np.ndarray:
        return damping_matrix(self.mop, self.kernel)

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        return _rhs(rho, self.hmat, self.gamma, self.h.hbar)

    def auto_dt(self, rho: np.ndarray, t_final: float) -> float:
        """Step with ``||d rho|| dt < 1e-3`` (spectral-norm bound)."""
        rate = 2.0 * np.abs(np.linalg.eigvalsh(self.hmat)).max() / self.h.hbar + np.abs(self.gamma).max()
        if rate == 0:
            return t_final
        return min(t_final, 1e-3 / rate)

    def integrate(
        self,
        initial: DensityState,
        t_final: float,
        dt: Optional[float] = None,
        n_samples: int = 11,
        pair=None,
    ) -> MasterSolution:
        """Classical RK4 from ``initial.time`` to ``initial.time + t_final``.

        States and moment observables are reported at ``n_samples`` evenly
        spaced times (including both ends).
        """
        if initial.n_points != self.h.grid.n_points:
            raise DimensionMismatch("initial state does not match the grid")
        if t_final < 0:
            raise InvalidParameter("t_final must be >= 0")
        rho = np.array(initial.matrix)
        intervals = max(1, n_samples - 1)
        seg = t_final / intervals
        step_dt = dt if dt is not None else self.auto_dt(rho, seg if seg > 0 else 1.0)
        sub = max(1, int(math.ceil(seg / step_dt))) if seg > 0 else 0
        h = seg / sub if sub else 0.0
        times = [initial.time]
        states = [DensityState(rho, initial.time)]
        for k in range(intervals):
            for _ in range(sub):
                k1 = self.rhs(rho)
                k2 = self.rhs(rho + 0.5 * h * k1)
                k3 = self.rhs(rho + 0.5 * h * k2)
                k4 = self.rhs(rho + h * k3)
                rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = initial.time + (k + 1) * seg
            times.append(t)
            states.append(DensityState(rho, t))
        return MasterSolution(np.array(times), states, self.moments(states, pair))

    def exact_dephasing(self, initial: DensityState, t: float) -> DensityState:
        """Closed-form solution for ``H = 0``: ``rho_kl(t) = rho_kl(0) exp(-Gamma_kl t)``."""
        if not self.h.is_zero:
            raise InvalidParameter("exact dephasing solution requires H = 0")
        return DensityState(initial.matrix * np.exp(-self.gamma * t), initial.time + t)

    def moments(self, states, pair=None) -> Dict[str, np.ndarray]:
        """Same observable set as the trajectory CSV, computed from ``rho``."""
        grid = self.h.grid
        x = grid.positions
        kin = self.h.kinetic_matrix()
        v = self.h.potential
        out = {k: [] for k in ("x_mean", "x2_mean", "p2_mean", "energy", "coherence")}
        for s in states:
            rho = s.matrix
            diag = rho.diagonal().real
            e_kin = float(np.real(np.trace(kin @ rho)))
            out["x_mean"].append(float(diag @ x))
            out["x2_mean"].append(float(diag @ (x * x)))
            out["p2_mean"].append(2.0 * self.h.mass * e_kin)
            out["energy"].append(e_kin + (float(diag @ v) if v is not None else 0.0))
            out["coherence"].append(2.0 * abs(rho[pair]) if pair is not None else np.nan)
        return {k: np.array(v) for k, v in out.items()}


def decoherence_rate(kernel: NoiseKernel, m: float, d: float) -> float:
    """Decay rate ``m^2 (D(0) - D(d))`` of coherence between points ``d`` apart."""
    if d < 0:
        raise InvalidParameter(f"separation must be >= 0, got {d!r}")
    if d == 0:
        return 0.0
    return float(m * m * (kernel.value_at_zero - float(kernel.evaluate(d))))


def heating_rate_1d(kernel: NoiseKernel, m: float, hbar: float = CODATA_2018.hbar) -> float:
    """Growth rate of ``<p^2/2m>`` along one axis, ``-hbar^2 m D''(0) / 2`` (W)."""
    if kernel.curvature_at_zero is None:
        raise KernelNotSmooth(f"kernel {kernel.label} has no curvature at zero")
    return -0.5 * hbar * hbar * m * kernel.curvature_at_zero
