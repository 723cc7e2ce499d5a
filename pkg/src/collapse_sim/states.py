"""Pure and mixed single-particle states on a periodic 1-D grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidParameter
from .noise import GridSpec

__all__ = [
    "WaveState",
    "DensityState",
    "gaussian_packet",
    "two_point_superposition",
    "delta_state",
    "trace_distance",
]

NORM_TOL = 1e-9


@dataclass(frozen=True)
class WaveState:
    """Normalized complex amplitudes on the grid at a given time (s)."""

    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 1:
            raise DimensionMismatch("amplitudes must be a 1-D vector")
        norm = math.sqrt(float(np.sum(amps.real**2 + amps.imag**2)))
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidParameter(f"state is not normalized (norm = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes, time: float = 0.0) -> "WaveState":
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0 or not np.isfinite(norm):
            raise InvalidParameter("cannot normalize a zero or non-finite vector")
        return cls(amps / norm, time)

    @property
    def n_points(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def probabilities(self) -> np.ndarray:
        a = self.amplitudes
        return a.real**2 + a.imag**2

    def density(self) -> "DensityState":
        a = self.amplitudes
        return DensityState(np.outer(a, a.conj()), self.time)


@dataclass(frozen=True)
class DensityState:
    """Hermitian, unit-trace, positive density matrix in the position basis."""

    matrix: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DimensionMismatch(f"density matrix must be square, got shape {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    def check(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8):
        """Raise InvalidParameter unless the state is a valid density matrix."""
        rho = self.matrix
        scale = max(1.0, float(np.abs(rho).max()))
        herm = float(np.abs(rho - rho.conj().T).max())
        if herm > herm_tol * scale:
            raise InvalidParameter(f"density matrix not Hermitian (residue {herm:.2e})")
        tr = complex(np.trace(rho))
        if abs(tr - 1.0) > trace_tol:
            raise InvalidParameter(f"density matrix trace is {tr}")
        lo = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
        if lo < -eig_tol:
            raise InvalidParameter(f"density matrix has eigenvalue {lo:.2e}")
        return self

    @property
    def n_points(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        rho = self.matrix
        return float(np.real(np.vdot(rho.conj().T, rho)))

    def coherence(self, i: int, j: int) -> complex:
        return complex(self.matrix[i, j])


def trace_distance(a, b) -> float:
    """Half the trace norm of the difference of two density matrices."""
    ma = a.matrix if isinstance(a, DensityState) else np.asarray(a)
    mb = b.matrix if isinstance(b, DensityState) else np.asarray(b)
    if ma.shape != mb.shape:
        raise DimensionMismatch(f"shapes differ: {ma.shape} vs {mb.shape}")
    diff = ma - mb
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def gaussian_packet(grid: GridSpec, width: float, center: float = 0.0, wavenumber: float = 0.0) -> WaveState:
    """Gaussian packet with position standard deviation ``width`` (m)."""
    if not width > 0:
        raise InvalidParameter("width must be positive")
    x = grid.positions - center
    # wrap to the ring so packets near the edge stay smooth
    x = (x + 0.5 * grid.length) % grid.length - 0.5 * grid.length
    amps = np.exp(-(x * x) / (4.0 * width * width) + 1j * wavenumber * x)
    return WaveState.normalized(amps)


def two_point_superposition(grid: GridSpec, i: int, j: int, phase: float = 0.0) -> WaveState:
    """``(|x_i> + e^{i phase} |x_j>) / sqrt(2)``."""
    n = grid.n_points
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise InvalidParameter(f"need two distinct grid indices in [0, {n}), got {i}, {j}")
    amps = np.zeros(n, dtype=complex)
    amps[i] = 1.0
    amps[j] = np.exp(1j * phase)
    return WaveState.normalized(amps)


def delta_state(grid: GridSpec, i: int) -> WaveState:
    if not 0 <= i < grid.n_points:
        raise InvalidParameter(f"index {i} outside grid")
    amps = np.zeros(grid.n_points, dtype=complex)
    amps[i] = 1.0
    return WaveState(amps)
