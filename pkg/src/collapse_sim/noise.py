"""Spatially correlated, temporally white Gaussian noise on a periodic grid.

The covariance matrix of the field on a ring is circulant, so it is
diagonalized by the discrete Fourier transform. Convention throughout:
unnormalized forward transform, ``1/N`` on the inverse (numpy's default).

A noise increment over a step ``dt`` is ``sqrt(dt) * C^(1/2) xi`` with
``xi`` standard normal and ``C^(1/2)`` the symmetric circulant square root
of the covariance. Increments carry units of kg^-1 so that
``mass * increment`` is dimensionless.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import InvalidParameter, NotPositiveSemidefinite
from .physics import NoiseKernel

__all__ = [
    "GridSpec",
    "NoiseField",
    "NoiseStream",
    "PeriodicityWarning",
    "kernel_row",
    "spectral_factor",
    "covariance_row",
    "circulant",
    "sample_increment",
    "correlate",
]

PSD_TOLERANCE = 1e-12


class PeriodicityWarning(UserWarning):
    """Grid is short compared to the kernel correlation length."""


@dataclass(frozen=True)
class GridSpec:
    n_points: int
    dx: float

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise InvalidParameter(f"n_points must be a power of two >= 8, got {n!r}")
        if not (self.dx > 0 and math.isfinite(self.dx)):
            raise InvalidParameter(f"dx must be positive, got {self.dx!r}")

    @property
    def length(self) -> float:
        return self.n_points * self.dx

    @property
    def positions(self) -> np.ndarray:
        """Cell positions centered on zero, ``x_i = (i - N/2) dx``."""
        return (np.arange(self.n_points) - self.n_points // 2) * self.dx

    def separations(self) -> np.ndarray:
        """Minimum-image distance from cell 0 to every cell."""
        j = np.arange(self.n_points)
        return np.minimum(j, self.n_points - j) * self.dx


def kernel_row(kernel: NoiseKernel, grid: GridSpec) -> np.ndarray:
    """First row of the circulant covariance, ``D`` sampled on the ring."""
    return np.asarray(kernel.on_ring(grid.separations(), grid.length), dtype=float)


def circulant(row: np.ndarray) -> np.ndarray:
    """Dense symmetric circulant matrix ``C[i, j] = row[(j - i) mod N]``."""
    n = len(row)
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return np.asarray(row)[idx]


def spectral_factor(kernel: NoiseKernel, grid: GridSpec) -> np.ndarray:
    """Square root of the circulant covariance spectrum.

    Returns ``s`` with ``s[k] = sqrt(max(0, F[k]))``, ``F = fft(kernel_row)``.
    Coefficients down to ``-1e-12 * D(0)`` are treated as round-off and
    clipped; anything more negative raises :class:`NotPositiveSemidefinite`.

    The uniform mode ``F[0]`` is exempt: a constant added to the kernel
    cancels out of the collapse dynamics, so a negative ``F[0]`` (possible
    for ring-regularized Newtonian kernels on short rings) is set to zero.
    """
    ell = kernel.correlation_length
    if ell is not None and grid.length < 10.0 * ell:
        warnings.warn(
            f"grid length {grid.length:g} m is shorter than 10 correlation lengths "
            f"({ell:g} m); periodic images will be visible",
            PeriodicityWarning,
            stacklevel=2,
        )
    spectrum = np.fft.fft(kernel_row(kernel, grid)).real
    floor = -PSD_TOLERANCE * abs(kernel.value_at_zero)
    worst = spectrum[1:].min()
    if worst < floor:
        k = 1 + int(np.argmin(spectrum[1:]))
        raise NotPositiveSemidefinite(
            f"kernel {kernel.label} has Fourier coefficient F[{k}] = {worst:.3e} "
            f"below tolerance {floor:.3e} on this grid"
        )
    return np.sqrt(np.clip(spectrum, 0.0, None))


def covariance_row(factor: np.ndarray) -> np.ndarray:
    """Covariance row actually realized by a spectral factor (after clipping)."""
    n = len(factor)
    return np.fft.irfft(np.asarray(factor[: n // 2 + 1]) ** 2, n=n)


def correlate(white: np.ndarray, factor: np.ndarray) -> np.ndarray:
    """Map standard normals (last axis = grid) to correlated unit-time increments."""
    n = white.shape[-1]
    return np.fft.irfft(np.fft.rfft(white, axis=-1) * factor[: n // 2 + 1], n=n, axis=-1)


class NoiseStream:
    """Private, reproducible random stream for one trajectory.

    Streams are Philox (counter-based) generators keyed by
    ``SeedSequence(master_seed, spawn_key=(index,))``, so distinct indices
    share no state and any schedule of trajectories reproduces the same
    numbers.
    """

    def __init__(self, master_seed: int, index: int = 0):
        if not (0 <= int(master_seed) < 2**64):
            raise InvalidParameter(f"master seed must be a 64-bit unsigned integer, got {master_seed!r}")
        if int(index) < 0:
            raise InvalidParameter(f"stream index must be >= 0, got {index!r}")
        self.master_seed = int(master_seed)
        self.index = int(index)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.index,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    @property
    def path(self) -> Tuple[int, int]:
        return (self.master_seed, self.index)

    def normals(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)


@dataclass(frozen=True)
class NoiseField:
    increments: np.ndarray
    dt: float
    seed_path: Optional[Tuple[int, int]] = None


def sample_increment(
    factor: np.ndarray, dt: float, stream: Union[NoiseStream, np.random.Generator]
) -> NoiseField:
    """Draw one field increment ``dW`` over ``dt``; consumes exactly N normals."""
    if not (dt >= 0 and math.isfinite(dt)):
        raise InvalidParameter(f"dt must be >= 0, got {dt!r}")
    factor = np.asarray(factor, dtype=float)
    n = len(factor)
    if isinstance(stream, NoiseStream):
        white, path = stream.normals(n), stream.path
    else:
        white, path = stream.standard_normal(n), None
    return NoiseField(correlate(white, factor) * math.sqrt(dt), dt, path)
