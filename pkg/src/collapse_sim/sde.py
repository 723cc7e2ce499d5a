"""Stochastic collapse equation for one particle on a periodic 1-D grid.

The mass density is a grid delta, ``M(x_i) = (m/dx) |x_i><x_i|``, so after
discretizing the spatial integrals (``dx`` per cell) each collapse term
carries a weight ``m`` per cell and only the kernel ``D`` smears in space.
One step of the Ito equation then reads, component-wise,

    psi_k <- psi_k * [1 + m (dW_k - <dW>)
                      - m^2/2 (D_0 - 2 (D p)_k + p.D.p) dt]

with ``p = |psi|^2``, ``<dW> = sum_k p_k dW_k`` and ``cov(dW_i, dW_j) =
D(x_i - x_j) dt``. The Hamiltonian part is applied first with its exact
propagator (Lie splitting), then the collapse factor, then the state is
renormalized. The norm before renormalization is kept as a diagnostic.

Trajectories are vectorized in fixed-size batches. Every trajectory owns a
Philox stream keyed by ``(master_seed, trajectory_index)``; batch results
are merged in batch order, so ensembles are bit-reproducible for any
number of workers.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, EnsembleFailure, InvalidParameter, NumericalBlowup
from .noise import GridSpec, NoiseField, NoiseStream, circulant, correlate, covariance_row, spectral_factor
from .physics import CODATA_2018, NoiseKernel
from .states import DensityState, WaveState

__all__ = [
    "MassDensityOperator",
    "Hamiltonian",
    "CollapseContext",
    "CollapseSystem",
    "TrajectoryConfig",
    "NormDiagnostics",
    "TrajectoryRecord",
    "EnsembleStats",
    "step",
    "evolve",
    "run_ensemble",
    "write_observables_csv",
    "OBSERVABLES",
]

SCHEME = "euler-maruyama-renormalized"
OBSERVABLES = ("x_mean", "x2_mean", "p2_mean", "energy", "coherence")
NORM_WINDOW = (0.5, 2.0)
MAX_RATE_DT = 0.1
# below this size dense matrix products beat FFTs
DENSE_MAX_POINTS = 64
STATS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MassDensityOperator:
    """Point-particle mass density: ``M(x_i)|x_j> = m delta_ij / dx |x_j>``."""

    grid: GridSpec
    mass: float

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise InvalidParameter(f"mass must be positive, got {self.mass!r}")

    def diagonal(self, i: int) -> np.ndarray:
        """Position-basis diagonal of ``M(x_i)`` (kg/m)."""
        d = np.zeros(self.grid.n_points)
        d[i] = self.mass / self.grid.dx
        return d

    @property
    def cell_weight(self) -> float:
        """``dx * M`` per occupied cell, i.e. the mass (kg)."""
        return self.mass


@dataclass(frozen=True)
class Hamiltonian:
    """``-hbar^2/(2m) * (second difference) + V`` on the ring.

    ``kinetic=False`` and ``potential=None`` gives ``H = 0``.
    """

    grid: GridSpec
    mass: float
    potential: Optional[np.ndarray] = None
    kinetic: bool = True
    hbar: float = CODATA_2018.hbar

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise InvalidParameter(f"mass must be positive, got {self.mass!r}")
        if self.potential is not None:
            v = np.array(self.potential, dtype=float)
            if v.shape != (self.grid.n_points,):
                raise DimensionMismatch(f"potential has shape {v.shape}, grid has {self.grid.n_points} points")
            v.setflags(write=False)
            object.__setattr__(self, "potential", v)

    @classmethod
    def zero(cls, grid: GridSpec, mass: float, hbar: float = CODATA_2018.hbar) -> "Hamiltonian":
        return cls(grid, mass, None, False, hbar)

    @classmethod
    def free(cls, grid: GridSpec, mass: float, hbar: float = CODATA_2018.hbar) -> "Hamiltonian":
        return cls(grid, mass, None, True, hbar)

    @property
    def is_zero(self) -> bool:
        return not self.kinetic and (self.potential is None or not np.any(self.potential))

    @property
    def kinetic_scale(self) -> float:
        """``hbar^2 / (2 m dx^2)`` in J."""
        return self.hbar**2 / (2.0 * self.mass * self.grid.dx**2)

    def kinetic_matrix(self) -> np.ndarray:
        n = self.grid.n_points
        lap = -2.0 * np.eye(n) + np.roll(np.eye(n), 1, axis=1) + np.roll(np.eye(n), -1, axis=1)
        return -self.kinetic_scale * lap

    def matrix(self) -> np.ndarray:
        n = self.grid.n_points
        h = self.kinetic_matrix() if self.kinetic else np.zeros((n, n))
        if self.potential is not None:
            h = h + np.diag(self.potential)
        return h.astype(complex)

    def kinetic_energies(self, psi: np.ndarray) -> np.ndarray:
        """``<p^2/2m>`` per row, from the same second-difference stencil."""
        diff = np.roll(psi, -1, axis=-1) - psi
        return self.kinetic_scale * np.sum(diff.real**2 + diff.imag**2, axis=-1)

    def energies(self, psi: np.ndarray) -> np.ndarray:
        e = self.kinetic_energies(psi)
        if self.potential is not None:
            e = e + (psi.real**2 + psi.imag**2) @ self.potential
        return e

    def propagator(self, dt: float):
        """Exact ``exp(-i H dt / hbar)`` as a function acting on the last axis."""
        if self.is_zero:
            return None
        n = self.grid.n_points
        if self.potential is None:
            k = np.arange(n)
            phases = np.exp(-1j * dt / self.hbar * 2.0 * self.kinetic_scale * (1.0 - np.cos(2.0 * np.pi * k / n)))

            def apply(psi):
                return np.fft.ifft(np.fft.fft(psi, axis=-1) * phases, axis=-1)

            if n > DENSE_MAX_POINTS:
                return apply
            ut = np.ascontiguousarray(apply(np.eye(n, dtype=complex)))
        else:
            evals, evecs = np.linalg.eigh(self.matrix())
            u = (evecs * np.exp(-1j * evals * dt / self.hbar)) @ evecs.conj().T
            ut = np.ascontiguousarray(u.T)

        def apply_dense(psi):
            return psi @ ut

        return apply_dense


@dataclass(frozen=True)
class CollapseContext:
    """Kernel data needed by the collapse update on one grid.

    ``row`` is the covariance realized by ``factor`` (after spectral
    clipping), so the deterministic damping matches the sampled noise.
    """

    mop: MassDensityOperator
    factor: np.ndarray
    row: np.ndarray
    row_hat: np.ndarray
    dense: Optional[np.ndarray] = None

    @classmethod
    def build(cls, kernel: NoiseKernel, mop: MassDensityOperator) -> "CollapseContext":
        factor = spectral_factor(kernel, mop.grid)
        row = covariance_row(factor)
        dense = circulant(row) if mop.grid.n_points <= DENSE_MAX_POINTS else None
        return cls(mop, factor, row, np.fft.rfft(row).real, dense)

    def smear(self, p: np.ndarray) -> np.ndarray:
        """Circular convolution of ``p`` (last axis) with the covariance row."""
        if self.dense is not None:
            return p @ self.dense
        n = p.shape[-1]
        return np.fft.irfft(np.fft.rfft(p, axis=-1) * self.row_hat, n=n, axis=-1)

    @property
    def max_rate(self) -> float:
        """Largest two-point decoherence rate on the grid, 1/s."""
        return self.mop.mass**2 * float(self.row[0] - self.row.min())


@dataclass(frozen=True)
class CollapseSystem:
    hamiltonian: Hamiltonian
    kernel: NoiseKernel

    @property
    def grid(self) -> GridSpec:
        return self.hamiltonian.grid

    @property
    def mass(self) -> float:
        return self.hamiltonian.mass

    @cached_property
    def mop(self) -> MassDensityOperator:
        return MassDensityOperator(self.grid, self.mass)

    @cached_property
    def context(self) -> CollapseContext:
        return CollapseContext.build(self.kernel, self.mop)


@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    n_steps: int
    master_seed: int = 0
    n_trajectories: int = 1
    scheme: str = SCHEME
    stride: int = 1
    batch_size: int = 256
    workers: int = 1
    coherence_pair: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidParameter(f"dt must be positive, got {self.dt!r}")
        for name in ("n_steps",):
            if int(getattr(self, name)) < 0:
                raise InvalidParameter(f"{name} must be >= 0")
        for name in ("n_trajectories", "stride", "batch_size", "workers"):
            if int(getattr(self, name)) < 1:
                raise InvalidParameter(f"{name} must be >= 1, got {getattr(self, name)!r}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidParameter("master_seed must be a 64-bit unsigned integer")
        if self.scheme != SCHEME:
            raise InvalidParameter(f"unknown scheme {self.scheme!r}; only {SCHEME!r} is available")

    def check_against(self, system: CollapseSystem):
        rate_dt = system.context.max_rate * self.dt
        if rate_dt > MAX_RATE_DT:
            raise InvalidParameter(
                f"dt = {self.dt:g} s too large: max decoherence rate x dt = {rate_dt:.3g} > {MAX_RATE_DT}"
            )
        if self.coherence_pair is not None:
            i, j = self.coherence_pair
            n = system.grid.n_points
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidParameter(f"coherence_pair {self.coherence_pair} outside grid")


@dataclass
class NormDiagnostics:
    """Running record of pre-renormalization norm drift ``|psi~| - 1``."""

    n_updates: int = 0
    sum_abs_drift: float = 0.0
    sum_drift: float = 0.0
    max_abs_drift: float = 0.0
    max_post_error: float = 0.0

    def record(self, drift: np.ndarray, post_error: np.ndarray):
        a = np.abs(drift)
        self.n_updates += a.size
        self.sum_abs_drift += float(a.sum())
        self.sum_drift += float(drift.sum())
        self.max_abs_drift = max(self.max_abs_drift, float(a.max(initial=0.0)))
        self.max_post_error = max(self.max_post_error, float(np.max(post_error, initial=0.0)))

    def merge(self, other: "NormDiagnostics") -> "NormDiagnostics":
        return NormDiagnostics(
            self.n_updates + other.n_updates,
            self.sum_abs_drift + other.sum_abs_drift,
            self.sum_drift + other.sum_drift,
            max(self.max_abs_drift, other.max_abs_drift),
            max(self.max_post_error, other.max_post_error),
        )

    @property
    def mean_abs_drift(self) -> float:
        return self.sum_abs_drift / self.n_updates if self.n_updates else 0.0

    def as_dict(self):
        return {
            "n_updates": self.n_updates,
            "mean_abs_drift": self.mean_abs_drift,
            "mean_drift": self.sum_drift / self.n_updates if self.n_updates else 0.0,
            "max_abs_drift": self.max_abs_drift,
            "max_post_renormalization_error": self.max_post_error,
        }


def _collapse_update(psi, dw, ctx: CollapseContext, dt, nonlinear=True):
    """Apply the collapse factor to a batch of rows; return (psi~, |psi~|)."""
    m = ctx.mop.mass
    p = psi.real**2 + psi.imag**2
    if nonlinear:
        wbar = (p * dw).sum(axis=-1, keepdims=True)
        dp = ctx.smear(p)
        pdp = (p * dp).sum(axis=-1, keepdims=True)
        f = 1.0 + m * (dw - wbar) - (0.5 * m * m * dt) * (ctx.row[0] - 2.0 * dp + pdp)
    else:
        f = 1.0 + m * dw
    norm = np.sqrt((p * f * f).sum(axis=-1))
    return psi * f, norm


def step(
    state: WaveState,
    h: Hamiltonian,
    mop: MassDensityOperator,
    context: CollapseContext,
    noise: NoiseField,
    dt: float,
    diagnostics: Optional[NormDiagnostics] = None,
    nonlinear: bool = True,
) -> WaveState:
    """One Euler-Maruyama step of the collapse equation plus renormalization.

    ``nonlinear=False`` drops the ``<M>`` feedback and the damping term; it
    exists only as a negative control and does not preserve the norm.
    """
    n = state.n_points
    if h.grid != mop.grid or context.mop != mop or n != mop.grid.n_points:
        raise DimensionMismatch("state, Hamiltonian, mass density and kernel context must share one grid")
    if noise.increments.shape != (n,):
        raise DimensionMismatch(f"noise has shape {noise.increments.shape}, expected ({n},)")
    if abs(noise.dt - dt) > 1e-15 * max(dt, noise.dt):
        raise InvalidParameter(f"noise sampled for dt={noise.dt!r}, step uses dt={dt!r}")
    psi = state.amplitudes[None, :]
    prop = h.propagator(dt)
    if prop is not None:
        psi = prop(psi)
    tilde, norm = _collapse_update(psi, noise.increments[None, :], context, dt, nonlinear)
    if not (NORM_WINDOW[0] <= norm[0] <= NORM_WINDOW[1]):
        raise NumericalBlowup(f"pre-renormalization norm {norm[0]:.4g} outside {NORM_WINDOW}")
    out = tilde[0] / norm[0]
    if diagnostics is not None:
        post = abs(math.sqrt(float(np.sum(out.real**2 + out.imag**2))) - 1.0)
        diagnostics.record(norm - 1.0, np.array([post]))
    return WaveState(out, state.time + dt)


def _default_pair(psi0: np.ndarray) -> Tuple[int, int]:
    order = np.argsort(-(np.abs(psi0) ** 2), kind="stable")
    i, j = sorted(int(k) for k in order[:2])
    return i, j


@dataclass
class _Partial:
    """Sums over a group of trajectories; merged by addition."""

    count: int
    sums: Dict[str, np.ndarray]
    rho_pair_sum: np.ndarray
    rho_sum: np.ndarray
    diagnostics: NormDiagnostics
    failures: List[NumericalBlowup] = field(default_factory=list)


def _observables(psi, h: Hamiltonian, positions, pair):
    p = psi.real**2 + psi.imag**2
    x = p @ positions
    x2 = p @ (positions * positions)
    kin = h.kinetic_energies(psi)
    p2 = 2.0 * h.mass * kin
    energy = kin if h.potential is None else kin + p @ h.potential
    rho_ab = psi[:, pair[0]] * np.conj(psi[:, pair[1]])
    return {"x_mean": x, "x2_mean": x2, "p2_mean": p2, "energy": energy}, rho_ab


def _run_rows(
    psi0: np.ndarray,
    system: CollapseSystem,
    config: TrajectoryConfig,
    indices: Sequence[int],
    pair: Tuple[int, int],
    keep_rows: bool = False,
    nonlinear: bool = True,
):
    """Integrate a batch of trajectories; returns a _Partial (and per-row series)."""
    ctx = system.context
    h = system.hamiltonian
    n = system.grid.n_points
    b = len(indices)
    dt = config.dt
    sqrt_dt = math.sqrt(dt)
    prop = h.propagator(dt)
    positions = system.grid.positions
    streams = [NoiseStream(config.master_seed, i) for i in indices]
    n_times = config.n_steps // config.stride + 1

    psi = np.tile(psi0.astype(complex), (b, 1))
    sums = {name: np.zeros(n_times) for name in OBSERVABLES[:-1]}
    pair_sum = np.zeros(n_times, dtype=complex)
    rows = {name: np.zeros((b, n_times)) for name in OBSERVABLES[:-1]} if keep_rows else None
    row_pair = np.zeros((b, n_times), dtype=complex) if keep_rows else None
    diag = NormDiagnostics()
    failed = np.zeros(b, dtype=bool)
    failures: List[NumericalBlowup] = []

    def record(slot):
        obs, rho_ab = _observables(psi, h, positions, pair)
        for name, vals in obs.items():
            sums[name][slot] = vals.sum()
            if keep_rows:
                rows[name][:, slot] = vals
        pair_sum[slot] = rho_ab.sum()
        if keep_rows:
            row_pair[:, slot] = rho_ab

    record(0)
    chunk = max(1, min(config.n_steps, (1 << 21) // (b * n)))
    done = 0
    while done < config.n_steps:
        m_steps = min(chunk, config.n_steps - done)
        white = np.stack([s.normals((m_steps, n)) for s in streams])
        dws = np.ascontiguousarray((correlate(white, ctx.factor) * sqrt_dt).transpose(1, 0, 2))
        for s in range(m_steps):
            if prop is not None:
                psi = prop(psi)
            tilde, norm = _collapse_update(psi, dws[s], ctx, dt, nonlinear)
            bad = ~((norm >= NORM_WINDOW[0]) & (norm <= NORM_WINDOW[1]))
            k = done + s + 1
            if bad.any():
                for r in np.flatnonzero(bad & ~failed):
                    failures.append(
                        NumericalBlowup(
                            f"pre-renormalization norm {norm[r]:.4g} outside {NORM_WINDOW}",
                            step_index=k,
                            trajectory_index=indices[r],
                        )
                    )
                failed |= bad
                # freeze failed rows so the rest of the batch can finish
                tilde[bad] = psi[bad]
                norm[bad] = 1.0
            psi = tilde / norm[:, None]
            post = np.abs(np.sqrt((psi.real**2 + psi.imag**2).sum(axis=-1)) - 1.0)
            diag.record((norm - 1.0)[~failed], post[~failed])
            if k % config.stride == 0:
                record(k // config.stride)
        done += m_steps

    rho_sum = psi.T @ psi.conj()
    part = _Partial(b, sums, pair_sum, rho_sum, diag, failures)
    return part, rows, row_pair, psi


@dataclass
class TrajectoryRecord:
    """Observables of one trajectory sampled every ``stride`` steps."""

    trajectory_index: int
    times: np.ndarray
    observables: Dict[str, np.ndarray]
    coherence_pair: Tuple[int, int]
    final_state: WaveState
    diagnostics: NormDiagnostics


def _prepare(initial: WaveState, system: CollapseSystem, config: TrajectoryConfig):
    if initial.n_points != system.grid.n_points:
        raise DimensionMismatch(f"state has {initial.n_points} points, grid has {system.grid.n_points}")
    config.check_against(system)
    pair = config.coherence_pair or _default_pair(initial.amplitudes)
    times = initial.time + config.dt * config.stride * np.arange(config.n_steps // config.stride + 1)
    return pair, times


def evolve(
    initial: WaveState,
    system: CollapseSystem,
    config: TrajectoryConfig,
    trajectory_index: int = 0,
    nonlinear: bool = True,
) -> TrajectoryRecord:
    """Integrate one trajectory; deterministic in ``(master_seed, trajectory_index)``."""
    pair, times = _prepare(initial, system, config)
    part, rows, row_pair, psi = _run_rows(
        initial.amplitudes, system, config, [trajectory_index], pair, keep_rows=True, nonlinear=nonlinear
    )
    if part.failures:
        raise part.failures[0]
    obs = {name: vals[0] for name, vals in rows.items()}
    obs["coherence"] = 2.0 * np.abs(row_pair[0])
    final = WaveState(psi[0], initial.time + config.n_steps * config.dt)
    return TrajectoryRecord(trajectory_index, times, obs, pair, final, part.diagnostics)


@dataclass
class EnsembleStats:
    """Ensemble means over trajectories.

    ``batch_means`` holds per-batch means (one row per batch, fixed batch
    partition), used for Monte-Carlo standard errors.
    """

    times: np.ndarray
    n_trajectories: int
    mean_density_matrix: DensityState
    observables: Dict[str, np.ndarray]
    mean_coherence: np.ndarray
    coherence_pair: Tuple[int, int]
    batch_means: Dict[str, np.ndarray]
    batch_counts: np.ndarray
    diagnostics: NormDiagnostics

    def standard_error(self, name: str) -> np.ndarray:
        """Batch-means standard error of an observable series."""
        vals = self.batch_means[name]
        w = self.batch_counts / self.batch_counts.sum()
        k = len(w)
        if k < 2:
            return np.full(vals.shape[1], np.nan)
        mean = w @ vals
        var = (w[:, None] * np.abs(vals - mean) ** 2).sum(axis=0) * k / (k - 1)
        return np.sqrt(var / k)

    def as_dict(self) -> dict:
        rho = self.mean_density_matrix.matrix
        return {
            "schema_version": STATS_SCHEMA_VERSION,
            "n_trajectories": self.n_trajectories,
            "coherence_pair": list(self.coherence_pair),
            "times": self.times.tolist(),
            "observables": {k: v.tolist() for k, v in self.observables.items()},
            "mean_coherence": {"real": self.mean_coherence.real.tolist(), "imag": self.mean_coherence.imag.tolist()},
            "mean_density_matrix": {"time": self.mean_density_matrix.time, "real": rho.real.tolist(), "imag": rho.imag.tolist()},
            "norm_diagnostics": self.diagnostics.as_dict(),
        }


def run_ensemble(initial: WaveState, system: CollapseSystem, config: TrajectoryConfig) -> EnsembleStats:
    """Run ``config.n_trajectories`` independent trajectories and average them.

    Trajectory ``i`` uses stream ``(master_seed, i)``. Batches of
    ``config.batch_size`` consecutive indices are independent work units
    (executed on ``config.workers`` threads) and are reduced in index order.
    """
    pair, times = _prepare(initial, system, config)
    nt, bs = config.n_trajectories, config.batch_size
    batches = [list(range(s, min(s + bs, nt))) for s in range(0, nt, bs)]

    def work(idx):
        return _run_rows(initial.amplitudes, system, config, idx, pair)[0]

    if config.workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(work, batches))
    else:
        parts = [work(idx) for idx in batches]

    failures = [f for p in parts for f in p.failures]
    if failures:
        raise EnsembleFailure(failures)

    count = 0
    sums = {name: np.zeros_like(times) for name in OBSERVABLES[:-1]}
    pair_sum = np.zeros(len(times), dtype=complex)
    rho_sum = np.zeros((system.grid.n_points,) * 2, dtype=complex)
    diag = NormDiagnostics()
    for p in parts:
        count += p.count
        for name in sums:
            sums[name] = sums[name] + p.sums[name]
        pair_sum = pair_sum + p.rho_pair_sum
        rho_sum = rho_sum + p.rho_sum
        diag = diag.merge(p.diagnostics)

    counts = np.array([p.count for p in parts], dtype=float)
    batch_means = {name: np.array([p.sums[name] / p.count for p in parts]) for name in sums}
    batch_means["rho_pair"] = np.array([p.rho_pair_sum / p.count for p in parts])
    observables = {name: s / count for name, s in sums.items()}
    mean_pair = pair_sum / count
    observables["coherence"] = 2.0 * np.abs(mean_pair)
    rho = DensityState(rho_sum / count, initial.time + config.n_steps * config.dt)
    return EnsembleStats(times, count, rho, observables, mean_pair, pair, batch_means, counts, diag)


def write_observables_csv(path, times, observables: Dict[str, np.ndarray], comment: Optional[str] = None):
    """CSV with columns ``time`` plus every name in :data:`OBSERVABLES`."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("time",) + OBSERVABLES)
        for k, t in enumerate(times):
            writer.writerow([repr(float(t))] + [repr(float(observables[name][k])) for name in OBSERVABLES])
