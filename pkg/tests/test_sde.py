import dataclasses
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from collapse_sim.errors import DimensionMismatch, EnsembleFailure, InvalidParameter, NumericalBlowup
from collapse_sim.noise import GridSpec, NoiseField, NoiseStream, sample_increment
from collapse_sim.physics import CslParams, DpParams, csl_kernel, dp_kernel, zero_kernel
from collapse_sim.sde import (
    CollapseSystem,
    Hamiltonian,
    NormDiagnostics,
    TrajectoryConfig,
    evolve,
    run_ensemble,
    step,
    write_observables_csv,
)
from collapse_sim.states import delta_state, gaussian_packet, two_point_superposition

from conftest import HBAR, M0

RC = 1e-7
GRID = GridSpec(16, RC / 2)


def csl_system(lam=1.0, grid=GRID, free=False, mass=M0):
    h = Hamiltonian.free(grid, mass) if free else Hamiltonian.zero(grid, mass)
    return CollapseSystem(h, csl_kernel(CslParams(lam, RC)))


def test_hamiltonian_propagator_matches_expm():
    g = GridSpec(16, 1e-8)
    for h in (Hamiltonian.free(g, M0), Hamiltonian(g, M0, potential=np.linspace(0, 1e-28, 16))):
        dt = 1e-9
        u = scipy.linalg.expm(-1j * h.matrix() * dt / HBAR)
        psi = np.random.default_rng(0).normal(size=(3, 16)) + 0j
        np.testing.assert_allclose(h.propagator(dt)(psi), psi @ u.T, atol=1e-12)


def test_zero_hamiltonian_has_no_propagator():
    h = Hamiltonian.zero(GRID, M0)
    assert h.is_zero
    assert h.propagator(1.0) is None


def test_hamiltonian_rejects_wrong_potential():
    with pytest.raises(DimensionMismatch):
        Hamiltonian(GRID, M0, potential=np.zeros(3))


def test_delta_is_fixed_point():
    system = csl_system(lam=5.0)
    psi0 = delta_state(GRID, 5)
    rec = evolve(psi0, system, TrajectoryConfig(dt=1e-3, n_steps=500, master_seed=3))
    np.testing.assert_array_equal(rec.final_state.probabilities, psi0.probabilities)


def test_n_steps_zero_returns_initial_state():
    psi0 = two_point_superposition(GRID, 3, 11, phase=0.3)
    rec = evolve(psi0, csl_system(), TrajectoryConfig(dt=1e-3, n_steps=0))
    np.testing.assert_array_equal(rec.final_state.amplitudes, psi0.amplitudes)
    assert len(rec.times) == 1
    assert rec.observables["coherence"][0] == pytest.approx(1.0)


def test_trajectory_is_deterministic():
    psi0 = gaussian_packet(GRID, RC)
    cfg = TrajectoryConfig(dt=1e-3, n_steps=200, master_seed=11)
    a = evolve(psi0, csl_system(free=True), cfg, trajectory_index=4)
    b = evolve(psi0, csl_system(free=True), cfg, trajectory_index=4)
    c = evolve(psi0, csl_system(free=True), cfg, trajectory_index=5)
    np.testing.assert_array_equal(a.final_state.amplitudes, b.final_state.amplitudes)
    assert not np.allclose(a.final_state.amplitudes, c.final_state.amplitudes)


def test_ensemble_independent_of_workers():
    psi0 = two_point_superposition(GRID, 2, 10)
    base = dict(dt=1e-3, n_steps=100, master_seed=1, n_trajectories=40, batch_size=8, stride=10)
    a = run_ensemble(psi0, csl_system(), TrajectoryConfig(**base, workers=1))
    b = run_ensemble(psi0, csl_system(), TrajectoryConfig(**base, workers=3))
    np.testing.assert_array_equal(a.mean_density_matrix.matrix, b.mean_density_matrix.matrix)
    for name in a.observables:
        np.testing.assert_array_equal(a.observables[name], b.observables[name])


def test_ensemble_member_matches_single_trajectory():
    psi0 = two_point_superposition(GRID, 2, 10)
    cfg = TrajectoryConfig(dt=1e-3, n_steps=50, master_seed=8, n_trajectories=3, batch_size=2)
    stats = run_ensemble(psi0, csl_system(), cfg)
    rows = [evolve(psi0, csl_system(), cfg, trajectory_index=i).final_state.amplitudes for i in range(3)]
    rho = sum(np.outer(r, r.conj()) for r in rows) / 3
    np.testing.assert_allclose(stats.mean_density_matrix.matrix, rho, atol=1e-14)


def test_step_matches_evolve():
    system = csl_system(free=True)
    psi0 = gaussian_packet(GRID, RC)
    dt = 1e-3
    stream = NoiseStream(21, 0)
    state = psi0
    for _ in range(5):
        noise = sample_increment(system.context.factor, dt, stream)
        state = step(state, system.hamiltonian, system.mop, system.context, noise, dt)
    rec = evolve(psi0, system, TrajectoryConfig(dt=dt, n_steps=5, master_seed=21))
    np.testing.assert_allclose(state.amplitudes, rec.final_state.amplitudes, atol=1e-13)
    assert state.time == pytest.approx(5 * dt)


def test_step_rejects_mismatched_noise():
    system = csl_system()
    psi0 = gaussian_packet(GRID, RC)
    with pytest.raises(DimensionMismatch):
        step(psi0, system.hamiltonian, system.mop, system.context, NoiseField(np.zeros(8), 1e-3), 1e-3)
    with pytest.raises(InvalidParameter):
        step(psi0, system.hamiltonian, system.mop, system.context, NoiseField(np.zeros(16), 2e-3), 1e-3)


def test_step_blowup_is_reported():
    system = csl_system()
    psi0 = two_point_superposition(GRID, 0, 8)
    dw = np.zeros(16)
    dw[0] = 100.0 / M0
    with pytest.raises(NumericalBlowup):
        step(psi0, system.hamiltonian, system.mop, system.context, NoiseField(dw, 1e-3), 1e-3)


def test_dt_bound_is_enforced():
    with pytest.raises(InvalidParameter, match="too large"):
        evolve(gaussian_packet(GRID, RC), csl_system(lam=1e3), TrajectoryConfig(dt=1e-3, n_steps=1))


@pytest.mark.parametrize(
    "kw", [dict(dt=0.0), dict(dt=-1.0), dict(n_steps=-1), dict(n_trajectories=0), dict(stride=0), dict(scheme="milstein")]
)
def test_config_validation(kw):
    base = dict(dt=1e-3, n_steps=10)
    base.update(kw)
    with pytest.raises(InvalidParameter):
        TrajectoryConfig(**base)


def test_ensemble_failure_collects_blowups():
    system = csl_system(lam=1.0)
    # inject noise far stronger than the kernel used for the dt check
    ctx = system.context
    system.__dict__["context"] = dataclasses.replace(ctx, factor=ctx.factor * 50.0)
    cfg = TrajectoryConfig(dt=1e-3, n_steps=50, n_trajectories=20, batch_size=8, master_seed=2)
    psi0 = two_point_superposition(GRID, 0, 8)
    with pytest.raises(EnsembleFailure) as info:
        run_ensemble(psi0, system, cfg)
    failures = info.value.failures
    assert failures and all(isinstance(f, NumericalBlowup) for f in failures)
    idx = [f.trajectory_index for f in failures]
    assert len(set(idx)) == len(idx)
    assert all(f.step_index >= 1 for f in failures)


def test_zero_kernel_conserves_energy():
    g = GridSpec(64, 1e-8)
    system = CollapseSystem(Hamiltonian.free(g, M0), zero_kernel())
    psi0 = gaussian_packet(g, 5e-8, wavenumber=2e7)
    rec = evolve(psi0, system, TrajectoryConfig(dt=1e-9, n_steps=400, stride=4))
    e = rec.observables["energy"]
    assert np.max(np.abs(e - e[0])) <= 1e-10 * e[0]


def test_free_gaussian_dispersion():
    sigma0 = 1e-7
    g = GridSpec(256, 1e-8)
    system = CollapseSystem(Hamiltonian.free(g, M0), zero_kernel())
    t = 2 * M0 * sigma0**2 / HBAR  # width doubles in variance
    n = 200
    rec = evolve(gaussian_packet(g, sigma0), system, TrajectoryConfig(dt=t / n, n_steps=n, stride=n))
    expected = sigma0**2 + (HBAR * t / (2 * M0 * sigma0)) ** 2
    assert rec.observables["x2_mean"][-1] == pytest.approx(expected, rel=1e-2)


def test_negative_control_drift_scales_with_sqrt_dt():
    system = csl_system(lam=1.0)
    psi0 = two_point_superposition(GRID, 0, 8)
    drifts = []
    for dt in (4e-4, 1e-4):
        rec = evolve(psi0, system, TrajectoryConfig(dt=dt, n_steps=2000, master_seed=6), nonlinear=False)
        drifts.append(rec.diagnostics.mean_abs_drift)
    assert drifts[0] / drifts[1] == pytest.approx(2.0, rel=0.2)


def test_norm_diagnostics_merge():
    a, b = NormDiagnostics(), NormDiagnostics()
    a.record(np.array([1e-3, -2e-3]), np.array([1e-16, 0.0]))
    b.record(np.array([4e-3]), np.array([2e-16]))
    m = a.merge(b)
    assert m.n_updates == 3
    assert m.max_abs_drift == 4e-3
    assert m.mean_abs_drift == pytest.approx(7e-3 / 3)
    assert m.max_post_error == 2e-16


def test_standard_error_and_batches():
    psi0 = two_point_superposition(GRID, 2, 10)
    cfg = TrajectoryConfig(dt=1e-3, n_steps=20, n_trajectories=10, batch_size=4, stride=5)
    stats = run_ensemble(psi0, csl_system(), cfg)
    np.testing.assert_array_equal(stats.batch_counts, [4, 4, 2])
    assert stats.standard_error("energy").shape == stats.times.shape
    assert stats.as_dict()["schema_version"] == 1


def test_observables_csv(tmp_path):
    psi0 = gaussian_packet(GRID, RC)
    rec = evolve(psi0, csl_system(), TrajectoryConfig(dt=1e-3, n_steps=4))
    path = tmp_path / "t.csv"
    write_observables_csv(path, rec.times, rec.observables, comment="hash abc")
    lines = path.read_text().splitlines()
    assert lines[0] == "# hash abc"
    assert lines[1] == "time,x_mean,x2_mean,p2_mean,energy,coherence"
    assert len(lines) == 2 + 5


@settings(max_examples=25, deadline=None)
@given(
    lam=st.floats(0.01, 30.0),
    seed=st.integers(0, 2**32),
    dp=st.booleans(),
)
def test_norm_preserved_property(lam, seed, dp):
    if dp:
        g = GridSpec(16, 1e-15)
        kernel = dp_kernel(DpParams(1e-15))
        mass = 1e-20
    else:
        g = GRID
        kernel = csl_kernel(CslParams(lam, RC))
        mass = M0
    system = CollapseSystem(Hamiltonian.free(g, mass), kernel)
    dt = 0.05 / system.context.max_rate
    rec = evolve(gaussian_packet(g, 3 * g.dx), system, TrajectoryConfig(dt=dt, n_steps=50, master_seed=seed))
    assert abs(np.linalg.norm(rec.final_state.amplitudes) - 1.0) <= 1e-9
    assert rec.diagnostics.max_post_error <= 1e-9
