"""Command-line driver: ``collapse-sim simulate | predict | exclude | verify``.

Every physical flag is SI with the unit in its name (``--mass-kg``,
``--time-s``). Settings may also come from a JSON file (``--config``) whose
keys are the flag names without dashes (``mass_kg``); flags override the
file. Exit codes: 0 ok, 1 verification mismatch, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import fit_decay_rate
from .errors import (
    CollapseSimError,
    EnsembleFailure,
    InvalidParameter,
    NumericalBlowup,
    RecordValidationError,
    UnknownPreset,
)
from .exclusion import (
    HEATING,
    combine,
    default_rc_grid,
    dp_exclude_from_heating,
    exclude,
    load_records,
    region_plot,
    write_dp_csv,
    write_region_csv,
)
from .master import MasterEquation
from .noise import GridSpec, PeriodicityWarning
from .physics import ATOMIC_MASS_UNIT, PRESETS, CslParams, DpParams, csl_kernel, dp_kernel, preset
from .predictions import HeatingSetup, InterferometricSetup, contrast_reduction, heating_power
from .sde import CollapseSystem, Hamiltonian, TrajectoryConfig, evolve, run_ensemble, write_observables_csv
from .states import gaussian_packet, two_point_superposition

CONFIG_SCHEMA_VERSION = 1
OUTPUT_ENV = "COLLAPSE_SIM_OUTPUT_DIR"
PROVENANCE = "provenance.json"
MAX_ORACLE_RK4_STEPS = 200_000


class ConfigError(CollapseSimError):
    pass


# -- parser -------------------------------------------------------------------


def _model_flags(p, dp=True):
    g = p.add_argument_group("model (preset XOR explicit values)")
    g.add_argument("--preset", choices=sorted(PRESETS) if dp else [k for k, v in PRESETS.items() if v.model == "CSL"])
    g.add_argument("--lambda", dest="lambda_", type=float, metavar="PER_S", help="CSL collapse rate, 1/s")
    g.add_argument("--rc-m", type=float, help="CSL correlation length, m")
    if dp:
        g.add_argument("--r0-m", type=float, help="DP regularization length, m")


def _mass_flags(p):
    p.add_argument("--mass-kg", type=float)
    p.add_argument("--mass-amu", type=float, help="mass in unified atomic mass units")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collapse-sim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run collapse trajectories and an ensemble")
    sim.add_argument("--config", type=Path)
    _model_flags(sim)
    _mass_flags(sim)
    sim.add_argument("--time-s", "--time", dest="time_s", type=float, help="total simulated time, s")
    sim.add_argument("--steps", type=int)
    sim.add_argument("--trajectories", type=int)
    sim.add_argument("--seed", type=int, help="64-bit unsigned master seed")
    sim.add_argument("--grid-points", type=int)
    sim.add_argument("--dx-m", type=float)
    sim.add_argument("--initial", choices=("two-point", "gaussian"))
    sim.add_argument("--separation-m", type=float)
    sim.add_argument("--width-m", type=float)
    sim.add_argument("--hamiltonian", choices=("none", "free"))
    sim.add_argument("--stride", type=int)
    sim.add_argument("--batch-size", type=int)
    sim.add_argument("--workers", type=int)
    sim.add_argument("--output-dir", type=Path)

    pred = sub.add_parser("predict", help="closed-form CSL predictions")
    psub = pred.add_subparsers(dest="quantity", required=True)
    con = psub.add_parser("contrast", help="interference contrast reduction factor")
    con.add_argument("--config", type=Path)
    _model_flags(con, dp=False)
    _mass_flags(con)
    con.add_argument("--time-s", "--time", dest="time_s", type=float)
    con.add_argument("--separation-m", type=float)
    heat = psub.add_parser("heating", help="CSL heating power")
    heat.add_argument("--config", type=Path)
    _model_flags(heat, dp=False)
    _mass_flags(heat)

    exc = sub.add_parser("exclude", help="exclusion regions from experiment records")
    exc.add_argument("--config", type=Path)
    exc.add_argument("--records", type=Path, help="JSON array of experiment records")
    exc.add_argument("--rc-min", type=float)
    exc.add_argument("--rc-max", type=float)
    exc.add_argument("--rc-points", type=int)
    exc.add_argument("--r0-min", type=float)
    exc.add_argument("--r0-max", type=float)
    exc.add_argument("--output-dir", type=Path)

    ver = sub.add_parser("verify", help="check the config hash embedded in output files")
    ver.add_argument("path", type=Path, help="output directory (or its provenance.json)")
    return parser


# -- config resolution ----------------------------------------------------------

_KEYMAP = {"lambda": "lambda_"}


def _merge(args: argparse.Namespace, allowed) -> dict:
    """Flags over config file over nothing; unknown file keys are rejected."""
    merged = {}
    base = Path.cwd()
    if getattr(args, "config", None) is not None:
        path = args.config
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        version = data.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"{path}: unsupported schema_version {version!r}")
        data.pop("command", None)
        for key, value in data.items():
            dest = _KEYMAP.get(key, key)
            if dest not in allowed:
                raise ConfigError(f"{path}: unknown config field {key!r}")
            merged[dest] = value
        base = path.parent
    for dest in allowed:
        value = getattr(args, dest, None)
        if value is not None:
            merged[dest] = value
    for key in ("records", "output_dir"):
        if merged.get(key) is not None:
            p = Path(merged[key])
            merged[key] = p if p.is_absolute() or getattr(args, key, None) is not None else base / p
    return merged


def _number(cfg, key, kind=float, required=True, default=None):
    value = cfg.get(key, default)
    if value is None:
        if required:
            raise ConfigError(f"missing required setting --{key.rstrip('_').replace('_', '-')}")
        return None
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"--{key.rstrip('_').replace('_', '-')}: expected {kind.__name__}, got {value!r}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"--{key.rstrip('_').replace('_', '-')} must be finite")
    return value


def _resolve_model(cfg, allow_dp=True):
    explicit = [k for k in ("lambda_", "rc_m", "r0_m") if cfg.get(k) is not None]
    name = cfg.get("preset")
    if name is not None and explicit:
        raise ConfigError("--preset and explicit model values are mutually exclusive")
    if name is not None:
        try:
            pre = preset(name)
        except UnknownPreset as exc:
            raise ConfigError(str(exc)) from None
        params = pre.params
    elif "r0_m" in explicit:
        if {"lambda_", "rc_m"} & set(explicit):
            raise ConfigError("give either CSL values (--lambda, --rc-m) or --r0-m, not both")
        params = DpParams(_number(cfg, "r0_m"))
    else:
        params = CslParams(_number(cfg, "lambda_"), _number(cfg, "rc_m"))
    if isinstance(params, DpParams) and not allow_dp:
        raise ConfigError("this command needs CSL parameters; DP presets are not accepted")
    if isinstance(params, CslParams):
        model = {"model": "CSL", "lambda_per_s": params.lam, "rC_m": params.rC}
    else:
        model = {"model": "DP", "R0_m": params.R0}
    model["preset"] = name
    return params, model


def _resolve_mass(cfg):
    kg, amu = cfg.get("mass_kg"), cfg.get("mass_amu")
    if kg is not None and amu is not None:
        raise ConfigError("--mass-kg and --mass-amu are mutually exclusive")
    if kg is None and amu is None:
        raise ConfigError("missing required setting --mass-kg (or --mass-amu)")
    mass = _number(cfg, "mass_kg") if kg is not None else _number(cfg, "mass_amu") * ATOMIC_MASS_UNIT
    if not mass > 0:
        raise ConfigError(f"mass must be positive, got {mass!r}")
    return mass


def _output_dir(cfg) -> Path:
    out = cfg.get("output_dir")
    if out is None:
        env = os.environ.get(OUTPUT_ENV)
        if not env:
            raise ConfigError(f"no output directory: pass --output-dir or set {OUTPUT_ENV}")
        out = Path(env)
    out = Path(out).resolve()
    if not out.is_dir():
        raise ConfigError(f"output directory does not exist: {out}")
    return out


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_provenance(out: Path, command: str, resolved: dict, digest: str, files):
    doc = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "tool": "collapse-sim",
        "version": __version__,
        "command": command,
        "config": resolved,
        "config_sha256": digest,
        "files": {name: _sha256_file(out / name) for name in files},
    }
    (out / PROVENANCE).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- commands -------------------------------------------------------------------

SIM_KEYS = {
    "preset", "lambda_", "rc_m", "r0_m", "mass_kg", "mass_amu", "time_s", "steps", "trajectories", "seed",
    "grid_points", "dx_m", "initial", "separation_m", "width_m", "hamiltonian", "stride", "batch_size",
    "workers", "output_dir",
}


def cmd_simulate(args) -> int:
    cfg = _merge(args, SIM_KEYS)
    params, model = _resolve_model(cfg)
    mass = _resolve_mass(cfg)
    out = _output_dir(cfg)
    time_s = _number(cfg, "time_s")
    steps = _number(cfg, "steps", int, default=1000)
    n_traj = _number(cfg, "trajectories", int, default=100)
    seed = _number(cfg, "seed", int, default=0)
    n = _number(cfg, "grid_points", int, default=64)
    length_scale = params.rC if isinstance(params, CslParams) else params.R0
    dx = _number(cfg, "dx_m", default=length_scale / 4 if isinstance(params, CslParams) else length_scale)
    stride = _number(cfg, "stride", int, default=max(1, steps // 100))
    batch = _number(cfg, "batch_size", int, default=256)
    workers = _number(cfg, "workers", int, default=1)
    initial_kind = cfg.get("initial") or "two-point"
    ham_kind = cfg.get("hamiltonian") or "none"
    if initial_kind not in ("two-point", "gaussian"):
        raise ConfigError(f"--initial must be two-point or gaussian, got {initial_kind!r}")
    if ham_kind not in ("none", "free"):
        raise ConfigError(f"--hamiltonian must be none or free, got {ham_kind!r}")
    if not time_s > 0:
        raise ConfigError(f"--time-s must be positive, got {time_s!r}")
    if steps < 1:
        raise ConfigError(f"--steps must be >= 1, got {steps}")
    if n_traj < 1:
        raise ConfigError(f"--trajectories must be >= 1, got {n_traj}")
    if not 0 <= seed < 2**64:
        raise ConfigError(f"--seed must be a 64-bit unsigned integer, got {seed}")

    grid = GridSpec(n, dx)
    if initial_kind == "two-point":
        sep = _number(cfg, "separation_m", required=False)
        cells = n // 2 if sep is None else int(round(sep / dx))
        if not 1 <= cells <= n // 2:
            raise ConfigError(f"--separation-m must lie between dx and half the grid length ({grid.length / 2:g} m)")
        i = (n - cells) // 2
        psi0 = two_point_superposition(grid, i, i + cells)
        init = {"initial": "two-point", "indices": [i, i + cells], "separation_m": cells * dx}
    else:
        width = _number(cfg, "width_m", default=4 * dx)
        psi0 = gaussian_packet(grid, width)
        init = {"initial": "gaussian", "width_m": width}

    kernel = csl_kernel(params) if isinstance(params, CslParams) else dp_kernel(params)
    ham = Hamiltonian.free(grid, mass) if ham_kind == "free" else Hamiltonian.zero(grid, mass)
    system = CollapseSystem(ham, kernel)
    config = TrajectoryConfig(
        dt=time_s / steps, n_steps=steps, master_seed=seed, n_trajectories=n_traj, stride=stride,
        batch_size=batch, workers=workers,
    )
    resolved = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "command": "simulate",
        "model": model,
        "mass_kg": mass,
        "time_s": time_s,
        "steps": steps,
        "dt_s": config.dt,
        "trajectories": n_traj,
        "seed": seed,
        "grid": {"n_points": n, "dx_m": dx},
        "state": init,
        "hamiltonian": ham_kind,
        "stride": stride,
        "batch_size": batch,
    }
    digest = config_hash(resolved)
    tag = f"config_sha256={digest}"

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", PeriodicityWarning)
        record = evolve(psi0, system, config, trajectory_index=0)
        stats = run_ensemble(psi0, system, config)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    write_observables_csv(out / "trajectory.csv", record.times, record.observables, tag)
    write_observables_csv(out / "ensemble.csv", stats.times, stats.observables, tag)
    doc = stats.as_dict()
    doc["config_sha256"] = digest
    doc["oracle"] = _oracle_block(system, psi0, stats)
    if stats.n_trajectories >= 2 * batch and initial_kind == "two-point":
        rate, se = fit_decay_rate(stats)
        doc["fitted_decay_rate"] = {"value": rate, "stderr": se, "units": "1/s"}
    (out / "stats.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    _write_provenance(out, "simulate", resolved, digest, ["trajectory.csv", "ensemble.csv", "stats.json"])
    print(json.dumps({"output_dir": str(out), "config_sha256": digest}))
    return 0


def _oracle_block(system, psi0, stats):
    from .master import MAX_ORACLE_POINTS

    if system.grid.n_points > MAX_ORACLE_POINTS:
        return {"available": False, "reason": f"grid larger than {MAX_ORACLE_POINTS} points"}
    me = MasterEquation(system.hamiltonian, system.kernel)
    rho0 = psi0.density()
    t = stats.times - stats.times[0]
    if system.hamiltonian.is_zero:
        states = [me.exact_dephasing(rho0, tk) for tk in t]
        method = "exact-dephasing"
    else:
        dt = me.auto_dt(rho0.matrix, t[-1] if t[-1] > 0 else 1.0)
        if t[-1] / dt > MAX_ORACLE_RK4_STEPS:
            return {"available": False, "reason": "RK4 oracle would need too many steps"}
        states = me.integrate(rho0, t[-1], n_samples=len(t)).states
        method = "rk4"
    moments = me.moments(states, stats.coherence_pair)
    return {"available": True, "method": method, "observables": {k: v.tolist() for k, v in moments.items()}}


def cmd_predict(args) -> int:
    if args.quantity == "contrast":
        cfg = _merge(args, {"preset", "lambda_", "rc_m", "mass_kg", "mass_amu", "time_s", "separation_m"})
    else:
        cfg = _merge(args, {"preset", "lambda_", "rc_m", "mass_kg", "mass_amu"})
    params, model = _resolve_model(cfg, allow_dp=False)
    mass = _resolve_mass(cfg)
    inputs = {"lambda_per_s": params.lam, "rC_m": params.rC, "mass_kg": mass, "preset": model["preset"]}
    if args.quantity == "contrast":
        setup = InterferometricSetup(mass, _number(cfg, "time_s"), _number(cfg, "separation_m"))
        value = contrast_reduction(params, setup)
        inputs.update(time_s=setup.flight_time, separation_m=setup.separation)
        units = "dimensionless"
    else:
        value = heating_power(params, HeatingSetup(mass))
        units = "W"
    print(json.dumps({"value": value, "units": units, "inputs": inputs}, sort_keys=True))
    return 0


EXC_KEYS = {"records", "rc_min", "rc_max", "rc_points", "r0_min", "r0_max", "output_dir"}


def cmd_exclude(args) -> int:
    cfg = _merge(args, EXC_KEYS)
    if cfg.get("records") is None:
        raise ConfigError("missing required setting --records")
    path = Path(cfg["records"]).resolve()
    if not path.is_file():
        raise ConfigError(f"records file not found: {path}")
    records = load_records(path)
    out = _output_dir(cfg)
    rc_min = _number(cfg, "rc_min", default=1e-9)
    rc_max = _number(cfg, "rc_max", default=1e-3)
    rc_points = _number(cfg, "rc_points", int, default=200)
    r0_min = _number(cfg, "r0_min", default=1e-16)
    r0_max = _number(cfg, "r0_max", default=1e-5)
    if not (0 < rc_min < rc_max) or rc_points < 2:
        raise ConfigError("rC grid needs 0 < --rc-min < --rc-max and --rc-points >= 2")
    if not 0 < r0_min < r0_max:
        raise ConfigError("R0 grid needs 0 < --r0-min < --r0-max")
    resolved = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "command": "exclude",
        "records_sha256": _sha256_file(path),
        "rc_grid": {"min_m": rc_min, "max_m": rc_max, "points": rc_points},
        "r0_grid": {"min_m": r0_min, "max_m": r0_max},
    }
    digest = config_hash(resolved)
    tag = f"config_sha256={digest}"

    grid = default_rc_grid(rc_points, rc_min, rc_max)
    regions = combine([exclude(r, grid) for r in records], grid)
    dp = [dp_exclude_from_heating(r, np.array([r0_min, r0_max])) for r in records if r.kind == HEATING]
    write_region_csv(out / "exclusion.csv", regions, tag)
    write_dp_csv(out / "dp_bounds.csv", dp, tag)
    (out / "exclusion.svg").write_text(region_plot(regions, tag))
    _write_provenance(out, "exclude", resolved, digest, ["exclusion.csv", "dp_bounds.csv", "exclusion.svg"])
    print(json.dumps({"output_dir": str(out), "config_sha256": digest, "records": len(records)}))
    return 0


def cmd_verify(args) -> int:
    path = args.path
    prov_path = path / PROVENANCE if path.is_dir() else path
    try:
        prov = json.loads(prov_path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no provenance file at {prov_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{prov_path}: malformed JSON at line {exc.lineno} column {exc.colno}") from None
    expected = config_hash(prov["config"])
    report = {"config_sha256": expected, "config_hash_ok": expected == prov.get("config_sha256"), "files": {}}
    ok = report["config_hash_ok"]
    for name, digest in sorted(prov.get("files", {}).items()):
        f = prov_path.parent / name
        if not f.is_file():
            report["files"][name] = "missing"
            ok = False
            continue
        content_ok = _sha256_file(f) == digest
        embeds = expected in f.read_text(errors="replace")
        report["files"][name] = "ok" if content_ok and embeds else ("modified" if not content_ok else "hash-not-embedded")
        ok = ok and content_ok and embeds
    report["ok"] = ok
    print(json.dumps(report, sort_keys=True))
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": cmd_simulate, "predict": cmd_predict, "exclude": cmd_exclude, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except (NumericalBlowup, EnsembleFailure) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, InvalidParameter, RecordValidationError, UnknownPreset, CollapseSimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
