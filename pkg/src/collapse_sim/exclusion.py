"""Excluded regions of collapse-model parameter space from experimental bounds.

A heating bound caps the CSL heating power; a contrast bound puts a floor
under the surviving interference contrast. Inverting the prediction
formulas gives a boundary ``lambda*(rC)``; parameters with
``lambda > lambda*`` are excluded. ``inf`` means nothing is excluded at
that ``rC``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import jsonschema
import numpy as np
from scipy.optimize import bisect

from .errors import DimensionMismatch, GridMismatch, InvalidParameter, OutOfGridRange, RecordValidationError, WrongRecordKind
from .master import heating_rate_1d
from .physics import CODATA_2018, PRESETS, CslParams, DpParams, PhysicalConstants, dp_kernel
from .predictions import contrast_bracket
from .svg import LogLogPlot, Marker, Series

__all__ = [
    "CONTRAST",
    "HEATING",
    "ExperimentRecord",
    "ExclusionRegion",
    "RegionSet",
    "DpExclusion",
    "default_rc_grid",
    "exclude_from_heating",
    "exclude_from_contrast",
    "exclude",
    "combine",
    "is_excluded",
    "dp_heating_power",
    "dp_exclude_from_heating",
    "parse_records",
    "load_records",
    "synthetic_records_path",
    "write_region_csv",
    "write_dp_csv",
    "region_plot",
    "RECORD_SCHEMA",
]

CONTRAST = "interferometric-contrast"
HEATING = "heating-bound"


def default_rc_grid(n: int = 200, lo: float = 1e-9, hi: float = 1e-3) -> np.ndarray:
    if n < 2 or not (0 < lo < hi):
        raise InvalidParameter("rC grid needs n >= 2 and 0 < lo < hi")
    return np.logspace(math.log10(lo), math.log10(hi), n)


@dataclass(frozen=True)
class ExperimentRecord:
    """One experimental bound.

    ``contrast_floor = 0`` and ``power_ceiling = inf`` are accepted as
    "no information" and exclude nothing.
    """

    kind: str
    mass: float
    label: str
    flight_time: Optional[float] = None
    separation: Optional[float] = None
    contrast_floor: Optional[float] = None
    power_ceiling: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (CONTRAST, HEATING):
            raise InvalidParameter(f"unknown record kind {self.kind!r}")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise InvalidParameter(f"mass must be positive, got {self.mass!r}")
        if self.kind == CONTRAST:
            for name in ("flight_time", "separation"):
                v = getattr(self, name)
                if v is None or not (v > 0 and math.isfinite(v)):
                    raise InvalidParameter(f"{name} must be positive for {CONTRAST} records, got {v!r}")
            c = self.contrast_floor
            if c is None or not (0 <= c < 1):
                raise InvalidParameter(f"contrast_floor must lie in [0, 1), got {c!r}")
        else:
            p = self.power_ceiling
            if p is None or not p > 0:
                raise InvalidParameter(f"power_ceiling must be positive, got {p!r}")

    def strengthened(self, factor: float) -> "ExperimentRecord":
        """Tighter copy: ceiling divided by ``factor``, or floor raised toward 1."""
        if self.kind == HEATING:
            return replace(self, power_ceiling=self.power_ceiling / factor)
        return replace(self, contrast_floor=1.0 - (1.0 - self.contrast_floor) / factor)


@dataclass(frozen=True)
class ExclusionRegion:
    rC_samples: np.ndarray
    lambda_boundary: np.ndarray
    source: str

    def __post_init__(self):
        rc = np.asarray(self.rC_samples, dtype=float)
        lb = np.asarray(self.lambda_boundary, dtype=float)
        if rc.shape != lb.shape or rc.ndim != 1:
            raise DimensionMismatch(f"rC_samples {rc.shape} and lambda_boundary {lb.shape} differ")
        if np.any(~(lb > 0)):
            raise InvalidParameter("boundary values must be positive or +inf")
        object.__setattr__(self, "rC_samples", rc)
        object.__setattr__(self, "lambda_boundary", lb)


def _grid(rc_grid) -> np.ndarray:
    rc = np.asarray(rc_grid, dtype=float)
    if rc.ndim != 1 or rc.size < 2 or np.any(rc <= 0) or np.any(np.diff(rc) <= 0):
        raise InvalidParameter("rC grid must be a strictly increasing vector of positive values")
    return rc


def exclude_from_heating(
    rec: ExperimentRecord, rc_grid, constants: PhysicalConstants = CODATA_2018
) -> ExclusionRegion:
    """Invert the heating power: ``lambda* = (4/3) P m0^2 rC^2 / (hbar^2 m)``."""
    if rec.kind != HEATING:
        raise WrongRecordKind(f"record {rec.label!r} is {rec.kind}, expected {HEATING}")
    rc = _grid(rc_grid)
    with np.errstate(over="ignore"):
        bound = (4.0 / 3.0) * rec.power_ceiling * constants.m0**2 * rc**2 / (constants.hbar**2 * rec.mass)
    return ExclusionRegion(rc, bound, rec.label)


def exclude_from_contrast(
    rec: ExperimentRecord, rc_grid, constants: PhysicalConstants = CODATA_2018
) -> ExclusionRegion:
    """Invert the contrast reduction: ``lambda* = -ln(floor) / ((m/m0)^2 t bracket)``."""
    if rec.kind != CONTRAST:
        raise WrongRecordKind(f"record {rec.label!r} is {rec.kind}, expected {CONTRAST}")
    rc = _grid(rc_grid)
    denom = (rec.mass / constants.m0) ** 2 * rec.flight_time * contrast_bracket(rec.separation, rc)
    if rec.contrast_floor == 0:
        bound = np.full_like(rc, np.inf)
    else:
        with np.errstate(divide="ignore"):
            bound = np.where(denom > 0, -math.log(rec.contrast_floor) / np.where(denom > 0, denom, 1.0), np.inf)
    return ExclusionRegion(rc, bound, rec.label)


def exclude(rec: ExperimentRecord, rc_grid, constants: PhysicalConstants = CODATA_2018) -> ExclusionRegion:
    fn = exclude_from_heating if rec.kind == HEATING else exclude_from_contrast
    return fn(rec, rc_grid, constants)


@dataclass(frozen=True)
class RegionSet:
    rC_samples: np.ndarray
    regions: Tuple[ExclusionRegion, ...]
    combined_boundary: np.ndarray
    binding_source: Tuple[Optional[str], ...]


def combine(regions: Sequence[ExclusionRegion], rc_grid=None) -> RegionSet:
    """Pointwise minimum of boundaries; ties keep the earlier region."""
    regions = tuple(regions)
    if not regions and rc_grid is None:
        raise InvalidParameter("combine needs at least one region or an explicit rC grid")
    rc = _grid(rc_grid) if rc_grid is not None else regions[0].rC_samples
    for r in regions:
        if r.rC_samples.shape != rc.shape or not np.array_equal(r.rC_samples, rc):
            raise GridMismatch(f"region {r.source!r} uses a different rC grid")
    best = np.full(rc.shape, np.inf)
    sources: List[Optional[str]] = [None] * rc.size
    for r in regions:
        tighter = r.lambda_boundary < best
        best = np.where(tighter, r.lambda_boundary, best)
        for i in np.flatnonzero(tighter):
            sources[i] = r.source
    return RegionSet(rc, regions, best, tuple(sources))


def is_excluded(point: CslParams, regions: RegionSet) -> Tuple[bool, Optional[str]]:
    """Strict test ``lambda > boundary(rC)``; boundary interpolated in log-log.

    Between samples where either neighbor is ``inf`` the boundary is ``inf``.
    """
    rc = regions.rC_samples
    if not (rc[0] <= point.rC <= rc[-1]):
        raise OutOfGridRange(f"rC = {point.rC:g} outside the grid [{rc[0]:g}, {rc[-1]:g}]")
    if not regions.regions:
        return False, None
    j = int(np.searchsorted(rc, point.rC, side="left"))
    if rc[j] == point.rC:
        bound, src = regions.combined_boundary[j], regions.binding_source[j]
    else:
        lo, hi = regions.combined_boundary[j - 1], regions.combined_boundary[j]
        if not (math.isfinite(lo) and math.isfinite(hi)):
            return False, None
        w = (math.log(point.rC) - math.log(rc[j - 1])) / (math.log(rc[j]) - math.log(rc[j - 1]))
        bound = math.exp((1 - w) * math.log(lo) + w * math.log(hi))
        src = regions.binding_source[j - 1] if w < 0.5 else regions.binding_source[j]
    if point.lam > bound:
        return True, src
    return False, None


def dp_heating_power(R0: float, mass: float, constants: PhysicalConstants = CODATA_2018) -> float:
    """DP heating along three axes: three times the 1-D curvature rate."""
    return 3.0 * heating_rate_1d(dp_kernel(DpParams(R0), constants), mass, constants.hbar)


@dataclass(frozen=True)
class DpExclusion:
    """Excluded interval ``0 < R0 < r0_star``; ``r0_star = 0`` means empty.

    ``open_above`` is set when even the largest grid value is excluded, so
    ``r0_star`` is only a lower estimate of the true bound.
    """

    r0_star: float
    source: str
    open_above: bool = False

    @property
    def empty(self) -> bool:
        return self.r0_star == 0.0

    def excludes(self, R0: float) -> bool:
        return 0 < R0 < self.r0_star


def dp_exclude_from_heating(
    rec: ExperimentRecord, r0_grid, constants: PhysicalConstants = CODATA_2018, rtol: float = 1e-6
) -> DpExclusion:
    """Bisect (in log R0) for the R0 where predicted DP heating meets the ceiling."""
    if rec.kind != HEATING:
        raise WrongRecordKind(f"record {rec.label!r} is {rec.kind}, expected {HEATING}")
    r0 = _grid(r0_grid)
    lo, hi = float(r0[0]), float(r0[-1])
    ceiling = rec.power_ceiling

    def excess(log_r0):
        return math.log(dp_heating_power(math.exp(log_r0), rec.mass, constants)) - math.log(ceiling)

    if math.isinf(ceiling) or excess(math.log(lo)) <= 0:
        return DpExclusion(0.0, rec.label)
    if excess(math.log(hi)) > 0:
        return DpExclusion(hi, rec.label, open_above=True)
    # an absolute tolerance in log R0 is a relative tolerance in R0
    root = bisect(excess, math.log(lo), math.log(hi), xtol=rtol, maxiter=500)
    return DpExclusion(math.exp(root), rec.label)


# Experiment-record files ---------------------------------------------------

_POS = {"type": "number", "exclusiveMinimum": 0}
RECORD_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["kind", "mass_kg", "label"],
        "properties": {
            "kind": {"enum": [CONTRAST, HEATING]},
            "mass_kg": _POS,
            "label": {"type": "string", "minLength": 1},
            "flight_time_s": _POS,
            "separation_m": _POS,
            "contrast_floor": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "power_ceiling_w": {"anyOf": [_POS, {"const": "inf"}]},
        },
        "additionalProperties": False,
        "allOf": [
            {
                "if": {"properties": {"kind": {"const": CONTRAST}}},
                "then": {"required": ["flight_time_s", "separation_m", "contrast_floor"]},
            },
            {
                "if": {"properties": {"kind": {"const": HEATING}}},
                "then": {"required": ["power_ceiling_w"]},
            },
        ],
    },
}


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def parse_records(data) -> List[ExperimentRecord]:
    """Validate decoded JSON and build records; errors carry a JSON pointer."""
    validator = jsonschema.Draft202012Validator(RECORD_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        if err.validator == "required":
            missing = err.message.split("'")[1]
            path = path + [missing]
        raise RecordValidationError(err.message, _pointer(path))
    records = []
    for obj in data:
        ceiling = obj.get("power_ceiling_w")
        records.append(
            ExperimentRecord(
                kind=obj["kind"],
                mass=float(obj["mass_kg"]),
                label=obj["label"],
                flight_time=obj.get("flight_time_s"),
                separation=obj.get("separation_m"),
                contrast_floor=obj.get("contrast_floor"),
                power_ceiling=math.inf if ceiling == "inf" else ceiling,
            )
        )
    return records


def load_records(path) -> List[ExperimentRecord]:
    """Read a JSON array of records. Malformed JSON raises RecordValidationError
    with the line and column of the parse failure."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordValidationError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_records(data)


def synthetic_records_path() -> str:
    """Bundled illustrative records (synthetic, not published data)."""
    from importlib.resources import files

    return str(files("collapse_sim") / "data" / "synthetic_records.json")


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def write_region_csv(path, regions: RegionSet, comment: Optional[str] = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("rC", "lambda_star", "source"))
        for rc, lam, src in zip(regions.rC_samples, regions.combined_boundary, regions.binding_source):
            w.writerow((_fmt(rc), _fmt(lam), src or ""))


def write_dp_csv(path, bounds: Sequence[DpExclusion], comment: Optional[str] = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("source", "R0_star", "open_above"))
        for b in bounds:
            w.writerow((b.source, _fmt(b.r0_star), str(b.open_above).lower()))


def region_plot(regions: RegionSet, comment: Optional[str] = None) -> str:
    """SVG of every record boundary, the combined region and the CSL presets."""
    plot = LogLogPlot(xlabel="rC (m)", ylabel="lambda (1/s)", title="Excluded CSL parameters", comment=comment)
    for r in regions.regions:
        plot.series.append(Series(r.rC_samples, r.lambda_boundary, r.source, width=1.0))
    if regions.regions:
        plot.series.append(
            Series(regions.rC_samples, regions.combined_boundary, "combined", color="#000000", width=2.0, fill_above=True)
        )
    for name, pre in PRESETS.items():
        if pre.model == "CSL":
            plot.markers.append(Marker(pre.params.rC, pre.params.lam, name, pre.uncertainty_decades))
    return plot.render()
