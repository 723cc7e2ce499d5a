import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapse_sim.errors import GridMismatch, InvalidParameter, OutOfGridRange, RecordValidationError, WrongRecordKind
from collapse_sim.exclusion import (
    CONTRAST,
    HEATING,
    ExclusionRegion,
    ExperimentRecord,
    combine,
    default_rc_grid,
    dp_exclude_from_heating,
    dp_heating_power,
    exclude,
    exclude_from_contrast,
    exclude_from_heating,
    is_excluded,
    load_records,
    parse_records,
    region_plot,
    synthetic_records_path,
    write_dp_csv,
    write_region_csv,
)
from collapse_sim.physics import CslParams, preset
from collapse_sim.predictions import HeatingSetup, InterferometricSetup, contrast_reduction, heating_power

from conftest import M0

GRID = default_rc_grid()
HEAT = ExperimentRecord(HEATING, 1e-14, "heat", power_ceiling=1e-25)
FRINGE = ExperimentRecord(CONTRAST, 1e5 * M0, "fringe", flight_time=0.01, separation=1e-6, contrast_floor=0.9)


def test_default_grid():
    assert GRID.size == 200
    assert GRID[0] == pytest.approx(1e-9)
    assert GRID[-1] == pytest.approx(1e-3)


def test_heating_bound_reference_value():
    # mpmath: (4/3) P m0^2 rC^2 / (hbar^2 m) at rC = 1e-7
    r = exclude_from_heating(HEAT, [1e-7, 1e-6])
    assert r.lambda_boundary[0] == pytest.approx(3.3541461710087784e-11, rel=1e-14)
    assert r.lambda_boundary[1] == pytest.approx(100 * r.lambda_boundary[0], rel=1e-14)


def test_contrast_bound_reference_value():
    # mpmath: -ln(0.9) / (1e10 * 0.01 * bracket(u = 5))
    r = exclude_from_contrast(FRINGE, [1e-7, 1e-6])
    assert r.lambda_boundary[0] == pytest.approx(1.2805824938385461e-9, rel=1e-13)


def test_heating_round_trip():
    r = exclude_from_heating(HEAT, GRID)
    for rc, lam in zip(GRID, r.lambda_boundary):
        assert heating_power(CslParams(lam, rc), HeatingSetup(HEAT.mass)) == pytest.approx(1e-25, rel=1e-10)


def test_contrast_round_trip():
    r = exclude_from_contrast(FRINGE, GRID)
    setup = InterferometricSetup(FRINGE.mass, FRINGE.flight_time, FRINGE.separation)
    for rc, lam in zip(GRID, r.lambda_boundary):
        assert contrast_reduction(CslParams(lam, rc), setup) == pytest.approx(0.9, abs=1e-10)


def test_no_information_records_exclude_nothing():
    blind = ExperimentRecord(CONTRAST, 1e-20, "blind", flight_time=1.0, separation=1e-6, contrast_floor=0.0)
    open_ceiling = ExperimentRecord(HEATING, 1e-20, "open", power_ceiling=math.inf)
    assert np.all(np.isinf(exclude(blind, GRID).lambda_boundary))
    assert np.all(np.isinf(exclude(open_ceiling, GRID).lambda_boundary))


def test_wrong_kind():
    with pytest.raises(WrongRecordKind):
        exclude_from_heating(FRINGE, GRID)
    with pytest.raises(WrongRecordKind):
        exclude_from_contrast(HEAT, GRID)


@pytest.mark.parametrize(
    "kw",
    [
        dict(kind="other", mass=1.0, label="x", power_ceiling=1.0),
        dict(kind=HEATING, mass=0.0, label="x", power_ceiling=1.0),
        dict(kind=HEATING, mass=1.0, label="x", power_ceiling=0.0),
        dict(kind=CONTRAST, mass=1.0, label="x", flight_time=1.0, separation=1.0, contrast_floor=1.0),
        dict(kind=CONTRAST, mass=1.0, label="x", flight_time=0.0, separation=1.0, contrast_floor=0.5),
    ],
)
def test_record_validation(kw):
    with pytest.raises(InvalidParameter):
        ExperimentRecord(**kw)


def test_bad_grid():
    with pytest.raises(InvalidParameter):
        exclude(HEAT, [1e-7, 1e-8])


def test_crossing_regions_switch_source():
    # heating binds at small rC, the contrast record at large rC
    heat = ExperimentRecord(HEATING, 1e-14, "heat", power_ceiling=1e-22)
    rs = combine([exclude(heat, GRID), exclude(FRINGE, GRID)])
    src = rs.binding_source
    assert src[0] == "heat" and src[-1] == "fringe"
    switches = sum(1 for a, b in zip(src, src[1:]) if a != b)
    assert switches == 1
    np.testing.assert_array_equal(
        rs.combined_boundary, np.minimum(exclude(heat, GRID).lambda_boundary, exclude(FRINGE, GRID).lambda_boundary)
    )


def test_ties_keep_first_region():
    a = ExclusionRegion(GRID[:3], np.ones(3), "a")
    b = ExclusionRegion(GRID[:3], np.ones(3), "b")
    assert combine([a, b]).binding_source == ("a", "a", "a")


def test_combine_grid_mismatch():
    a = exclude(HEAT, GRID)
    b = exclude(HEAT, default_rc_grid(100))
    with pytest.raises(GridMismatch):
        combine([a, b])


def test_combine_empty_with_grid():
    rs = combine([], GRID)
    assert np.all(np.isinf(rs.combined_boundary))
    assert is_excluded(CslParams(1.0, 1e-7), rs) == (False, None)


@settings(max_examples=60, deadline=None)
@given(
    vals=st.lists(
        st.lists(st.floats(1e-30, 1e10), min_size=5, max_size=5),
        min_size=3,
        max_size=3,
    )
)
def test_combine_is_associative(vals):
    rc = GRID[:5]
    a, b, c = (ExclusionRegion(rc, np.array(v), f"r{i}") for i, v in enumerate(vals))
    flat = combine([a, b, c])
    ab = combine([a, b])
    nested = combine([ExclusionRegion(rc, ab.combined_boundary, "ab"), c])
    np.testing.assert_array_equal(flat.combined_boundary, nested.combined_boundary)
    left = combine([b, c])
    nested2 = combine([a, ExclusionRegion(rc, left.combined_boundary, "bc")])
    np.testing.assert_array_equal(flat.combined_boundary, nested2.combined_boundary)


def test_is_excluded_strict_and_interpolated():
    rc = np.array([1e-8, 1e-7, 1e-6])
    rs = combine([ExclusionRegion(rc, np.array([1e-12, 1e-10, 1e-8]), "s")])
    assert is_excluded(CslParams(1e-10, 1e-7), rs) == (False, None)
    assert is_excluded(CslParams(1.0001e-10, 1e-7), rs) == (True, "s")
    # midway in log rC the log-log boundary is 1e-9
    mid = math.sqrt(1e-7 * 1e-6)
    assert is_excluded(CslParams(0.99e-9, mid), rs)[0] is False
    assert is_excluded(CslParams(1.01e-9, mid), rs)[0] is True
    with pytest.raises(OutOfGridRange):
        is_excluded(CslParams(1.0, 1e-5), rs)


def test_infinite_neighbor_blocks_interpolation():
    rc = np.array([1e-8, 1e-7])
    rs = combine([ExclusionRegion(rc, np.array([1e-12, np.inf]), "s")])
    assert is_excluded(CslParams(1e3, 5e-8), rs) == (False, None)


def test_shipped_records_do_not_exclude_grw():
    records = load_records(synthetic_records_path())
    assert len(records) == 3
    rs = combine([exclude(r, GRID) for r in records])
    assert is_excluded(preset("GRW").params, rs) == (False, None)


@settings(max_examples=40, deadline=None)
@given(factor=st.floats(1.0, 1e6), lam=st.floats(1e-20, 1.0), log_rc=st.floats(-9, -3))
def test_strengthening_only_grows_region(factor, lam, log_rc):
    point = CslParams(lam, 10**log_rc)
    for rec in (HEAT, FRINGE):
        weak = combine([exclude(rec, GRID)])
        strong = combine([exclude(rec.strengthened(factor), GRID)])
        assert np.all(strong.combined_boundary <= weak.combined_boundary * (1 + 1e-12))
        if is_excluded(point, weak)[0]:
            assert is_excluded(point, strong)[0]


def test_dp_heating_reference_value():
    # mpmath: hbar G m / (4 sqrt(pi) R0^3) for R0 = 1e-15 m, m = 1 kg
    assert dp_heating_power(1e-15, 1.0) == pytest.approx(0.9927661409360866, rel=1e-13)


def test_dp_bound_meets_ceiling():
    r0_grid = np.logspace(-16, -6, 50)
    rec = ExperimentRecord(HEATING, 1e-14, "heat", power_ceiling=1e-20)
    b = dp_exclude_from_heating(rec, r0_grid)
    assert not b.empty and not b.open_above
    assert dp_heating_power(b.r0_star, rec.mass) == pytest.approx(1e-20, rel=1e-5)
    assert b.excludes(0.5 * b.r0_star) and not b.excludes(2 * b.r0_star)


def test_dp_bound_empty_and_open():
    r0_grid = np.logspace(-16, -6, 50)
    weak = dp_exclude_from_heating(ExperimentRecord(HEATING, 1e-20, "w", power_ceiling=1.0), r0_grid)
    assert weak.empty and not weak.excludes(1e-15)
    strong = dp_exclude_from_heating(ExperimentRecord(HEATING, 1.0, "s", power_ceiling=1e-40), r0_grid)
    assert strong.open_above and strong.r0_star == pytest.approx(1e-6)
    inf = dp_exclude_from_heating(ExperimentRecord(HEATING, 1.0, "i", power_ceiling=math.inf), r0_grid)
    assert inf.empty


def _write(tmp_path, text):
    p = tmp_path / "records.json"
    p.write_text(text)
    return p


def test_malformed_json_reports_location(tmp_path):
    p = _write(tmp_path, '[\n  {"kind": "heating-bound",\n   "mass_kg": 1e-14 \n')
    with pytest.raises(RecordValidationError, match="line 4 column 1"):
        load_records(p)


def test_schema_error_has_pointer():
    data = [
        {"kind": HEATING, "label": "a", "mass_kg": 1.0, "power_ceiling_w": 1.0},
        {"kind": HEATING, "label": "b", "mass_kg": -1.0, "power_ceiling_w": 1.0},
    ]
    with pytest.raises(RecordValidationError) as info:
        parse_records(data)
    assert info.value.path == "/1/mass_kg"


def test_missing_field_pointer():
    with pytest.raises(RecordValidationError) as info:
        parse_records([{"kind": CONTRAST, "label": "c", "mass_kg": 1.0, "flight_time_s": 1.0, "separation_m": 1.0}])
    assert info.value.path == "/0/contrast_floor"


def test_inf_ceiling_and_empty_list():
    recs = parse_records([{"kind": HEATING, "label": "x", "mass_kg": 1.0, "power_ceiling_w": "inf"}])
    assert math.isinf(recs[0].power_ceiling)
    assert parse_records([]) == []


def test_csv_outputs_are_byte_identical(tmp_path):
    rs = combine([exclude(HEAT, GRID), exclude(FRINGE, GRID)])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_region_csv(a, rs, comment="x")
    write_region_csv(b, combine([exclude(HEAT, GRID), exclude(FRINGE, GRID)]), comment="x")
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[1] == "rC,lambda_star,source"
    assert len(lines) == 2 + GRID.size


def test_dp_csv(tmp_path):
    p = tmp_path / "dp.csv"
    write_dp_csv(p, [dp_exclude_from_heating(HEAT, np.logspace(-16, -6, 20))])
    rows = p.read_text().splitlines()
    assert rows[0] == "source,R0_star,open_above"
    assert rows[1].startswith("heat,")


def test_shipped_records_file_is_valid_json():
    with open(synthetic_records_path()) as fh:
        assert isinstance(json.load(fh), list)


def test_region_plot_is_deterministic():
    rs = combine([exclude(HEAT, GRID), exclude(FRINGE, GRID)])
    svg = region_plot(rs, "c")
    assert svg == region_plot(rs, "c")
    assert svg.count("<polyline") == 3
    assert "GRW" in svg and "<!-- c -->" in svg
