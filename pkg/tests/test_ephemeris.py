import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtgnss.ephemeris import (
    EphemerisTable,
    SatelliteEpoch,
    SlotIndex,
    elevation_azimuth,
    load_ephemeris,
    satellites_at,
    slot_of_epoch,
)
from dtgnss.exceptions import CoverageError, ValidationError
from dtgnss.geo import EcefPoint, GeodeticPoint, enu_to_ecef

from oracles import enu_by_rotations

ORIGIN = GeodeticPoint(22.3, 114.18, 10.0)
R = 26_560_000.0


def write_csv(tmp_path, rows, header="epoch_s,sat_id,x_m,y_m,z_m"):
    p = tmp_path / "eph.csv"
    p.write_text(header + "\n" + "\n".join(rows) + "\n")
    return p


def rows_2x3():
    return [f"{t},G{k:02d},{R * (0.6 + 0.1 * k)},{R * 0.8},{R * 0.0}" for t in (0, 30, 60) for k in (2, 1)]


def test_load_two_sats_three_epochs(tmp_path):
    table = load_ephemeris(write_csv(tmp_path, rows_2x3()))
    assert len(table) == 6
    assert [(r.epoch, r.sat_id) for r in table.records[:2]] == [(0, "G01"), (0, "G02")]
    assert table.step == 30.0 and table.coverage == (0.0, 60.0)


def test_duplicate_row_rejected(tmp_path):
    with pytest.raises(ValidationError, match="duplicate"):
        load_ephemeris(write_csv(tmp_path, rows_2x3() + [rows_2x3()[0]]))


def test_sanity_band_names_satellite(tmp_path):
    with pytest.raises(ValidationError, match="G07"):
        load_ephemeris(write_csv(tmp_path, ["0,G07,1e6,0,0"]))


def test_parse_error_has_row_number(tmp_path):
    with pytest.raises(ValidationError, match="row 3"):
        load_ephemeris(write_csv(tmp_path, [rows_2x3()[0], "30,G01,abc,0,0"]))
    with pytest.raises(ValidationError, match="header"):
        load_ephemeris(write_csv(tmp_path, rows_2x3(), header="t,id,x,y,z"))


def test_satellites_at_nearest_epoch(tmp_path):
    table = load_ephemeris(write_csv(tmp_path, rows_2x3()))
    assert {r.epoch for r in satellites_at(table, 30)} == {30.0}
    assert {r.epoch for r in satellites_at(table, 40)} == {30.0}
    assert {r.epoch for r in satellites_at(table, 50)} == {60.0}
    assert {r.epoch for r in satellites_at(table, 75)} == {60.0}
    with pytest.raises(CoverageError):
        satellites_at(table, 76)
    with pytest.raises(CoverageError):
        satellites_at(table, 500)


def test_file_rows_reproduced(tmp_path):
    table = load_ephemeris(write_csv(tmp_path, rows_2x3()))
    out = tmp_path / "again.csv"
    table.write(out)
    again = load_ephemeris(out)
    for t in table.epochs:
        assert satellites_at(again, t) == satellites_at(table, t)
    for row in rows_2x3():
        t, sid, *xyz = row.split(",")
        rec = [r for r in satellites_at(table, float(t)) if r.sat_id == sid][0]
        assert rec.position == tuple(map(float, xyz))


def test_slot_examples():
    assert slot_of_epoch(0).slot == 0
    assert slot_of_epoch(299.9).slot == 0
    assert slot_of_epoch(300).slot == 1
    assert SlotIndex(0).total_slots == 288
    assert SlotIndex(5, 300).start == 1500
    with pytest.raises(ValidationError):
        slot_of_epoch(86400)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 86399.99), st.floats(0, 86399.99), st.sampled_from([60.0, 300.0, 450.0]))
def test_slot_monotone_and_constant(a, b, L):
    lo, hi = sorted((a, b))
    assert slot_of_epoch(lo, L).slot <= slot_of_epoch(hi, L).slot
    s = slot_of_epoch(lo, L).slot
    assert s * L <= lo < (s + 1) * L


def _sat_at_enu(enu):
    return enu_to_ecef(enu, ORIGIN)


def test_zenith_and_north_horizon():
    el, _ = elevation_azimuth(_sat_at_enu((0, 0, 2e7)), (0, 0, 0), ORIGIN)
    assert el == pytest.approx(90.0)
    el, az = elevation_azimuth(_sat_at_enu((3, 1e5, 5)), (3, 0, 5), ORIGIN)
    assert el == pytest.approx(0.0, abs=1e-9)
    assert min(az, 360.0 - az) < 1e-9  # ECEF round trip leaves east at ~1e-11 m
    _, az = elevation_azimuth(_sat_at_enu((1e5, 0, 0)), (0, 0, 0), ORIGIN)
    assert az == pytest.approx(90.0)


@settings(max_examples=200, deadline=None)
@given(st.tuples(*[st.floats(-3e7, 3e7)] * 3), st.tuples(*[st.floats(-500, 500)] * 3))
def test_look_angles_vs_trig_oracle(sat_enu, rx):
    sat = np.asarray(_sat_at_enu(sat_enu))
    if np.linalg.norm(sat) < 1e3:
        return
    el, az = elevation_azimuth(EcefPoint(*sat), rx, ORIGIN)
    d = enu_by_rotations(sat, ORIGIN.latitude, ORIGIN.longitude, ORIGIN.height) - np.asarray(rx)
    rng = np.linalg.norm(d)
    if rng < 1.0:
        return
    assert -90 <= el <= 90 and 0 <= az < 360
    assert el == pytest.approx(math.degrees(math.asin(d[2] / rng)), abs=1e-6)
    horiz = math.hypot(d[0], d[1])
    if horiz > 1e-3 * rng:
        expect = math.degrees(math.acos(d[1] / horiz))
        if d[0] < 0:
            expect = 360 - expect
        diff = (az - expect + 180) % 360 - 180
        assert abs(diff) < 1e-6


def test_table_validation():
    good = SatelliteEpoch(0.0, "G01", EcefPoint(R, 0, 0))
    with pytest.raises(ValidationError):
        EphemerisTable([])
    with pytest.raises(ValidationError):
        EphemerisTable([good._replace(epoch=-1.0)])
    with pytest.raises(ValidationError):
        EphemerisTable([good._replace(position=EcefPoint(6e7, 0, 0))])
    assert EphemerisTable([good]).content_hash() == EphemerisTable([good]).content_hash()
