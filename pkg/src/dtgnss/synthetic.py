"""Desk-scale inputs: preset scenes, a synthetic MEO constellation, walking tracks."""

from __future__ import annotations

import math

import numpy as np

from .ephemeris import EphemerisTable, SatelliteEpoch, look_angles
from .exceptions import ValidationError
from .geo import EcefPoint, GeodeticPoint, ecef_to_enu_array, enu_rotation, geodetic_to_ecef
from .scene import scene_from_dict

ORBIT_RADIUS = 26_560_000.0
# half a sidereal day
ORBIT_PERIOD = 43_082.0
# Tsim Sha Tsui, Hong Kong
DEFAULT_ORIGIN = (22.2988, 114.1722, 10.0)
PRESETS = ("open_sky", "canyon", "street")


def _box(e0, n0, e1, n1, height, bid):
    return {"id": bid, "base_alt": 0.0, "height": float(height),
            "footprint": [[e0, n0], [e1, n0], [e1, n1], [e0, n1]]}


def _row_blocks(length, block_length, gap):
    if block_length >= length:
        return [(-length / 2, length / 2)]
    n = max(1, int((length + gap) // (block_length + gap)))
    used = n * block_length + (n - 1) * gap
    start = -used / 2
    return [(start + i * (block_length + gap), start + i * (block_length + gap) + block_length) for i in range(n)]


def gen_scene(preset="canyon", street_width=20.0, height=40.0, length=120.0, block_length=None,
              depth=15.0, margin=15.0, gap=6.0, origin=DEFAULT_ORIGIN, resolution=3.0,
              receiver_height=1.0) -> dict:
    """Scene file content for a preset.

    ``canyon`` is two rows of equal-height buildings flanking a street that
    runs east-west and is centred on ``north = 0``; ``street`` is the same
    layout with the north row at half height, broken into blocks separated by
    alleys of width ``gap``. ``open_sky`` has no buildings.
    """
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; choose from {PRESETS}")
    for name, v in [("street_width", street_width), ("height", height), ("length", length),
                    ("depth", depth), ("resolution", resolution)]:
        if not (math.isfinite(v) and v > 0):
            raise ValidationError(f"{name} must be > 0, got {v}")
    if not (math.isfinite(margin) and margin >= 0) or not (math.isfinite(gap) and gap >= 0):
        raise ValidationError("margin and gap must be >= 0")
    if block_length is not None and not block_length > 0:
        raise ValidationError(f"block_length must be > 0, got {block_length}")

    half_w = street_width / 2
    buildings = []
    if preset == "open_sky":
        extent_e = length / 2 + margin
        extent_n = half_w + depth + margin
    else:
        if preset == "street" and block_length is None:
            block_length = 30.0
        blocks = _row_blocks(length, block_length or length, gap)
        north_height = height if preset == "canyon" else height / 2
        for e0, e1 in blocks:
            buildings.append(_box(e0, -half_w - depth, e1, -half_w, height, len(buildings)))
        for e0, e1 in blocks:
            buildings.append(_box(e0, half_w, e1, half_w + depth, north_height, len(buildings)))
        extent_e = length / 2 + margin
        extent_n = half_w + depth + margin
    data = {
        "origin": {"lat": origin[0], "lon": origin[1], "height": origin[2]},
        "terrain": {"constant": 0.0},
        "buildings": buildings,
        "grid": {"east": [-extent_e, extent_e], "north": [-extent_n, extent_n],
                 "resolution": resolution, "receiver_height": receiver_height},
    }
    scene_from_dict(data)  # validate
    return data


def _max_zenith_angle(mask_deg: float, radius: float) -> float:
    """Largest geocentric angle from the zenith at which a satellite clears the mask."""
    m = math.radians(mask_deg)
    return math.pi / 2 - m - math.asin(6378137.0 * math.cos(m) / radius)


def gen_constellation(count=8, epochs=1, step=30.0, origin=DEFAULT_ORIGIN, start=0.0,
                      mask_deg=15.0, radius=ORBIT_RADIUS) -> EphemerisTable:
    """Circular orbits whose planes all pass over the origin's zenith.

    Plane azimuths are staggered over 180 degrees and the along-track phases
    spread so that every satellite stays above ``mask_deg`` at the origin for
    the whole tabulated span.
    """
    if int(count) != count or count < 4:
        raise ValidationError(f"count must be an integer >= 4, got {count}")
    if int(epochs) != epochs or epochs < 1:
        raise ValidationError(f"epochs must be an integer >= 1, got {epochs}")
    if not step > 0:
        raise ValidationError(f"step must be > 0, got {step}")
    count, epochs = int(count), int(epochs)
    times = start + step * np.arange(epochs)
    if times[0] < 0 or times[-1] >= 86400.0:
        raise ValidationError("tabulated epochs must lie within one day [0, 86400)")
    rate = 2 * math.pi / ORBIT_PERIOD
    span = rate * (times[-1] - times[0])
    # keep 2 degrees for the geodetic/geocentric zenith difference
    phase_max = _max_zenith_angle(mask_deg, radius) - span / 2 - math.radians(2.0)
    if phase_max < 0:
        raise ValidationError(
            f"infeasible: {epochs} epochs x {step} s is too long to keep satellites above {mask_deg} deg"
        )
    geo = GeodeticPoint(*origin)
    ref = np.asarray(geodetic_to_ecef(geo))
    up = ref / np.linalg.norm(ref)
    rot = enu_rotation(geo)
    t_mid = 0.5 * (times[0] + times[-1])
    # golden-ratio stride decorrelates phase from plane azimuth
    frac = (np.arange(count) * 0.6180339887) % 1.0
    records = []
    for i in range(count):
        az = math.pi * i / count
        horiz = math.sin(az) * rot[0] + math.cos(az) * rot[1]
        horiz = horiz - (horiz @ up) * up
        horiz /= np.linalg.norm(horiz)
        phase = phase_max * (2 * frac[i] - 1) if count > 1 else 0.0
        sense = 1.0 if i % 2 == 0 else -1.0
        for t in times:
            theta = phase + sense * rate * (t - t_mid)
            pos = radius * (math.cos(theta) * up + math.sin(theta) * horiz)
            records.append(SatelliteEpoch(float(t), f"G{i + 1:02d}", EcefPoint(*pos)))
    table = EphemerisTable(records, step=step)
    el = look_angles(ecef_to_enu_array(np.array([r.position for r in table.records]), geo))[:, 0]
    if np.min(el) <= mask_deg:
        raise ValidationError(f"infeasible: a satellite drops to {np.min(el):.2f} deg elevation")
    return table


def straight_track(start, end, speed=1.4, t0=0.0, rate=1.0) -> list[tuple[float, tuple]]:
    """Constant-speed walk from ``start`` to ``end`` (ENU) sampled at ``rate`` Hz."""
    a, b = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    if not speed > 0 or not rate > 0:
        raise ValidationError("speed and rate must be > 0")
    dist = float(np.linalg.norm(b - a))
    n = int(math.floor(dist / speed * rate)) + 1
    out = []
    for i in range(n):
        s = min(i / rate * speed / dist, 1.0) if dist > 0 else 0.0
        out.append((t0 + i / rate, tuple(float(v) for v in a + s * (b - a))))
    return out


def sidewalk_track(scene_dict: dict, t0=0.0, speed=1.4, rate=1.0, offset=2.0, length=None):
    """Walk along the south sidewalk, ``offset`` m from the building line, west to east."""
    south = [b for b in scene_dict["buildings"] if max(v[1] for v in b["footprint"]) <= 0]
    wall_n = max((max(v[1] for v in b["footprint"]) for b in south), default=-10.0)
    if length is None:
        es = [v[0] for b in scene_dict["buildings"] for v in b["footprint"]] or [-50.0, 50.0]
        length = (max(es) - min(es)) - 10.0
    up = float(scene_dict.get("grid", {}).get("receiver_height", 1.0))
    return straight_track((-length / 2, wall_n + offset, up), (length / 2, wall_n + offset, up), speed, t0, rate)


def write_track(path, track):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch_s,east_m,north_m,up_m\n")
        for t, p in track:
            fh.write(f"{t:.3f},{p[0]:.4f},{p[1]:.4f},{p[2]:.4f}\n")
