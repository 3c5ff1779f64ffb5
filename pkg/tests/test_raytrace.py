import numpy as np
import pytest

from dtgnss.geo import EnuPoint, mirror_across_plane
from dtgnss.raytrace import (
    LOS,
    NLOS,
    ReceptionPath,
    classify_los,
    simulate_reception,
    trace_batch,
    trace_single_reflection,
)
from dtgnss.scene import scene_from_dict

from oracles import boxes_to_scene_dict, oracle_los, oracle_reflections, random_boxes, random_receiver_and_sat

ORIGIN = {"lat": 22.3, "lon": 114.18, "height": 10.0}
# |sat - (-10, 0, 1)| - |sat - (10, 0, 1)| for sat = (1e7, 0, 1e7), 40-digit evaluation
MIRROR_DELAY_REF = 14.142136330835981585


def scene(*boxes):
    return scene_from_dict({"origin": ORIGIN, "buildings": [
        {"id": i, "height": h, "footprint": [[e0, n0], [e1, n0], [e1, n1], [e0, n1]]}
        for i, (e0, n0, e1, n1, h) in enumerate(boxes)]})


# building whose east face is the plane x = 0
WALL_X0 = (-20, -50, 0, 50, 50)


def test_open_sky_is_los():
    s = scene()
    for sat in [(0, 0, 2e7), (1e7, -3e6, 5e5), (-2e7, 1, 1e3)]:
        assert classify_los((0, 0, 1), sat, s)
        path = simulate_reception((0, 0, 1), sat, s)
        assert path.kind == LOS and path.extra_delay == 0


def test_wall_between_blocks():
    s = scene((5, -20, 10, 20, 30))
    assert not classify_los((0, 0, 1), (1e7, 0, 1e6), s)
    assert classify_los((0, 0, 1), (-1e7, 0, 1e6), s)
    # steep enough to clear the roof (z = 51 m at the near face)
    assert classify_los((0, 0, 1), (1e6, 0, 1e7), s)


def test_mirror_formula_example():
    paths = trace_single_reflection((10, 0, 1), (1e7, 0, 1e7), scene(WALL_X0))
    assert len(paths) == 1
    p = paths[0]
    assert p.kind == NLOS and p.surface_id == 1
    assert p.extra_delay == pytest.approx(MIRROR_DELAY_REF, abs=1e-6)
    assert p.reflection_point.east == pytest.approx(0.0, abs=1e-9)


def test_reflection_outside_finite_wall():
    # same plane, wall too low for the bounce point at ~11 m
    assert trace_single_reflection((10, 0, 1), (1e7, 0, 1e7), scene((-20, -50, 0, 50, 8))) == []
    # wall too narrow in the north direction
    assert trace_single_reflection((10, 30, 1), (1e7, 0, 1e7), scene((-20, -5, 0, 5, 50))) == []


def test_receiver_leg_blocked_by_second_building():
    # a low block between the receiver and the bounce point
    s = scene(WALL_X0, (3, -3, 6, 3, 20))
    paths = trace_single_reflection((10, 0, 1), (1e7, 0, 1e7), s)
    assert 1 not in [p.surface_id for p in paths]
    # the blocker's own east face is a legitimate reflector
    assert [p.surface_id for p in paths] == [6]


def test_receiver_behind_wall_has_no_path():
    assert trace_single_reflection((-30, 0, 1), (1e7, 0, 1e7), scene(WALL_X0)) == []


def test_simulate_reception_cases():
    # satellite behind a tall block, reflected off a facade across the street
    s = scene((5, -20, 10, 20, 60), (-20, -50, -10, 50, 60))
    sat = (1e7, 0, 4e6)
    assert not classify_los((0, 0, 1), sat, s)
    assert simulate_reception((0, 0, 1), sat, s) is None  # far wall faces away from this satellite
    # a low wall just west of the receiver blocks the direct ray; the bounce
    # off the east block passes over it 4 m higher
    s2 = scene((5, -20, 10, 20, 60), (-3, -50, -2, 50, 4))
    sat2 = (-1e7, 2e5, 4e6)
    assert not classify_los((0, 0, 1), sat2, s2)
    path = simulate_reception((0, 0, 1), sat2, s2)
    assert path is not None and path.kind == NLOS
    assert path.extra_delay == min(p.extra_delay for p in trace_single_reflection((0, 0, 1), sat2, s2))


def test_reception_path_invariants():
    with pytest.raises(ValueError):
        ReceptionPath(LOS, 1.0, 2.0)
    with pytest.raises(ValueError):
        ReceptionPath(NLOS, 1.0, 0.0, 1, EnuPoint(0, 0, 0))
    with pytest.raises(ValueError):
        ReceptionPath("MP", 1.0)


def _random_cases(seed, n):
    r = np.random.default_rng(seed)
    for _ in range(n):
        boxes = random_boxes(r)
        rx, sat = random_receiver_and_sat(r, boxes)
        yield boxes, scene_from_dict(boxes_to_scene_dict(boxes)), rx, sat


def test_nlos_paths_obey_mirror_identity_and_specular_law():
    checked = 0
    for boxes, s, rx, sat in _random_cases(11, 400):
        for p in trace_single_reflection(rx, sat, s):
            wall = s.surfaces[p.surface_id]
            pr = np.asarray(p.reflection_point)
            assert abs(wall.signed_distance(pr)) < 1e-6
            image = np.asarray(mirror_across_plane(rx, wall))
            legs = np.linalg.norm(sat - pr) + np.linalg.norm(pr - rx)
            assert legs == pytest.approx(np.linalg.norm(sat - image), abs=1e-6)
            assert p.extra_delay > 0
            n = wall.normal
            a_in = np.arccos(np.clip((sat - pr) @ n / np.linalg.norm(sat - pr), -1, 1))
            a_out = np.arccos(np.clip((rx - pr) @ n / np.linalg.norm(rx - pr), -1, 1))
            assert abs(a_in - a_out) < 1e-9
            # incident, normal and reflected directions are coplanar
            trip = np.cross(sat - pr, rx - pr) @ n
            assert abs(trip) / (np.linalg.norm(sat - pr) * np.linalg.norm(rx - pr)) < 1e-9
            checked += 1
    assert checked > 20


def test_simulate_reception_never_nlos_when_los():
    for _, s, rx, sat in _random_cases(5, 300):
        path = simulate_reception(rx, sat, s)
        if classify_los(rx, sat, s):
            assert path.kind == LOS


def test_batch_agrees_with_scalar():
    r = np.random.default_rng(2)
    boxes = random_boxes(r, 5)
    s = scene_from_dict(boxes_to_scene_dict(boxes))
    pairs = [random_receiver_and_sat(r, boxes) for _ in range(60)]
    R = np.array([p[0] for p in pairs])
    S = np.array([p[1] for p in pairs[:12]])
    tr = trace_batch(R, S, s.surface_set)
    for i in range(len(R)):
        for j in range(len(S)):
            if S[j, 2] <= R[i, 2]:
                assert not tr.received[i, j]
                continue
            path = simulate_reception(R[i], S[j], s)
            if path is None:
                assert not tr.received[i, j]
            elif path.kind == LOS:
                assert tr.los[i, j] and tr.delay[i, j] == 0
            else:
                assert not tr.los[i, j]
                assert tr.delay[i, j] == path.extra_delay and tr.surface[i, j] == path.surface_id


def test_oracle_agreement_sample():
    """A smaller run of the brute-force comparison (the full one is an acceptance check)."""
    region = (np.array([-60.0, -60.0, -1.0]), np.array([60.0, 60.0, 60.0]))
    disagreements = 0
    for boxes, s, rx, sat in _random_cases(99, 150):
        blocked, margin = oracle_los(boxes, rx, sat, region)
        if classify_los(rx, sat, s) == blocked and margin > 1e-6:
            disagreements += 1
        found, _ = oracle_reflections(boxes, rx, sat, region)
        got = {(p.surface_id // 5, p.surface_id % 5) for p in trace_single_reflection(rx, sat, s)}
        if got != {(f["box"], f["face"]) for f in found}:
            disagreements += 1
    assert disagreements == 0
