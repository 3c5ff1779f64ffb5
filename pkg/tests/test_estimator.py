import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtgnss.estimator import (
    PositionSolution,
    build_geometry_system,
    elevation_weights,
    gauss_newton,
    predicted_pseudorange,
    solve_ols,
    solve_wls,
)
from dtgnss.exceptions import InsufficientSatellitesError, SingularGeometryError, ValidationError
from dtgnss.geo import EcefPoint, EnuPoint, GeodeticPoint, enu_to_ecef, enu_to_ecef_array
from dtgnss.measurement import SimulatedMeasurement
from dtgnss.raytrace import LOS, ReceptionPath

from oracles import nls_fix

ORIGIN = GeodeticPoint(22.3, 114.18, 10.0)
TRUTH = np.array([12.0, -7.5, 1.0])


def sat_enu_ring(n=8, r=2.0e7, seed=0):
    g = np.random.default_rng(seed)
    az = np.sort(g.uniform(0, 2 * np.pi, n))
    el = np.radians(g.uniform(15, 85, n))
    return r * np.stack([np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), np.sin(el)], axis=1)


def make_meas(sat_enu, truth=TRUTH, clock=0.0, bias=None):
    bias = np.zeros(len(sat_enu)) if bias is None else np.asarray(bias, float)
    ecef = enu_to_ecef_array(sat_enu, ORIGIN)
    out = []
    for i, (s, x) in enumerate(zip(sat_enu, ecef)):
        r = float(np.linalg.norm(s - truth))
        out.append(SimulatedMeasurement(f"G{i + 1:02d}", EcefPoint(*x), r + clock + bias[i], ReceptionPath(LOS, r)))
    return out


def init_at(p=(0.0, 0.0, 0.0), clock=0.0):
    return PositionSolution(EnuPoint(*p), clock, ORIGIN)


def test_predicted_pseudorange():
    sat = enu_to_ecef(EnuPoint(0, 0, 2.0e7), ORIGIN)
    assert predicted_pseudorange(init_at(), sat) == pytest.approx(2.0e7, abs=1e-6)
    assert predicted_pseudorange(init_at(clock=1000.0), sat) == pytest.approx(2.0e7 + 1000, abs=1e-6)
    sat2 = enu_to_ecef(EnuPoint(3.0e6, -4.0e6, 1.2e7), ORIGIN)
    hand = np.sqrt((3.0e6 - 1) ** 2 + (-4.0e6 - 2) ** 2 + (1.2e7 - 3) ** 2) + 7.0
    assert predicted_pseudorange(init_at((1, 2, 3), 7.0), sat2) == pytest.approx(hand, abs=1e-6)


def test_geometry_system():
    sats = sat_enu_ring()
    sats[0] = (TRUTH[0], TRUTH[1], 2.0e7)
    meas = make_meas(sats)
    sys_ = build_geometry_system(init_at(TRUTH), meas)
    assert sys_.G.shape == (8, 4)
    assert np.allclose(sys_.b, 0, atol=1e-6)
    assert np.allclose(sys_.G[0], (0, 0, 1, 1), atol=1e-9)
    assert np.allclose(np.linalg.norm(sys_.G[:, :3], axis=1), 1, atol=1e-9)
    with pytest.raises(InsufficientSatellitesError):
        build_geometry_system(init_at(), meas[:3])


def test_ols_exact_open_sky():
    meas = make_meas(sat_enu_ring())
    sol = solve_ols(meas, init_at())
    assert sol.converged and sol.n_sats == 8
    assert np.linalg.norm(np.subtract(sol.position, TRUTH)) < 1e-6
    assert abs(sol.clock_bias) < 1e-6


def test_ols_recovers_clock_bias():
    sol = solve_ols(make_meas(sat_enu_ring(), clock=3.0e5), init_at())
    assert sol.clock_bias == pytest.approx(3.0e5, abs=1e-6)
    assert np.linalg.norm(np.subtract(sol.position, TRUTH)) < 1e-6


def test_ols_nlos_matches_independent_solver():
    sats = sat_enu_ring(seed=3)
    bias = [0, 25.0, 0, 0, 11.0, 0, 0, 4.0]
    sol = solve_ols(make_meas(sats, bias=bias), init_at())
    rho = np.linalg.norm(sats - TRUTH, axis=1) + bias
    ref = nls_fix(sats, rho, np.r_[TRUTH + 50.0, 0.0])
    assert np.linalg.norm(np.subtract(sol.position, ref[:3])) < 1e-4
    assert abs(sol.clock_bias - ref[3]) < 1e-4
    assert np.linalg.norm(np.subtract(sol.position, TRUTH)) > 1.0


def test_wls_unit_weights_is_ols():
    meas = make_meas(sat_enu_ring(seed=4), bias=[0, 0, 30, 0, 0, 0, 0, 0])
    a = solve_ols(meas, init_at())
    b = solve_wls(meas, np.ones(8), init_at())
    c = solve_wls(meas, np.full(8, 3.7), init_at())
    assert np.allclose(a.position, b.position, atol=1e-9)
    assert np.allclose(a.position, c.position, atol=1e-4)


def test_downweighting_nlos_helps():
    sats = sat_enu_ring(seed=4)
    meas = make_meas(sats, bias=[0, 0, 30, 0, 0, 0, 0, 0])
    w = np.ones(8)
    w[2] = 1e-6
    eq = solve_wls(meas, np.ones(8), init_at())
    dw = solve_wls(meas, w, init_at())
    err = lambda s: np.hypot(s.position[0] - TRUTH[0], s.position[1] - TRUTH[1])
    assert err(dw) < err(eq)
    # the oracle agrees on the weighted optimum
    rho = np.array([m.pseudorange for m in meas])
    ref = nls_fix(sats, rho, np.r_[TRUTH, 0.0], weights=w)
    assert np.linalg.norm(np.subtract(dw.position, ref[:3])) < 1e-4


def test_default_weight_rule():
    sats = sat_enu_ring(seed=6)
    sats[0] = (2.0e7, 0, 2.0e5)  # ~0.6 degrees, floored to 5
    meas = make_meas(sats, bias=np.arange(8.0))
    w = np.sin(np.radians(np.maximum(np.degrees(np.arctan2(sats[:, 2], np.hypot(sats[:, 0], sats[:, 1]))), 5))) ** 2
    assert np.allclose(elevation_weights(sats, (0, 0, 0)), w)
    a = solve_wls(meas, None, init_at())
    b = solve_wls(meas, w, init_at())
    assert np.allclose(a.position, b.position, atol=1e-9)


def test_error_paths():
    meas = make_meas(sat_enu_ring())
    with pytest.raises(InsufficientSatellitesError):
        solve_ols(meas[:3], init_at())
    with pytest.raises(ValidationError):
        solve_wls(meas, [1, 1, 1, 1, 1, 1, 1, 0], init_at())
    with pytest.raises(ValidationError):
        solve_wls(meas, [1, 1, 1], init_at())
    # every satellite at the same elevation: the up and clock columns coincide
    az = np.linspace(0, 2 * np.pi, 6, endpoint=False)
    el = np.radians(40.0)
    cone = 2.0e7 * np.stack([np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), np.full(6, np.sin(el))], axis=1)
    with pytest.raises(SingularGeometryError):
        solve_ols(make_meas(cone + TRUTH, truth=TRUTH), init_at(TRUTH))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.tuples(*[st.floats(-1.0, 1.0)] * 3), st.floats(0, 1e5))
def test_converges_from_within_100km(seed, direction, dist):
    d = np.asarray(direction)
    d = d / np.linalg.norm(d) if np.linalg.norm(d) > 1e-6 else np.array([1.0, 0, 0])
    meas = make_meas(sat_enu_ring(seed=seed))
    sol = solve_ols(meas, init_at(TRUTH + dist * d))
    assert sol.converged
    assert np.linalg.norm(np.subtract(sol.position, TRUTH)) < 1e-6


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(0, 60), min_size=8, max_size=8), st.floats(-1e4, 1e4))
def test_stationarity_and_common_mode(seed, bias, shift):
    sats = sat_enu_ring(seed=seed)
    meas = make_meas(sats, bias=bias)
    sol = solve_ols(meas, init_at())
    s = build_geometry_system(sol, meas)
    assert np.linalg.norm(s.G.T @ s.b) <= 1e-6 * (1 + np.linalg.norm(s.b))
    shifted = [m.__class__(m.sat_id, m.sat_position, m.pseudorange + shift, m.path) for m in meas]
    sol2 = solve_ols(shifted, init_at())
    assert np.linalg.norm(np.subtract(sol2.position, sol.position)) < 1e-6
    assert sol2.clock_bias - sol.clock_bias == pytest.approx(shift, abs=1e-6)


def test_batched_rows_match_single_solves():
    sats = sat_enu_ring(seed=9)
    truths = np.array([[0, 0, 1], [10, 5, 1], [-20, 3, 2.0]])
    biases = np.array([[0] * 8, [5, 0, 0, 0, 0, 0, 0, 9], [0, 0, 12, 0, 3, 0, 0, 0]], float)
    rho = np.linalg.norm(sats[None] - truths[:, None], axis=-1) + biases
    W = np.ones_like(rho)
    W[2, 5] = 0.0  # satellite absent in the third row
    x, _, conv, sing = gauss_newton(sats, rho, W, np.zeros((3, 4)))
    assert conv.all() and not sing.any()
    for k in range(3):
        keep = W[k] > 0
        xk, _, _, _ = gauss_newton(sats[keep], rho[k, keep][None], np.ones((1, keep.sum())), np.zeros((1, 4)))
        assert np.allclose(x[k], xk[0], atol=1e-9)
