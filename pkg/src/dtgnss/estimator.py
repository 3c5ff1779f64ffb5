"""Iterative least-squares pseudorange positioning (OLS and WLS).

Unknowns are the receiver ENU position and the receiver clock bias in
meters. Each Gauss-Newton step solves the (weighted) normal equations for the
design matrix whose rows are ``[u_east, u_north, u_up, 1]`` with ``u`` the
unit vector from the current estimate toward the satellite, against the
residual ``measured - predicted``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import InsufficientSatellitesError, SingularGeometryError, ValidationError
from .geo import EcefPoint, EnuPoint, GeodeticPoint, ecef_to_enu_array, enu_to_ecef

TOLERANCE = 1e-4
MAX_ITERATIONS = 20
CONDITION_LIMIT = 1e12
ELEVATION_FLOOR_DEG = 5.0


@dataclass(frozen=True)
class PositionSolution:
    position: EnuPoint
    clock_bias: float
    origin: GeodeticPoint
    iterations: int = 0
    converged: bool = False
    n_sats: int = 0

    @property
    def ecef(self) -> EcefPoint:
        return enu_to_ecef(self.position, self.origin)

    @property
    def state(self) -> np.ndarray:
        return np.array([*self.position, self.clock_bias])


@dataclass(frozen=True)
class GeometrySystem:
    G: np.ndarray
    b: np.ndarray


def predicted_pseudorange(state: PositionSolution, sat) -> float:
    """Geometric range from the state to the satellite (ECEF) plus clock bias."""
    sat_enu = ecef_to_enu_array(np.asarray(sat, dtype=float), state.origin)
    return float(np.linalg.norm(sat_enu - np.asarray(state.position))) + state.clock_bias


def _design(x: np.ndarray, sat_enu: np.ndarray, rho: np.ndarray):
    """Design matrix and residuals for states ``x`` (N, 4)."""
    diff = sat_enu - x[:, None, :3]
    rng = np.linalg.norm(diff, axis=-1)
    G = np.concatenate([diff / rng[..., None], np.ones(rng.shape + (1,))], axis=-1)
    b = rho - (rng + x[:, 3:4])
    return G, b


def build_geometry_system(state: PositionSolution, meas: Sequence) -> GeometrySystem:
    if len(meas) < 4:
        raise InsufficientSatellitesError(f"need >= 4 measurements, got {len(meas)}")
    sat_enu = ecef_to_enu_array(np.array([m.sat_position for m in meas], dtype=float), state.origin)
    rho = np.array([m.pseudorange for m in meas], dtype=float)
    G, b = _design(state.state[None, :], sat_enu[None], rho[None])
    return GeometrySystem(G[0], b[0])


def gauss_newton(sat_enu, rho, weights, init, tol=TOLERANCE, max_iter=MAX_ITERATIONS, cond_limit=CONDITION_LIMIT):
    """Batched weighted Gauss-Newton.

    Parameters
    ----------
    sat_enu : ndarray, shape (M, 3) or (N, M, 3)
        Satellite positions in the local frame.
    rho : ndarray, shape (N, M)
        Pseudoranges.
    weights : ndarray, shape (N, M)
        Non-negative weights; zero drops a satellite from that row's solve.
    init : ndarray, shape (N, 4)
        Initial east, north, up, clock bias.

    Returns
    -------
    x : ndarray, shape (N, 4)
    iterations : ndarray of int, shape (N,)
    converged : ndarray of bool, shape (N,)
    singular : ndarray of bool, shape (N,)
        Rows whose normal matrix exceeded ``cond_limit``; their state is the
        last accepted iterate.
    """
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    x = np.array(init, dtype=float).reshape(len(rho), 4)
    sat_enu = np.asarray(sat_enu, dtype=float)
    if sat_enu.ndim == 2:
        sat_enu = np.broadcast_to(sat_enu, rho.shape + (3,))
    n = len(rho)
    iterations = np.zeros(n, dtype=int)
    converged = np.zeros(n, dtype=bool)
    singular = np.zeros(n, dtype=bool)
    rho_safe = np.where(W > 0, rho, 0.0)
    for _ in range(max_iter):
        active = np.nonzero(~converged & ~singular)[0]
        if active.size == 0:
            break
        G, b = _design(x[active], sat_enu[active], rho_safe[active])
        Gw = G * W[active][..., None]
        A = np.einsum("nmi,nmj->nij", Gw, G)
        g = np.einsum("nmi,nm->ni", Gw, b)
        cond = np.linalg.cond(A)
        bad = ~(cond <= cond_limit)
        singular[active[bad]] = True
        ok = active[~bad]
        if ok.size == 0:
            break
        delta = np.linalg.solve(A[~bad], g[~bad][..., None])[..., 0]
        # residual = -u . dp + dc, so the position moves against the solved components
        x[ok, :3] -= delta[:, :3]
        x[ok, 3] += delta[:, 3]
        iterations[ok] += 1
        converged[ok] = np.linalg.norm(delta, axis=1) <= tol
    return x, iterations, converged, singular


def elevation_weights(sat_enu: np.ndarray, position, floor_deg: float = ELEVATION_FLOOR_DEG) -> np.ndarray:
    """Default WLS weights ``sin^2(max(elevation, floor))``."""
    los = np.asarray(sat_enu, dtype=float) - np.asarray(position, dtype=float)
    el = np.arctan2(los[..., 2], np.hypot(los[..., 0], los[..., 1]))
    return np.sin(np.maximum(el, np.radians(floor_deg))) ** 2


def solve_wls(meas: Sequence, weights: Optional[Sequence[float]], init: PositionSolution, **kwargs) -> PositionSolution:
    """Weighted least-squares fix; ``weights=None`` uses the elevation rule."""
    m = len(meas)
    if m < 4:
        raise InsufficientSatellitesError(f"need >= 4 measurements, got {m}")
    sat_enu = ecef_to_enu_array(np.array([mm.sat_position for mm in meas], dtype=float), init.origin)
    rho = np.array([mm.pseudorange for mm in meas], dtype=float)
    if weights is None:
        w = elevation_weights(sat_enu, init.position)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (m,):
            raise ValidationError(f"expected {m} weights, got shape {w.shape}")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and > 0")
    x, it, conv, sing = gauss_newton(sat_enu, rho[None], w[None], init.state[None], **kwargs)
    if sing[0]:
        raise SingularGeometryError("normal matrix condition number exceeds limit")
    return PositionSolution(EnuPoint(*x[0, :3]), float(x[0, 3]), init.origin, int(it[0]), bool(conv[0]), m)


def solve_ols(meas: Sequence, init: PositionSolution, **kwargs) -> PositionSolution:
    return solve_wls(meas, np.ones(len(meas)), init, **kwargs)


def grid_init(grid, scene) -> PositionSolution:
    """Default initial guess: grid-bounds centroid at receiver height, zero clock."""
    e = 0.5 * (grid.east[0] + grid.east[1])
    n = 0.5 * (grid.north[0] + grid.north[1])
    up = scene.altitude(e, n) + grid.receiver_height
    return PositionSolution(EnuPoint(e, n, up), 0.0, scene.origin)
