"""Signal reception classification: direct LOS or single specular reflection.

Reflections are found with the image method: the receiver is mirrored across
each wall plane and the satellite-to-image segment gives the reflection point
where it crosses the wall.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geo import EDGE_TOLERANCE, MIN_HIT_DISTANCE, EnuPoint, SurfaceSet

LOS = "LOS"
NLOS = "NLOS"

# receivers x satellites x walls x surfaces x edges x 3 floats per chunk
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class ReceptionPath:
    kind: str
    range: float
    extra_delay: float = 0.0
    surface_id: Optional[int] = None
    reflection_point: Optional[EnuPoint] = None

    def __post_init__(self):
        if self.kind not in (LOS, NLOS):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if self.kind == LOS and self.extra_delay != 0.0:
            raise ValueError("LOS path must have zero extra delay")
        if self.kind == NLOS and not (self.extra_delay > 0 and self.surface_id is not None):
            raise ValueError("NLOS path needs a positive delay and a reflecting surface")


@dataclass
class TraceResult:
    """Per (receiver, satellite) outcome of a batched trace.

    ``delay`` is 0 for LOS, the shortest valid reflection delay for NLOS and
    ``inf`` when the satellite is not received; ``surface`` is -1 unless NLOS.
    """

    los: np.ndarray
    delay: np.ndarray
    surface: np.ndarray
    point: np.ndarray
    geometric_range: np.ndarray

    @property
    def received(self) -> np.ndarray:
        return np.isfinite(self.delay)


def los_mask(receivers, sats, surfaces: SurfaceSet) -> np.ndarray:
    """(N, M) boolean: receiver->satellite segment clear of every surface."""
    R = np.asarray(receivers, dtype=float)[:, None, :]
    S = np.asarray(sats, dtype=float)[None, :, :]
    return ~surfaces.segment_blocked(R, S)


def reflection_candidates(receivers, sats, surfaces: SurfaceSet):
    """Evaluate the image-method reflection off every wall.

    Returns ``(valid, delay, points, wall_index)`` with shapes (N, M, W),
    (N, M, W), (N, M, W, 3) and (W,), where ``wall_index`` maps the last axis
    to positions in ``surfaces``.
    """
    R = np.asarray(receivers, dtype=float)
    S = np.asarray(sats, dtype=float)
    widx = np.nonzero(surfaces.is_wall)[0]
    N, M, W = len(R), len(S), len(widx)
    if W == 0:
        return (np.zeros((N, M, 0), bool), np.zeros((N, M, 0)), np.zeros((N, M, 0, 3)), widx)
    n_w = surfaces.normals[widx]
    side = (surfaces.anchors[widx][None, :, :] - R[:, None, :]) * n_w
    side = -np.sum(side, axis=-1)  # (N, W) signed height of the receiver over each wall plane
    front = side > MIN_HIT_DISTANCE
    image = R[:, None, :] - 2.0 * side[..., None] * n_w  # (N, W, 3)

    to_sat = S[None, :, None, :] - image[:, None, :, :]  # (N, M, W, 3)
    mirror_len = np.linalg.norm(to_sat, axis=-1)
    unit = to_sat / mirror_len[..., None]
    cos = np.sum(unit * n_w, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(cos > 1e-12, side[:, None, :] / cos, np.inf)
    crosses = front[:, None, :] & np.isfinite(t) & (t < mirror_len)
    points = image[:, None, :, :] + np.where(np.isfinite(t), t, 0.0)[..., None] * unit
    inside = np.all(
        np.einsum("nmwj,wkj->nmwk", points, surfaces.edge_normals[widx]) - surfaces.edge_offsets[widx]
        >= -EDGE_TOLERANCE,
        axis=-1,
    )
    valid = crosses & inside

    # |S - image| - |S - R| without cancellation: (a^2 - b^2) / (a + b)
    direct = np.linalg.norm(S[None, :, :] - R[:, None, :], axis=-1)  # (N, M)
    num = 2.0 * side[:, None, :] * np.sum(
        n_w * (2.0 * S[None, :, None, :] - R[:, None, None, :] - image[:, None, :, :]), axis=-1
    )
    delay = num / (mirror_len + direct[..., None])

    ni, mi, wi = np.nonzero(valid)
    if ni.size:
        p = points[ni, mi, wi]
        clear = ~(surfaces.segment_blocked(p, R[ni], exclude=widx[wi])
                  | surfaces.segment_blocked(p, S[mi], exclude=widx[wi]))
        valid[ni, mi, wi] = clear
    return valid, delay, points, widx


def _trace_chunk(R, S, surfaces):
    los = los_mask(R, S, surfaces)
    N, M = los.shape
    delay = np.where(los, 0.0, np.inf)
    surface = np.full((N, M), -1)
    point = np.full((N, M, 3), np.nan)
    need = ~los
    if np.any(need):
        rows = np.nonzero(np.any(need, axis=1))[0]
        valid, d, pts, widx = reflection_candidates(R[rows], S, surfaces)
        if valid.shape[-1]:
            d = np.where(valid, d, np.inf)
            best = np.argmin(d, axis=-1)
            best_d = np.take_along_axis(d, best[..., None], axis=-1)[..., 0]
            best_p = np.take_along_axis(pts, best[..., None, None], axis=-2)[..., 0, :]
            sub_need = need[rows] & np.isfinite(best_d)
            r_i, m_i = np.nonzero(sub_need)
            delay[rows[r_i], m_i] = best_d[r_i, m_i]
            surface[rows[r_i], m_i] = surfaces.ids[widx[best[r_i, m_i]]]
            point[rows[r_i], m_i] = best_p[r_i, m_i]
    return los, delay, surface, point


def trace_batch(receivers, sats, surfaces: SurfaceSet) -> TraceResult:
    """Classify reception for every receiver/satellite pair.

    Satellites at or below the receiver's horizon are reported as not
    received.
    """
    R = np.asarray(receivers, dtype=float).reshape(-1, 3)
    S = np.asarray(sats, dtype=float).reshape(-1, 3)
    N, M = len(R), len(S)
    los = np.zeros((N, M), bool)
    delay = np.full((N, M), np.inf)
    surface = np.full((N, M), -1)
    point = np.full((N, M, 3), np.nan)
    per_receiver = max(1, M * max(int(surfaces.is_wall.sum()), 1) * max(len(surfaces), 1)
                       * surfaces.edge_normals.shape[1] * 3)
    chunk = max(1, _CHUNK_BUDGET // per_receiver)
    for lo in range(0, N, chunk):
        sl = slice(lo, lo + chunk)
        los[sl], delay[sl], surface[sl], point[sl] = _trace_chunk(R[sl], S, surfaces)
    above = (S[None, :, 2] - R[:, None, 2]) > 0.0
    los &= above
    delay = np.where(above, delay, np.inf)
    surface = np.where(above, surface, -1)
    rng = np.linalg.norm(S[None, :, :] - R[:, None, :], axis=-1)
    return TraceResult(los, delay, surface, point, rng)


def classify_los(receiver, sat, scene) -> bool:
    return bool(los_mask(np.atleast_2d(receiver), np.atleast_2d(sat), scene.surface_set)[0, 0])


def trace_single_reflection(receiver, sat, scene) -> list[ReceptionPath]:
    """All valid single-bounce paths, one per reflecting wall, sorted by delay."""
    surfaces = scene.surface_set
    valid, delay, points, widx = reflection_candidates(np.atleast_2d(receiver), np.atleast_2d(sat), surfaces)
    rng = float(np.linalg.norm(np.asarray(sat, float) - np.asarray(receiver, float)))
    paths = [
        ReceptionPath(NLOS, rng, float(delay[0, 0, w]), int(surfaces.ids[widx[w]]), EnuPoint(*points[0, 0, w]))
        for w in np.nonzero(valid[0, 0])[0]
    ]
    return sorted(paths, key=lambda p: (p.extra_delay, p.surface_id))


def simulate_reception(receiver, sat, scene) -> Optional[ReceptionPath]:
    rng = float(np.linalg.norm(np.asarray(sat, float) - np.asarray(receiver, float)))
    if classify_los(receiver, sat, scene):
        return ReceptionPath(LOS, rng)
    paths = trace_single_reflection(receiver, sat, scene)
    return paths[0] if paths else None
