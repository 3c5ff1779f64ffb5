"""Coordinate frames and geometric primitives.

WGS-84 geodetic / ECEF / local ENU conversions, planar convex polygons,
mirroring across a plane and ray-polygon intersection. ``SurfaceSet`` is the
vectorised form of a list of polygons used by the ray tracer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._validation import check_vector3
from .exceptions import ValidationError

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

# minimum accepted ray-hit distance, excludes self-hits at a reflection point
MIN_HIT_DISTANCE = 1e-9
# slack on polygon edges; boundary points count as inside
EDGE_TOLERANCE = 1e-9
PLANARITY_TOLERANCE = 1e-6
_PARALLEL_EPS = 1e-12


class _GeodeticBase(NamedTuple):
    latitude: float
    longitude: float
    height: float


class GeodeticPoint(_GeodeticBase):
    """WGS-84 latitude/longitude in degrees, ellipsoidal height in meters."""

    __slots__ = ()

    def __new__(cls, latitude, longitude, height=0.0):
        latitude, longitude, height = float(latitude), float(longitude), float(height)
        if not (math.isfinite(latitude) and math.isfinite(longitude) and math.isfinite(height)):
            raise ValidationError("geodetic coordinates must be finite")
        if not -90.0 <= latitude <= 90.0:
            raise ValidationError(f"latitude {latitude} outside [-90, 90]")
        if not -180.0 <= longitude <= 180.0:
            raise ValidationError(f"longitude {longitude} outside [-180, 180]")
        return super().__new__(cls, latitude, longitude, height)


class EcefPoint(NamedTuple):
    x: float
    y: float
    z: float


class EnuPoint(NamedTuple):
    east: float
    north: float
    up: float


def geodetic_to_ecef(p: GeodeticPoint) -> EcefPoint:
    lat = math.radians(p.latitude)
    lon = math.radians(p.longitude)
    slat, clat = math.sin(lat), math.cos(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * slat * slat)
    return EcefPoint(
        (n + p.height) * clat * math.cos(lon),
        (n + p.height) * clat * math.sin(lon),
        (n * (1.0 - WGS84_E2) + p.height) * slat,
    )


def enu_rotation(origin: GeodeticPoint) -> np.ndarray:
    """Rotation matrix taking ECEF difference vectors into ENU at ``origin``.

    Rows are the east, north and up unit vectors expressed in ECEF.
    """
    lat = math.radians(origin.latitude)
    lon = math.radians(origin.longitude)
    slat, clat = math.sin(lat), math.cos(lat)
    slon, clon = math.sin(lon), math.cos(lon)
    return np.array(
        [
            [-slon, clon, 0.0],
            [-slat * clon, -slat * slon, clat],
            [clat * clon, clat * slon, slat],
        ]
    )


def ecef_to_enu(p: EcefPoint, origin: GeodeticPoint) -> EnuPoint:
    return EnuPoint(*ecef_to_enu_array(np.asarray(p, dtype=float), origin))


def enu_to_ecef(p: EnuPoint, origin: GeodeticPoint) -> EcefPoint:
    return EcefPoint(*enu_to_ecef_array(np.asarray(p, dtype=float), origin))


def ecef_to_enu_array(xyz: np.ndarray, origin: GeodeticPoint) -> np.ndarray:
    """Vectorised ECEF -> ENU for an array of shape (..., 3)."""
    ref = np.asarray(geodetic_to_ecef(origin))
    return (np.asarray(xyz, dtype=float) - ref) @ enu_rotation(origin).T


def enu_to_ecef_array(enu: np.ndarray, origin: GeodeticPoint) -> np.ndarray:
    ref = np.asarray(geodetic_to_ecef(origin))
    return np.asarray(enu, dtype=float) @ enu_rotation(origin) + ref


@dataclass(frozen=True, eq=False)
class SurfacePolygon:
    """Planar convex polygon with an outward unit normal.

    Vertices must wind counter-clockwise when viewed from the side the
    normal points to.
    """

    vertices: np.ndarray
    normal: np.ndarray
    surface_id: int
    is_wall: bool = True
    # derived: inward-pointing in-plane edge normals, used for the inside test
    edge_normals: np.ndarray = field(init=False, repr=False)
    edge_offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float)
        normal = np.array(self.normal, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 3 or len(verts) < 3:
            raise ValidationError(f"surface {self.surface_id}: need >= 3 vertices of dimension 3")
        if not np.all(np.isfinite(verts)) or not np.all(np.isfinite(normal)):
            raise ValidationError(f"surface {self.surface_id}: non-finite geometry")
        if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
            raise ValidationError(f"surface {self.surface_id}: normal is not unit length")
        dist = (verts - verts[0]) @ normal
        if np.max(np.abs(dist)) > PLANARITY_TOLERANCE:
            raise ValidationError(f"surface {self.surface_id}: vertices are not coplanar")
        edges = np.roll(verts, -1, axis=0) - verts
        lengths = np.linalg.norm(edges, axis=1)
        if np.any(lengths <= 0.0):
            raise ValidationError(f"surface {self.surface_id}: repeated vertex")
        inward = np.cross(normal, edges) / lengths[:, None]
        offsets = np.einsum("ij,ij->i", inward, verts)
        # convex + counter-clockwise about the normal: every vertex is on the
        # inner side of every edge
        if np.any(verts @ inward.T - offsets[None, :] < -PLANARITY_TOLERANCE):
            raise ValidationError(
                f"surface {self.surface_id}: polygon not convex or winding disagrees with normal"
            )
        verts.setflags(write=False)
        normal.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "edge_normals", inward)
        object.__setattr__(self, "edge_offsets", offsets)

    @property
    def offset(self) -> float:
        return float(self.normal @ self.vertices[0])

    def signed_distance(self, p) -> float:
        return float(np.asarray(p, dtype=float) @ self.normal - self.offset)

    def contains(self, p, tol=EDGE_TOLERANCE) -> bool:
        """In-plane membership test (the point is assumed to lie on the plane)."""
        p = np.asarray(p, dtype=float)
        return bool(np.all(self.edge_normals @ p - self.edge_offsets >= -tol))


def mirror_across_plane(p, surface: SurfacePolygon) -> EnuPoint:
    p = check_vector3("p", p)
    n = surface.normal
    return EnuPoint(*(p - 2.0 * ((p - surface.vertices[0]) @ n) * n))


def ray_intersect_polygon(origin, direction, surface: SurfacePolygon) -> Optional[tuple[EnuPoint, float]]:
    """Intersect a ray with a polygon.

    Returns ``(hit_point, distance)`` or ``None`` when the ray misses, runs
    parallel to the plane or hits closer than ``MIN_HIT_DISTANCE``.
    """
    o = check_vector3("origin", origin)
    d = check_vector3("direction", direction)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValidationError("direction must be a unit vector")
    denom = d @ surface.normal
    if abs(denom) < _PARALLEL_EPS:
        return None
    t = (surface.offset - o @ surface.normal) / denom
    if not t > MIN_HIT_DISTANCE:
        return None
    hit = o + t * d
    if not surface.contains(hit):
        return None
    return EnuPoint(*hit), float(t)


class SurfaceSet:
    """Stacked polygon data for vectorised ray casting.

    Polygons are padded to a common edge count; padding edges have a zero
    normal so they never reject a point.
    """

    def __init__(self, surfaces: Sequence[SurfacePolygon]):
        self.surfaces = list(surfaces)
        n = len(self.surfaces)
        kmax = max((len(s.vertices) for s in self.surfaces), default=3)
        self.normals = np.zeros((n, 3))
        self.offsets = np.zeros(n)
        self.anchors = np.zeros((n, 3))
        self.edge_normals = np.zeros((n, kmax, 3))
        self.edge_offsets = np.zeros((n, kmax))
        self.ids = np.zeros(n, dtype=int)
        self.is_wall = np.zeros(n, dtype=bool)
        for i, s in enumerate(self.surfaces):
            k = len(s.vertices)
            self.normals[i] = s.normal
            self.offsets[i] = s.offset
            self.anchors[i] = s.vertices[0]
            self.edge_normals[i, :k] = s.edge_normals
            self.edge_offsets[i, :k] = s.edge_offsets
            self.ids[i] = s.surface_id
            self.is_wall[i] = s.is_wall

    def __len__(self):
        return len(self.surfaces)

    def subset(self, mask) -> "SurfaceSet":
        return SurfaceSet([s for s, keep in zip(self.surfaces, mask) if keep])

    def hit_distances(self, origins, directions):
        """Distances from each ray to every polygon, ``inf`` on a miss.

        ``origins`` and ``directions`` broadcast to shape (..., 3); the result
        has shape (..., n_surfaces).
        """
        o = np.asarray(origins, dtype=float)[..., None, :]
        d = np.asarray(directions, dtype=float)[..., None, :]
        denom = np.sum(d * self.normals, axis=-1)
        # shift origins by the polygon anchor to keep the plane offset small
        # when origins are far away (satellites)
        gap = np.sum((self.anchors - o) * self.normals, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) < _PARALLEL_EPS, np.inf, gap / denom)
        t = np.where(t > MIN_HIT_DISTANCE, t, np.inf)
        finite = np.isfinite(t)
        hit = o + np.where(finite, t, 0.0)[..., None] * d
        inside = np.all(
            np.einsum("...sj,skj->...sk", hit, self.edge_normals) - self.edge_offsets
            >= -EDGE_TOLERANCE,
            axis=-1,
        )
        return np.where(finite & inside, t, np.inf)

    def segment_blocked(self, starts, ends, exclude=None):
        """True where the open segment start->end crosses any polygon.

        ``exclude`` optionally gives, per segment, the index of one surface to
        ignore (-1 for none).
        """
        starts = np.asarray(starts, dtype=float)
        ends = np.asarray(ends, dtype=float)
        shape = np.broadcast_shapes(starts.shape, ends.shape)[:-1]
        if len(self) == 0:
            return np.zeros(shape, dtype=bool)
        delta = ends - starts
        length = np.linalg.norm(delta, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = delta / length[..., None]
        t = self.hit_distances(starts, unit)
        blocking = t < (length[..., None] - MIN_HIT_DISTANCE)
        if exclude is not None:
            exclude = np.asarray(exclude)
            blocking &= np.arange(len(self)) != exclude[..., None]
        return np.any(blocking, axis=-1)
