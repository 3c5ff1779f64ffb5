"""Digital twin scene: extruded buildings, terrain and the receiver grid."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._validation import check_finite, check_positive
from .exceptions import ValidationError
from .geo import EnuPoint, GeodeticPoint, SurfacePolygon, SurfaceSet

_BOUNDARY_TOL = 1e-9


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cross2(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _cross2(q1, q2, p1)
    d2 = _cross2(q1, q2, p2)
    d3 = _cross2(p1, p2, q1)
    d4 = _cross2(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 and d2 and d3 and d4:
        return True

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return (
        (d1 == 0 and on_seg(q1, q2, p1))
        or (d2 == 0 and on_seg(q1, q2, p2))
        or (d3 == 0 and on_seg(p1, p2, q1))
        or (d4 == 0 and on_seg(p1, p2, q2))
    )


def _is_simple(pts: np.ndarray) -> bool:
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if _segments_intersect(a, b, pts[j], pts[(j + 1) % n]):
                return False
    return True


def _is_convex(pts: np.ndarray) -> bool:
    n = len(pts)
    return all(_cross2(pts[i], pts[(i + 1) % n], pts[(i + 2) % n]) >= 0 for i in range(n))


def _ear_clip(pts: np.ndarray) -> list[list[int]]:
    """Triangulate a simple counter-clockwise polygon by ear clipping."""
    idx = list(range(len(pts)))
    tris = []
    while len(idx) > 3:
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = pts[i0], pts[i1], pts[i2]
            if _cross2(a, b, c) <= 0:
                continue
            if any(
                _cross2(a, b, pts[j]) >= 0 and _cross2(b, c, pts[j]) >= 0 and _cross2(c, a, pts[j]) >= 0
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            tris.append([i0, i1, i2])
            idx.pop(k)
            break
        else:  # pragma: no cover - simple CCW polygons always have an ear
            raise ValidationError("footprint triangulation failed")
    tris.append(idx)
    return tris


@dataclass(frozen=True)
class Building:
    footprint: tuple
    height: float
    base_alt: float = 0.0
    id: int = 0

    def __post_init__(self):
        pts = np.asarray(self.footprint, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError(f"building {self.id}: footprint must be a list of [east, north] pairs")
        if len(pts) < 3:
            raise ValidationError(f"building {self.id}: footprint needs >= 3 vertices, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError(f"building {self.id}: footprint has non-finite vertices")
        check_positive(f"building {self.id} height", self.height)
        check_finite(f"building {self.id} base_alt", self.base_alt)
        if not _is_simple(pts):
            raise ValidationError(f"building {self.id}: footprint is self-intersecting")
        if _signed_area(pts) <= 0:
            raise ValidationError(f"building {self.id}: footprint must be counter-clockwise")
        object.__setattr__(self, "footprint", tuple(map(tuple, pts.tolist())))

    @property
    def top(self) -> float:
        return self.base_alt + self.height

    def contains_strictly(self, east: float, north: float) -> bool:
        """True if (east, north) is inside the footprint and not on its boundary."""
        pts = np.asarray(self.footprint)
        n = len(pts)
        inside = False
        for i in range(n):
            (x1, y1), (x2, y2) = pts[i], pts[(i + 1) % n]
            edge = np.array([x2 - x1, y2 - y1])
            rel = np.array([east - x1, north - y1])
            s = np.clip(rel @ edge / (edge @ edge), 0.0, 1.0)
            if np.hypot(*(rel - s * edge)) <= _BOUNDARY_TOL:
                return False
            if (y1 > north) != (y2 > north):
                x_cross = x1 + (north - y1) * (x2 - x1) / (y2 - y1)
                if east < x_cross:
                    inside = not inside
        return inside

    def surfaces(self, first_id: int) -> list[SurfacePolygon]:
        """Extrude into vertical walls plus roof polygon(s)."""
        pts = np.asarray(self.footprint)
        out = []
        sid = first_id
        for i in range(len(pts)):
            a, b = pts[i], pts[(i + 1) % len(pts)]
            edge = b - a
            normal = np.array([edge[1], -edge[0], 0.0]) / np.hypot(*edge)
            verts = [
                [a[0], a[1], self.base_alt],
                [b[0], b[1], self.base_alt],
                [b[0], b[1], self.top],
                [a[0], a[1], self.top],
            ]
            out.append(SurfacePolygon(verts, normal, sid, is_wall=True))
            sid += 1
        pieces = [list(range(len(pts)))] if _is_convex(pts) else _ear_clip(pts)
        for piece in pieces:
            verts = [[pts[j][0], pts[j][1], self.top] for j in piece]
            out.append(SurfacePolygon(verts, [0.0, 0.0, 1.0], sid, is_wall=False))
            sid += 1
        return out


@dataclass(frozen=True)
class Terrain:
    """Constant altitude, or a raster of node altitudes sampled on a regular grid.

    Raster node (row i, col j) sits at ``(origin[0] + j*cell_size,
    origin[1] + i*cell_size)``.
    """

    constant: Optional[float] = 0.0
    origin: tuple = (0.0, 0.0)
    cell_size: float = 1.0
    values: Optional[tuple] = None

    def __post_init__(self):
        if self.values is None:
            check_finite("terrain constant", self.constant)
            return
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValidationError("terrain raster values must be a non-empty 2-D array")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("terrain raster has non-finite altitudes")
        check_positive("terrain raster cell_size", self.cell_size)
        object.__setattr__(self, "values", tuple(map(tuple, vals.tolist())))

    @property
    def rows(self) -> int:
        return 0 if self.values is None else len(self.values)

    @property
    def cols(self) -> int:
        return 0 if self.values is None else len(self.values[0])


def terrain_altitude(t: Terrain, east: float, north: float) -> float:
    if t.values is None:
        return float(t.constant)
    vals = np.asarray(t.values)
    gx = np.clip((east - t.origin[0]) / t.cell_size, 0.0, t.cols - 1)
    gy = np.clip((north - t.origin[1]) / t.cell_size, 0.0, t.rows - 1)
    j0, i0 = min(int(gx), max(t.cols - 2, 0)), min(int(gy), max(t.rows - 2, 0))
    j1, i1 = min(j0 + 1, t.cols - 1), min(i0 + 1, t.rows - 1)
    fx, fy = gx - j0, gy - i0
    bottom = vals[i0, j0] * (1 - fx) + vals[i0, j1] * fx
    top = vals[i1, j0] * (1 - fx) + vals[i1, j1] * fx
    return float(bottom * (1 - fy) + top * fy)


@dataclass(frozen=True)
class GridSpec:
    """Receiver lattice of half-open ``resolution``-sized squares.

    The lattice has ``ceil(extent / resolution)`` cells per axis, so the last
    column/row may stick out past ``east[1]``/``north[1]``; the covered area
    is always a whole number of cells.
    """

    east: tuple
    north: tuple
    resolution: float = 3.0
    receiver_height: float = 1.0

    def __post_init__(self):
        e0, e1 = map(float, self.east)
        n0, n1 = map(float, self.north)
        check_finite("grid bounds", e0, e1, n0, n1)
        if not (e1 > e0 and n1 > n0):
            raise ValidationError(f"grid bounds are degenerate: east={self.east}, north={self.north}")
        check_positive("grid resolution", self.resolution)
        check_finite("receiver height", self.receiver_height)
        object.__setattr__(self, "east", (e0, e1))
        object.__setattr__(self, "north", (n0, n1))
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "receiver_height", float(self.receiver_height))

    @property
    def ncols(self) -> int:
        return math.ceil((self.east[1] - self.east[0]) / self.resolution - 1e-12)

    @property
    def nrows(self) -> int:
        return math.ceil((self.north[1] - self.north[0]) / self.resolution - 1e-12)

    def center_of(self, col: int, row: int) -> tuple[float, float]:
        return (
            self.east[0] + (col + 0.5) * self.resolution,
            self.north[0] + (row + 0.5) * self.resolution,
        )

    def to_dict(self) -> dict:
        return {
            "east": list(self.east),
            "north": list(self.north),
            "resolution": self.resolution,
            "receiver_height": self.receiver_height,
        }


@dataclass(frozen=True)
class GridCell:
    index: tuple
    center: EnuPoint


@dataclass(frozen=True, eq=False)
class Scene:
    origin: GeodeticPoint
    buildings: tuple = ()
    terrain: Terrain = field(default_factory=Terrain)
    grid: Optional[GridSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))
        ids = [b.id for b in self.buildings]
        if len(set(ids)) != len(ids):
            raise ValidationError("building ids must be unique")

    @cached_property
    def surfaces(self) -> list[SurfacePolygon]:
        """All walls and roofs; surface ids are positions in this list."""
        out = []
        for b in self.buildings:
            out.extend(b.surfaces(first_id=len(out)))
        return out

    @property
    def walls(self) -> list[SurfacePolygon]:
        return [s for s in self.surfaces if s.is_wall]

    @cached_property
    def surface_set(self) -> SurfaceSet:
        return SurfaceSet(self.surfaces)

    def altitude(self, east: float, north: float) -> float:
        return terrain_altitude(self.terrain, east, north)

    def inside_building(self, east: float, north: float) -> bool:
        return any(b.contains_strictly(east, north) for b in self.buildings)

    def to_dict(self) -> dict:
        if self.terrain.values is None:
            terrain = {"constant": self.terrain.constant}
        else:
            terrain = {
                "raster": {
                    "origin": list(self.terrain.origin),
                    "cell_size": self.terrain.cell_size,
                    "rows": self.terrain.rows,
                    "cols": self.terrain.cols,
                    "values": [list(r) for r in self.terrain.values],
                }
            }
        out = {
            "origin": {"lat": self.origin.latitude, "lon": self.origin.longitude, "height": self.origin.height},
            "terrain": terrain,
            "buildings": [
                {"id": b.id, "base_alt": b.base_alt, "height": b.height, "footprint": [list(v) for v in b.footprint]}
                for b in self.buildings
            ],
        }
        if self.grid is not None:
            out["grid"] = self.grid.to_dict()
        return out

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _require_keys(obj, where, required, optional=()):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ValidationError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ValidationError(f"{where}: missing field(s) {missing}")


def scene_from_dict(data: dict) -> Scene:
    _require_keys(data, "scene", ["origin", "buildings"], ["terrain", "grid"])
    o = data["origin"]
    _require_keys(o, "origin", ["lat", "lon"], ["height"])
    origin = GeodeticPoint(o["lat"], o["lon"], o.get("height", 0.0))

    t = data.get("terrain", {"constant": 0.0})
    _require_keys(t, "terrain", [], ["constant", "raster"])
    if ("constant" in t) == ("raster" in t):
        raise ValidationError("terrain: give exactly one of 'constant' or 'raster'")
    if "constant" in t:
        terrain = Terrain(constant=float(t["constant"]))
    else:
        r = t["raster"]
        _require_keys(r, "terrain.raster", ["origin", "cell_size", "values"], ["rows", "cols"])
        values = r["values"]
        if "rows" in r and r["rows"] != len(values):
            raise ValidationError("terrain.raster: 'rows' does not match values")
        if "cols" in r and any(len(row) != r["cols"] for row in values):
            raise ValidationError("terrain.raster: 'cols' does not match values")
        terrain = Terrain(constant=None, origin=tuple(r["origin"]), cell_size=float(r["cell_size"]), values=values)

    if not isinstance(data["buildings"], list):
        raise ValidationError("buildings: expected a list")
    buildings = []
    for i, b in enumerate(data["buildings"]):
        _require_keys(b, f"buildings[{i}]", ["footprint", "height"], ["id", "base_alt"])
        buildings.append(
            Building(
                footprint=b["footprint"],
                height=float(b["height"]),
                base_alt=float(b.get("base_alt", 0.0)),
                id=int(b.get("id", i)),
            )
        )

    grid = None
    if "grid" in data:
        g = data["grid"]
        _require_keys(g, "grid", ["east", "north"], ["resolution", "receiver_height"])
        grid = GridSpec(
            east=tuple(g["east"]),
            north=tuple(g["north"]),
            resolution=float(g.get("resolution", 3.0)),
            receiver_height=float(g.get("receiver_height", 1.0)),
        )
    return Scene(origin=origin, buildings=tuple(buildings), terrain=terrain, grid=grid)


def load_scene(path) -> Scene:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return scene_from_dict(data)
    except (TypeError, KeyError) as exc:
        raise ValidationError(f"{path}: malformed field: {exc}") from exc


def build_grid(scene: Scene, spec: GridSpec) -> list[GridCell]:
    """Candidate receivers at cell centers, skipping cells inside buildings.

    Cells are ordered by (column, row).
    """
    cells = []
    for col in range(spec.ncols):
        for row in range(spec.nrows):
            e, n = spec.center_of(col, row)
            if scene.inside_building(e, n):
                continue
            up = scene.altitude(e, n) + spec.receiver_height
            cells.append(GridCell((col, row), EnuPoint(e, n, up)))
    return cells


def snap_to_cell(p, spec: GridSpec) -> Optional[tuple[int, int]]:
    """Index of the cell whose horizontal square holds ``p`` (floor convention)."""
    col = math.floor((p[0] - spec.east[0]) / spec.resolution)
    row = math.floor((p[1] - spec.north[0]) / spec.resolution)
    if 0 <= col < spec.ncols and 0 <= row < spec.nrows:
        return col, row
    return None


def snap_many(points: np.ndarray, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``snap_to_cell``; returns (indices (n, 2), valid mask)."""
    pts = np.asarray(points, dtype=float)
    col = np.floor((pts[:, 0] - spec.east[0]) / spec.resolution)
    row = np.floor((pts[:, 1] - spec.north[0]) / spec.resolution)
    valid = (col >= 0) & (col < spec.ncols) & (row >= 0) & (row < spec.nrows)
    idx = np.stack([col, row], axis=1)
    idx = np.where(valid[:, None], idx, -1).astype(int)
    return idx, valid
