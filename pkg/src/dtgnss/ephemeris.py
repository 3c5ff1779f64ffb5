"""Tabulated satellite positions, epoch lookup and look angles."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import CoverageError, ValidationError
from .geo import EcefPoint, GeodeticPoint, ecef_to_enu_array

SECONDS_PER_DAY = 86400.0
HEADER = ["epoch_s", "sat_id", "x_m", "y_m", "z_m"]
MIN_ORBIT_RADIUS = 2.0e7
MAX_ORBIT_RADIUS = 5.0e7


class SatelliteEpoch(NamedTuple):
    epoch: float
    sat_id: str
    position: EcefPoint


def _check_record(rec: SatelliteEpoch, where: str = ""):
    if not 0.0 <= rec.epoch < SECONDS_PER_DAY:
        raise ValidationError(f"{where}epoch {rec.epoch} outside [0, 86400)")
    pos = np.asarray(rec.position, dtype=float)
    if not np.all(np.isfinite(pos)):
        raise ValidationError(f"{where}satellite {rec.sat_id}: non-finite position")
    norm = float(np.linalg.norm(pos))
    if not MIN_ORBIT_RADIUS <= norm <= MAX_ORBIT_RADIUS:
        raise ValidationError(
            f"{where}satellite {rec.sat_id}: position norm {norm:.1f} m outside sanity band "
            f"[{MIN_ORBIT_RADIUS:.1e}, {MAX_ORBIT_RADIUS:.1e}]"
        )


class EphemerisTable:
    """Satellite positions sorted by (epoch, satellite id).

    The epoch step is inferred from the smallest gap between distinct
    epochs unless given explicitly.
    """

    def __init__(self, records, step=None):
        recs = sorted(records, key=lambda r: (r.epoch, r.sat_id))
        if not recs:
            raise ValidationError("ephemeris table is empty")
        seen = set()
        for r in recs:
            _check_record(r)
            key = (r.epoch, r.sat_id)
            if key in seen:
                raise ValidationError(f"duplicate record for epoch {r.epoch}, satellite {r.sat_id}")
            seen.add(key)
        self.records = tuple(recs)
        self.epochs = np.unique([r.epoch for r in recs])
        if step is None:
            step = float(np.min(np.diff(self.epochs))) if len(self.epochs) > 1 else 1.0
        if not step > 0:
            raise ValidationError("ephemeris step must be > 0")
        self.step = float(step)
        bounds = np.searchsorted([r.epoch for r in recs], self.epochs, side="left")
        self._slices = dict(zip(self.epochs.tolist(), zip(bounds, list(bounds[1:]) + [len(recs)])))

    def __len__(self):
        return len(self.records)

    @property
    def coverage(self) -> tuple[float, float]:
        return float(self.epochs[0]), float(self.epochs[-1])

    def nearest_epoch(self, epoch: float) -> float:
        i = int(np.searchsorted(self.epochs, epoch))
        candidates = [self.epochs[j] for j in (i - 1, i) if 0 <= j < len(self.epochs)]
        best = min(candidates, key=lambda e: (abs(e - epoch), e))
        if abs(best - epoch) > 0.5 * self.step:
            raise CoverageError(
                f"no tabulated epoch within {0.5 * self.step:g} s of {epoch:g} "
                f"(coverage {self.coverage[0]:g}..{self.coverage[1]:g})"
            )
        return float(best)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for r in self.records:
            h.update(f"{r.epoch!r},{r.sat_id},{r.position[0]!r},{r.position[1]!r},{r.position[2]!r}\n".encode())
        return h.hexdigest()

    def write(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER)
            for r in self.records:
                w.writerow([f"{r.epoch:.3f}", r.sat_id, *(f"{c:.4f}" for c in r.position)])


def load_ephemeris(path) -> EphemerisTable:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise ValidationError(f"{path}: header must be {','.join(HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ValidationError(f"{path}: row {lineno}: expected 5 columns, got {len(row)}")
            try:
                epoch = float(row[0])
                pos = EcefPoint(float(row[2]), float(row[3]), float(row[4]))
            except ValueError as exc:
                raise ValidationError(f"{path}: row {lineno}: {exc}") from exc
            rec = SatelliteEpoch(epoch, row[1].strip(), pos)
            _check_record(rec, where=f"{path}: row {lineno}: ")
            records.append(rec)
    return EphemerisTable(records)


def satellites_at(table: EphemerisTable, epoch: float) -> list[SatelliteEpoch]:
    """Records at the tabulated epoch nearest to ``epoch`` (no interpolation)."""
    lo, hi = table._slices[table.nearest_epoch(epoch)]
    return list(table.records[lo:hi])


@dataclass(frozen=True)
class SlotIndex:
    slot: int
    slot_length: float = 300.0

    @property
    def start(self) -> float:
        return self.slot * self.slot_length

    @property
    def total_slots(self) -> int:
        return math.ceil(SECONDS_PER_DAY / self.slot_length)


def slot_of_epoch(epoch: float, slot_length: float = 300.0) -> SlotIndex:
    if not 0.0 <= epoch < SECONDS_PER_DAY:
        raise ValidationError(f"epoch {epoch} outside [0, 86400)")
    if not slot_length > 0:
        raise ValidationError("slot length must be > 0")
    return SlotIndex(int(math.floor(epoch / slot_length)), float(slot_length))


def elevation_azimuth(sat, receiver, origin: GeodeticPoint) -> tuple[float, float]:
    """Elevation and azimuth (degrees) of ``sat`` (ECEF) seen from ``receiver`` (ENU)."""
    los = ecef_to_enu_array(np.asarray(sat, dtype=float), origin) - np.asarray(receiver, dtype=float)
    return look_angles(los[None, :])[0]


def look_angles(los: np.ndarray) -> np.ndarray:
    """Vectorised elevation/azimuth in degrees for ENU line-of-sight vectors (n, 3)."""
    e, n, u = los[:, 0], los[:, 1], los[:, 2]
    el = np.degrees(np.arctan2(u, np.hypot(e, n)))
    az = np.degrees(np.arctan2(e, n)) % 360.0
    # -0.0 % 360 and tiny negatives can round up to exactly 360
    az = np.where(az >= 360.0, 0.0, az)
    return np.stack([el, az], axis=1)
