"""Simulated pseudoranges: geometric range plus reflection delay plus noise."""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ValidationError
from .geo import EcefPoint, EnuPoint, ecef_to_enu_array
from .raytrace import LOS, NLOS, ReceptionPath, trace_batch

MEASUREMENT_LOG_HEADER = ["epoch_s", "cell_col", "cell_row", "sat_id", "rho_m", "kind", "d_m"]


@dataclass(frozen=True)
class NoiseModel:
    """Additive pseudorange error.

    Gaussian draws are keyed by ``(seed, *key)`` so that the value for a given
    cell/epoch/satellite does not depend on evaluation order.
    """

    mode: str = "none"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "gaussian"):
            raise ValidationError(f"noise mode must be 'none' or 'gaussian', got {self.mode!r}")
        if not self.sigma >= 0:
            raise ValidationError(f"noise sigma must be >= 0, got {self.sigma}")

    def draw(self, key=()) -> float:
        if self.mode == "none" or self.sigma == 0.0:
            return 0.0
        entropy = [int(self.seed) & 0xFFFFFFFF] + [_key_word(k) for k in key]
        rng = np.random.default_rng(np.random.SeedSequence(entropy))
        return float(rng.normal(0.0, self.sigma))


def _key_word(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    if isinstance(k, float):
        return int(round(k * 1000.0)) & 0xFFFFFFFFFFFF
    return int(k) & 0xFFFFFFFFFFFF


@dataclass(frozen=True)
class SimulatedMeasurement:
    sat_id: str
    sat_position: EcefPoint
    pseudorange: float
    path: ReceptionPath


def simulate_pseudorange(path: ReceptionPath, noise: NoiseModel, key=()) -> float:
    return path.range + path.extra_delay + noise.draw(key)


def simulate_cell_epoch(cell, sats, scene, noise: NoiseModel) -> list[SimulatedMeasurement]:
    """Pseudoranges at one grid cell for one epoch's satellites.

    ``cell`` is a ``GridCell``; unreceived satellites are left out and the
    result is ordered by satellite id.
    """
    sats = sorted(sats, key=lambda s: s.sat_id)
    if not sats:
        return []
    receiver = np.asarray(cell.center, dtype=float)
    sat_ecef = np.array([s.position for s in sats], dtype=float)
    sat_enu = ecef_to_enu_array(sat_ecef, scene.origin)
    tr = trace_batch(receiver[None, :], sat_enu, scene.surface_set)
    out = []
    for j, s in enumerate(sats):
        if not tr.received[0, j]:
            continue
        if tr.los[0, j]:
            path = ReceptionPath(LOS, float(tr.geometric_range[0, j]))
        else:
            path = ReceptionPath(
                NLOS,
                float(tr.geometric_range[0, j]),
                float(tr.delay[0, j]),
                int(tr.surface[0, j]),
                EnuPoint(*tr.point[0, j]),
            )
        rho = simulate_pseudorange(path, noise, key=(*cell.index, s.epoch, s.sat_id))
        out.append(SimulatedMeasurement(s.sat_id, EcefPoint(*s.position), rho, path))
    return out


def write_measurement_log(path, rows):
    """Write ``(epoch, cell_index, SimulatedMeasurement)`` triples as delimited text."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_LOG_HEADER)
        for epoch, index, m in rows:
            w.writerow(
                [f"{epoch:.3f}", index[0], index[1], m.sat_id, f"{m.pseudorange:.6f}", m.path.kind, f"{m.path.extra_delay:.6f}"]
            )
