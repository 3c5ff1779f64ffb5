"""Correction database built from grid-wide simulated fixes.

Every candidate receiver ``x_k`` yields a simulated, NLOS-biased fix
``x_hat = x_k + eps``. Fixes are grouped by the grid cell they land in (per
time slot); the correction stored for a landing cell is minus the mean bias of
the fixes that landed there. A measured fix is corrected by adding the
correction of the cell it falls in.

``DigitalTwinCorrector`` exposes the same computation as a scikit-learn
transformer: ``fit`` learns the database from (simulated fix, true position)
pairs and ``transform`` corrects measured fixes.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import __version__
from .ephemeris import SlotIndex, satellites_at, slot_of_epoch
from .estimator import gauss_newton, grid_init
from .exceptions import CorrectionDatabaseError, CoverageError, ValidationError
from .geo import EnuPoint, ecef_to_enu_array
from .raytrace import trace_batch
from .scene import GridSpec, build_grid, snap_many, snap_to_cell

FORMAT_VERSION = 1
_MAGIC = "# dtgnss correction database"
_RECORD_HEADER = "slot,col,row,dx,dy,dz,support,contributors"


@dataclass(frozen=True)
class SimulatedFix:
    cell: tuple
    epoch: float
    solution: EnuPoint
    bias: tuple
    converged: bool = True


@dataclass(frozen=True)
class CorrectionEntry:
    cell: tuple
    slot: int
    correction: tuple
    support: int
    contributors: tuple = ()


@dataclass
class CorrectionDatabase:
    grid: GridSpec
    slot_length: float
    entries: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def lookup(self, slot: int, cell) -> Optional[CorrectionEntry]:
        if cell is None:
            return None
        return self.entries.get((slot, cell[0], cell[1]))

    @property
    def slots(self) -> list[int]:
        return sorted({k[0] for k in self.entries})

    def __eq__(self, other):
        if not isinstance(other, CorrectionDatabase):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.slot_length == other.slot_length
            and self.entries == other.entries
            and self.meta == other.meta
        )


def _mean_correction(biases) -> tuple:
    # fsum is exactly rounded, so the result does not depend on summation order
    k = len(biases)
    return tuple(-math.fsum(b[i] for b in biases) / k for i in range(3))


def sampled_epochs(slot: SlotIndex, step: float) -> list[float]:
    ratio = slot.slot_length / step
    if not step > 0 or abs(ratio - round(ratio)) > 1e-9:
        raise ValidationError(f"step {step} must divide the slot length {slot.slot_length}")
    return [slot.start + j * step for j in range(int(round(ratio)))]


def simulate_slot_solutions(scene, grid: GridSpec, table, slot: SlotIndex, step: float = 30.0, cells=None):
    """Simulate one noise-free OLS fix per candidate cell and sampled epoch.

    Returns ``(fixes, skipped)``: the converged fixes in (epoch, cell) order
    and the number of cell-epochs dropped for having fewer than four received
    satellites, a singular geometry or no convergence.
    """
    if cells is None:
        cells = build_grid(scene, grid)
    epochs = sampled_epochs(slot, step)
    sat_lists = [satellites_at(table, t) for t in epochs]  # raises CoverageError first
    if not cells:
        return [], 0
    centers = np.array([c.center for c in cells], dtype=float)
    init = grid_init(grid, scene).state
    fixes, skipped = [], 0
    for t, sats in zip(epochs, sat_lists):
        sat_enu = ecef_to_enu_array(np.array([s.position for s in sats], dtype=float), scene.origin)
        tr = trace_batch(centers, sat_enu, scene.surface_set)
        received = tr.received
        enough = received.sum(axis=1) >= 4
        rows = np.nonzero(enough)[0]
        skipped += int((~enough).sum())
        if rows.size == 0:
            continue
        rho = np.where(received, tr.geometric_range + np.where(received, tr.delay, 0.0), 0.0)[rows]
        x, _, conv, sing = gauss_newton(
            sat_enu, rho, received[rows].astype(float), np.broadcast_to(init, (rows.size, 4))
        )
        ok = conv & ~sing
        skipped += int((~ok).sum())
        for i in np.nonzero(ok)[0]:
            c = cells[rows[i]]
            sol = x[i, :3]
            fixes.append(
                SimulatedFix(c.index, float(t), EnuPoint(*map(float, sol)),
                             tuple(float(v) for v in sol - np.asarray(c.center)), True)
            )
    return fixes, skipped


def accumulate_corrections(fixes, grid: GridSpec, slot: SlotIndex, return_dropped: bool = False):
    """Group fixes by landing cell; correction = minus the mean bias.

    Fixes that land outside the grid or did not converge are dropped.
    Entries come back sorted by cell index.
    """
    groups = defaultdict(list)
    dropped = 0
    for f in fixes:
        if slot_of_epoch(f.epoch, slot.slot_length).slot != slot.slot:
            raise ValidationError(f"fix at epoch {f.epoch} is not in slot {slot.slot}")
        target = snap_to_cell(f.solution, grid) if f.converged else None
        if target is None:
            dropped += 1
            continue
        groups[target].append(f)
    entries = []
    for cell in sorted(groups):
        members = sorted(groups[cell], key=lambda f: (f.epoch, f.cell))
        entries.append(
            CorrectionEntry(
                cell=cell,
                slot=slot.slot,
                correction=_mean_correction([f.bias for f in members]),
                support=len(members),
                contributors=tuple((f.cell[0], f.cell[1], f.epoch) for f in members),
            )
        )
    return (entries, dropped) if return_dropped else entries


def covered_slots(table, slot_length: float, step: float) -> list[SlotIndex]:
    """Slots all of whose sampled epochs resolve in the ephemeris table."""
    first, last = table.coverage
    out = []
    for s in range(int(first // slot_length), int(last // slot_length) + 1):
        slot = SlotIndex(s, slot_length)
        if s >= slot.total_slots:
            break
        try:
            for t in sampled_epochs(slot, step):
                table.nearest_epoch(t)
        except CoverageError:
            continue
        out.append(slot)
    return out


def _build_slot(scene, grid, table, slot, step, cells):
    fixes, skipped = simulate_slot_solutions(scene, grid, table, slot, step, cells)
    entries, dropped = accumulate_corrections(fixes, grid, slot, return_dropped=True)
    stats = {
        "cells": len(cells),
        "epochs": len(sampled_epochs(slot, step)),
        "contributors": sum(e.support for e in entries),
        "dropped": dropped,
        "skipped": skipped,
    }
    return slot.slot, entries, stats, fixes


def build_database(scene, grid: GridSpec, table, slot_length: float = 300.0, step: float = 30.0,
                   n_jobs: int = 1, return_fixes: bool = False):
    """Simulate every covered slot and collect its corrections.

    With ``return_fixes=True`` the simulated fixes are returned alongside the
    database as ``(db, fixes)``.
    """
    slots = covered_slots(table, slot_length, step)
    if not slots:
        raise CoverageError("ephemeris table does not fully cover any time slot")
    cells = build_grid(scene, grid)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_build_slot)(scene, grid, table, slot, step, cells) for slot in slots
    )
    entries, slot_stats, all_fixes = {}, {}, []
    for s, slot_entries, stats, fixes in sorted(results, key=lambda r: r[0]):
        for e in slot_entries:
            entries[(s, e.cell[0], e.cell[1])] = e
        slot_stats[str(s)] = stats
        all_fixes.extend(fixes)
    meta = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "scene_hash": scene.content_hash(),
        "ephemeris_hash": table.content_hash(),
        "step": float(step),
        "slots": slot_stats,
    }
    db = CorrectionDatabase(grid, float(slot_length), entries, meta)
    return (db, all_fixes) if return_fixes else db


def correct_position(measured, epoch: float, db: CorrectionDatabase):
    """Apply the stored correction for the cell and slot of a measured fix.

    Returns ``(corrected, applied, entry)``; without a matching entry the fix
    is returned unchanged with ``applied=False``.
    """
    measured = EnuPoint(*map(float, measured))
    entry = db.lookup(slot_of_epoch(epoch, db.slot_length).slot, snap_to_cell(measured, db.grid))
    if entry is None:
        return measured, False, None
    return EnuPoint(*(m + c for m, c in zip(measured, entry.correction))), True, entry


def _fmt(v: float) -> str:
    return f"{round(v, 6) + 0.0:.6f}"


def _serialize(db: CorrectionDatabase) -> str:
    header = dict(db.meta)
    header.setdefault("format_version", FORMAT_VERSION)
    header["grid"] = db.grid.to_dict()
    header["slot_length"] = db.slot_length
    lines = [_MAGIC, "header " + json.dumps(header, sort_keys=True, separators=(",", ":")), _RECORD_HEADER]
    for key in sorted(db.entries):
        e = db.entries[key]
        contrib = ";".join(f"{c}:{r}@{t:.3f}" for c, r, t in e.contributors)
        lines.append(",".join([str(e.slot), str(e.cell[0]), str(e.cell[1]), *map(_fmt, e.correction),
                               str(e.support), contrib]))
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode()).hexdigest()
    return body + f"checksum,sha256:{digest}\n"


def save_database(db: CorrectionDatabase, path) -> None:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    text = _serialize(db)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_database(path) -> CorrectionDatabase:
    text = Path(path).read_text(encoding="utf-8")
    body, sep, tail = text.rstrip("\n").rpartition("\n")
    if not sep or not tail.startswith("checksum,sha256:"):
        raise CorrectionDatabaseError(f"{path}: missing checksum line")
    body += "\n"
    if hashlib.sha256(body.encode()).hexdigest() != tail.split(":", 1)[1]:
        raise CorrectionDatabaseError(f"{path}: checksum mismatch, file is corrupt")
    lines = body.rstrip("\n").split("\n")
    if len(lines) < 3 or lines[0] != _MAGIC or not lines[1].startswith("header "):
        raise CorrectionDatabaseError(f"{path}: not a correction database")
    header = json.loads(lines[1][len("header "):])
    if header.get("format_version") != FORMAT_VERSION:
        raise CorrectionDatabaseError(
            f"{path}: unsupported format version {header.get('format_version')!r} (expected {FORMAT_VERSION})"
        )
    grid = GridSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in header.pop("grid").items()})
    slot_length = float(header.pop("slot_length"))
    entries = {}
    for lineno, line in enumerate(lines[3:], start=4):
        parts = line.split(",")
        try:
            slot, col, row = int(parts[0]), int(parts[1]), int(parts[2])
            corr = tuple(float(v) for v in parts[3:6])
            support = int(parts[6])
            contrib = tuple(
                (int(c), int(r), float(t))
                for item in parts[7].split(";") if item
                for (c, rest) in [item.split(":")]
                for (r, t) in [rest.split("@")]
            )
        except (ValueError, IndexError) as exc:
            raise CorrectionDatabaseError(f"{path}: line {lineno}: malformed record") from exc
        entries[(slot, col, row)] = CorrectionEntry((col, row), slot, corr, support, contrib)
    return CorrectionDatabase(grid, slot_length, entries, header)


class DigitalTwinCorrector(TransformerMixin, BaseEstimator):
    """Grid correction learned from simulated (biased fix, true position) pairs.

    Parameters
    ----------
    east, north : tuple of float
        Grid bounds in the local ENU frame (meters).
    resolution : float, default=3.0
        Grid cell size in meters.
    slot_length : float, default=300.0
        Length of a time slot in seconds; corrections are kept per slot.

    Attributes
    ----------
    database_ : CorrectionDatabase
        The learned corrections.
    n_dropped_ : int
        Training fixes that landed outside the grid.

    Examples
    --------
    >>> import numpy as np
    >>> X = np.array([[0.0, 10.5, 4.5, 1.0]])   # epoch, east, north, up
    >>> y = np.array([[4.5, 4.5, 1.0]])         # where the receiver really was
    >>> corr = DigitalTwinCorrector(east=(0, 30), north=(0, 30)).fit(X, y)
    >>> corr.transform(np.array([[10.0, 11.0, 5.0, 1.0]]))
    array([[5., 5., 1.]])
    """

    def __init__(self, east=(0.0, 30.0), north=(0.0, 30.0), resolution=3.0, slot_length=300.0):
        self.east = east
        self.north = north
        self.resolution = resolution
        self.slot_length = slot_length

    def _grid(self) -> GridSpec:
        return GridSpec(tuple(self.east), tuple(self.north), self.resolution)

    def fit(self, X, y):
        """Learn corrections.

        Parameters
        ----------
        X : array-like of shape (n_samples, 4)
            Simulated fixes as ``[epoch_s, east, north, up]``.
        y : array-like of shape (n_samples, 3)
            True candidate positions the fixes were simulated at.
        """
        X = check_array(X, dtype=float)
        y = check_array(y, dtype=float)
        if X.shape[1] != 4 or y.shape != (len(X), 3):
            raise ValidationError(f"expected X (n, 4) and y (n, 3), got {X.shape} and {y.shape}")
        grid = self._grid()
        origin_idx, _ = snap_many(y, grid)
        by_slot = defaultdict(list)
        for row, truth, idx in zip(X, y, origin_idx):
            epoch = float(row[0])
            sol = row[1:4]
            by_slot[slot_of_epoch(epoch, self.slot_length).slot].append(
                SimulatedFix(tuple(int(i) for i in idx), epoch, EnuPoint(*map(float, sol)),
                             tuple(float(v) for v in sol - truth))
            )
        entries, dropped = {}, 0
        for s in sorted(by_slot):
            slot_entries, d = accumulate_corrections(by_slot[s], grid, SlotIndex(s, self.slot_length), True)
            dropped += d
            entries.update({(s, e.cell[0], e.cell[1]): e for e in slot_entries})
        self.database_ = CorrectionDatabase(grid, float(self.slot_length), entries, {"format_version": FORMAT_VERSION})
        self.n_dropped_ = dropped
        self.n_features_in_ = 4
        return self

    @classmethod
    def from_database(cls, db: CorrectionDatabase) -> "DigitalTwinCorrector":
        est = cls(db.grid.east, db.grid.north, db.grid.resolution, db.slot_length)
        est.database_ = db
        est.n_dropped_ = sum(s.get("dropped", 0) for s in db.meta.get("slots", {}).values())
        est.n_features_in_ = 4
        return est

    def correct(self, X):
        """Return ``(corrected (n, 3), applied (n,) bool)`` for rows ``[epoch, e, n, u]``."""
        check_is_fitted(self, "database_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 4:
            raise ValidationError(f"expected X with 4 columns, got {X.shape[1]}")
        out = X[:, 1:4].copy()
        applied = np.zeros(len(X), dtype=bool)
        for i, row in enumerate(X):
            corrected, applied[i], _ = correct_position(row[1:4], float(row[0]), self.database_)
            out[i] = corrected
        return out, applied

    def transform(self, X):
        return self.correct(X)[0]
