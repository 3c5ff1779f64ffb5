"""Receiver simulation along a track, correction, and 2D error statistics."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .correction import build_database, correct_position
from .ephemeris import satellites_at
from .estimator import grid_init, solve_ols, solve_wls
from .exceptions import InsufficientSatellitesError, SingularGeometryError, ValidationError
from .geo import EnuPoint
from .measurement import NoiseModel, simulate_cell_epoch
from .scene import GridCell

REPORT_HEADER = ["epoch_s", "truth_e", "truth_n", "raw_e", "raw_n", "raw_err2d",
                 "corr_e", "corr_n", "corr_err2d", "applied", "sats"]
FIX_HEADER = ["epoch_s", "east_m", "north_m", "up_m", "clock_m", "sats", "converged"]
STATS_COLUMNS = ("Mean", "STD", "RMS", "Max", "Min")


def horizontal_error(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    std: float
    rms: float
    max: float
    min: float

    def as_tuple(self):
        return (self.mean, self.std, self.rms, self.max, self.min)


def error_stats(errors) -> ErrorStats:
    """Population statistics of a series of 2D errors."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValidationError("error_stats needs at least one value")
    mean = float(np.mean(e))
    return ErrorStats(
        mean=mean,
        std=float(np.std(e)),
        rms=float(np.sqrt(np.mean(e * e))),
        max=float(np.max(e)),
        min=float(np.min(e)),
    )


def format_stats_table(rows: dict, decimals: int = 3) -> str:
    """Plain-text table with the columns Mean, STD, RMS, Max, Min."""
    name_w = max([len("Algorithm")] + [len(n) for n in rows])
    vals = {n: [f"{v:.{decimals}f}" for v in s.as_tuple()] for n, s in rows.items()}
    col_w = max([len(c) for c in STATS_COLUMNS] + [len(v) for vs in vals.values() for v in vs])
    lines = ["Algorithm".ljust(name_w) + "".join(c.rjust(col_w + 2) for c in STATS_COLUMNS)]
    for n, vs in vals.items():
        lines.append(n.ljust(name_w) + "".join(v.rjust(col_w + 2) for v in vs))
    return "\n".join(lines)


@dataclass(frozen=True)
class TrajectoryRecord:
    epoch: float
    truth: EnuPoint
    raw: EnuPoint
    corrected: EnuPoint
    applied: bool
    sats: int

    @property
    def raw_error(self) -> float:
        return horizontal_error(self.raw, self.truth)

    @property
    def corrected_error(self) -> float:
        return horizontal_error(self.corrected, self.truth)


def load_track(path) -> list[tuple[float, EnuPoint]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["epoch_s", "east_m", "north_m", "up_m"]:
            raise ValidationError(f"{path}: header must be epoch_s,east_m,north_m,up_m")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, e, n, u = map(float, row)
            except ValueError as exc:
                raise ValidationError(f"{path}: row {lineno}: {exc}") from exc
            if out and not t > out[-1][0]:
                raise ValidationError(f"{path}: row {lineno}: epochs must be strictly increasing")
            out.append((t, EnuPoint(e, n, u)))
    return out


def simulate_receiver(scene, table, track, noise: Optional[NoiseModel] = None, solver="wls", grid=None):
    """Simulate a fix at each track epoch from measurements taken at the truth.

    Returns a list of ``(epoch, truth, fix_or_None, n_sats)``; the fix is
    ``None`` when fewer than four satellites are received or the geometry is
    singular.
    """
    if solver not in ("wls", "ols"):
        raise ValidationError(f"solver must be 'wls' or 'ols', got {solver!r}")
    noise = noise or NoiseModel()
    grid = grid or scene.grid
    init = grid_init(grid, scene)
    out = []
    for t, truth in track:
        meas = simulate_cell_epoch(GridCell((-1, -1), EnuPoint(*truth)), satellites_at(table, t), scene, noise)
        try:
            fix = solve_wls(meas, None, init) if solver == "wls" else solve_ols(meas, init)
        except (InsufficientSatellitesError, SingularGeometryError):
            fix = None
        out.append((t, EnuPoint(*truth), fix, len(meas)))
    return out


@dataclass
class PipelineResult:
    records: list
    raw_stats: Optional[ErrorStats]
    corrected_stats: Optional[ErrorStats]
    database: object

    @property
    def n_applied(self) -> int:
        return sum(r.applied for r in self.records)

    def stats_table(self, decimals: int = 3) -> str:
        rows = {}
        if self.raw_stats is not None:
            rows["Uncorrected"] = self.raw_stats
        if self.corrected_stats is not None:
            rows["DT-corrected"] = self.corrected_stats
        return format_stats_table(rows, decimals)


def _write_atomic(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.4f}"


def report_text(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in records:
        w.writerow([f"{r.epoch:.3f}", _fmt(r.truth[0]), _fmt(r.truth[1]), _fmt(r.raw[0]), _fmt(r.raw[1]),
                    _fmt(r.raw_error), _fmt(r.corrected[0]), _fmt(r.corrected[1]), _fmt(r.corrected_error),
                    int(r.applied), r.sats])
    return buf.getvalue()


def run_pipeline(scene, table, track, db=None, noise: Optional[NoiseModel] = None, solver="wls",
                 slot_length=300.0, step=30.0, output_dir=None, n_jobs=1) -> PipelineResult:
    """Baseline fix vs corrected fix along a track.

    Builds the database from ``scene``/``table`` when ``db`` is not given.
    Epochs without a usable baseline fix appear in the report with NaN
    positions and are left out of the statistics. With ``output_dir`` the
    report, an error series and the stats table are written there.
    """
    if scene.grid is None and db is None:
        raise ValidationError("scene has no grid section and no database was given")
    if db is None:
        db = build_database(scene, scene.grid, table, slot_length, step, n_jobs=n_jobs)
    nan = EnuPoint(math.nan, math.nan, math.nan)
    records = []
    for t, truth, fix, n_sats in simulate_receiver(scene, table, track, noise, solver, db.grid):
        if fix is None:
            records.append(TrajectoryRecord(t, truth, nan, nan, False, n_sats))
            continue
        corrected, applied, _ = correct_position(fix.position, t, db)
        records.append(TrajectoryRecord(t, truth, fix.position, corrected, applied, n_sats))
    usable = [r for r in records if math.isfinite(r.raw_error)]
    raw_stats = error_stats([r.raw_error for r in usable]) if usable else None
    corr_stats = error_stats([r.corrected_error for r in usable]) if usable else None
    result = PipelineResult(records, raw_stats, corr_stats, db)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_atomic(out / "report.csv", report_text(records))
        series = ["epoch_s,raw_err2d,corr_err2d,applied"] + [
            f"{r.epoch:.3f},{_fmt(r.raw_error)},{_fmt(r.corrected_error)},{int(r.applied)}" for r in records
        ]
        _write_atomic(out / "error_series.csv", "\n".join(series) + "\n")
        _write_atomic(out / "stats.txt", result.stats_table() + "\n")
    return result
