"""Command-line workflow.

    dtgnss gen-scene --preset canyon
    dtgnss gen-constellation --count 10 --epochs 240 --scene out/scene.json
    dtgnss gen-track --scene out/scene.json
    dtgnss build-db --scene out/scene.json --ephemeris out/ephemeris.csv
    dtgnss simulate-rx --scene ... --ephemeris ... --track out/track.csv
    dtgnss correct --db out/correction_db.txt --fixes out/fixes.csv
    dtgnss evaluate --scene ... --ephemeris ... --track ... [--db ...]

Exit status: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .correction import build_database, correct_position, load_database, save_database
from .evaluation import FIX_HEADER, _write_atomic, load_track, run_pipeline, simulate_receiver
from .exceptions import CorrectionDatabaseError, DtGnssError, ValidationError
from .measurement import NoiseModel
from .scene import GridSpec, load_scene, scene_from_dict
from .synthetic import DEFAULT_ORIGIN, PRESETS, gen_constellation, gen_scene, sidewalk_track, write_track
from .ephemeris import load_ephemeris

log = logging.getLogger("dtgnss")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _out(args, name, explicit=None) -> Path:
    path = Path(explicit) if explicit else Path(args.output_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _origin(args):
    if getattr(args, "scene", None):
        o = load_scene(args.scene).origin
        return (o.latitude, o.longitude, o.height)
    return (args.lat, args.lon, args.alt)


def cmd_gen_scene(args):
    data = gen_scene(args.preset, args.street_width, args.height, args.length, args.block_length,
                     args.depth, args.margin, args.gap, (args.lat, args.lon, args.alt),
                     args.resolution, args.receiver_height)
    path = _out(args, "scene.json", args.output)
    _write_atomic(path, json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path} ({len(data['buildings'])} buildings)")


def cmd_gen_constellation(args):
    table = gen_constellation(args.count, args.epochs, args.step, _origin(args), args.start, args.mask)
    path = _out(args, "ephemeris.csv", args.output)
    tmp = path.with_suffix(path.suffix + ".tmp")
    table.write(tmp)
    tmp.replace(path)
    print(f"wrote {path} ({len(table)} records)")


def cmd_gen_track(args):
    data = json.loads(Path(args.scene).read_text(encoding="utf-8"))
    track = []
    for k in range(args.passes):
        track += sidewalk_track(data, t0=args.t0 + k * args.interval, speed=args.speed, rate=args.rate,
                                offset=args.offset)
    path = _out(args, "track.csv", args.output)
    tmp = path.with_suffix(path.suffix + ".tmp")
    write_track(tmp, track)
    tmp.replace(path)
    print(f"wrote {path} ({len(track)} epochs)")


def _grid(scene, args) -> GridSpec:
    if scene.grid is None:
        raise ValidationError("scene file has no 'grid' section")
    return scene.grid


def cmd_build_db(args):
    scene = load_scene(args.scene)
    table = load_ephemeris(args.ephemeris)
    db = build_database(scene, _grid(scene, args), table, args.slot_length, args.step, n_jobs=args.n_jobs)
    path = _out(args, "correction_db.txt", args.output)
    save_database(db, path)
    print(f"wrote {path} ({len(db.entries)} entries over {len(db.slots)} slots)")


def _noise(args) -> NoiseModel:
    return NoiseModel("gaussian", args.noise_sigma, args.seed) if args.noise_sigma > 0 else NoiseModel()


def cmd_simulate_rx(args):
    scene = load_scene(args.scene)
    table = load_ephemeris(args.ephemeris)
    track = load_track(args.track)
    lines = [",".join(FIX_HEADER)]
    for t, truth, fix, n_sats in simulate_receiver(scene, table, track, _noise(args), args.solver):
        if fix is None:
            lines.append(f"{t:.3f},nan,nan,nan,nan,{n_sats},0")
        else:
            e, n, u = fix.position
            lines.append(f"{t:.3f},{e:.4f},{n:.4f},{u:.4f},{fix.clock_bias:.4f},{n_sats},{int(fix.converged)}")
    path = _out(args, "fixes.csv", args.output)
    _write_atomic(path, "\n".join(lines) + "\n")
    print(f"wrote {path} ({len(track)} epochs)")


def cmd_correct(args):
    import csv

    db = load_database(args.db)
    lines = ["epoch_s,raw_e,raw_n,raw_u,corr_e,corr_n,corr_u,applied"]
    applied_count = 0
    with open(args.fixes, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"epoch_s", "east_m", "north_m", "up_m"} - set(reader.fieldnames or [])
        if missing:
            raise ValidationError(f"{args.fixes}: missing column(s) {sorted(missing)}")
        for row in reader:
            t = float(row["epoch_s"])
            raw = (float(row["east_m"]), float(row["north_m"]), float(row["up_m"]))
            if any(v != v for v in raw):
                lines.append(f"{t:.3f},nan,nan,nan,nan,nan,nan,0")
                continue
            corr, applied, _ = correct_position(raw, t, db)
            applied_count += applied
            lines.append(f"{t:.3f},{raw[0]:.4f},{raw[1]:.4f},{raw[2]:.4f},"
                         f"{corr[0]:.4f},{corr[1]:.4f},{corr[2]:.4f},{int(applied)}")
    path = _out(args, "corrected.csv", args.output)
    _write_atomic(path, "\n".join(lines) + "\n")
    print(f"wrote {path} ({applied_count} of {len(lines) - 1} fixes corrected)")


def cmd_evaluate(args):
    scene = load_scene(args.scene)
    table = load_ephemeris(args.ephemeris)
    track = load_track(args.track)
    db = load_database(args.db) if args.db else None
    res = run_pipeline(scene, table, track, db=db, noise=_noise(args), solver=args.solver,
                       slot_length=args.slot_length, step=args.step, output_dir=args.output_dir,
                       n_jobs=args.n_jobs)
    print(res.stats_table(args.decimals))
    print(f"epochs: {len(res.records)}  corrected: {res.n_applied}  "
          f"no correction: {len(res.records) - res.n_applied}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dtgnss", description="Digital-twin GNSS correction workflow")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=0, help="seed for the noise stream")
    p.add_argument("--config", help="JSON file with option defaults, globally or per command")
    p.add_argument("--output-dir", default=".", help="directory for generated files")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-scene", help="write a synthetic scene file")
    s.add_argument("--preset", choices=PRESETS, default="canyon")
    s.add_argument("--street-width", type=float, default=20.0)
    s.add_argument("--height", type=float, default=40.0)
    s.add_argument("--length", type=float, default=120.0)
    s.add_argument("--block-length", type=float, default=None)
    s.add_argument("--depth", type=float, default=15.0)
    s.add_argument("--margin", type=float, default=15.0)
    s.add_argument("--gap", type=float, default=6.0)
    s.add_argument("--resolution", type=float, default=3.0)
    s.add_argument("--receiver-height", type=float, default=1.0)
    s.add_argument("--lat", type=float, default=DEFAULT_ORIGIN[0])
    s.add_argument("--lon", type=float, default=DEFAULT_ORIGIN[1])
    s.add_argument("--alt", type=float, default=DEFAULT_ORIGIN[2])
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_gen_scene)

    s = sub.add_parser("gen-constellation", help="write a synthetic ephemeris table")
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--epochs", type=int, default=240)
    s.add_argument("--step", type=float, default=30.0)
    s.add_argument("--start", type=float, default=0.0)
    s.add_argument("--mask", type=float, default=15.0, help="minimum elevation at the origin (deg)")
    s.add_argument("--scene", help="take the origin from this scene file")
    s.add_argument("--lat", type=float, default=DEFAULT_ORIGIN[0])
    s.add_argument("--lon", type=float, default=DEFAULT_ORIGIN[1])
    s.add_argument("--alt", type=float, default=DEFAULT_ORIGIN[2])
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_gen_constellation)

    s = sub.add_parser("gen-track", help="write a sidewalk walking track")
    s.add_argument("--scene", required=True)
    s.add_argument("--t0", type=float, default=5.0)
    s.add_argument("--passes", type=int, default=1)
    s.add_argument("--interval", type=float, default=600.0, help="seconds between pass starts")
    s.add_argument("--speed", type=float, default=1.4)
    s.add_argument("--rate", type=float, default=1.0)
    s.add_argument("--offset", type=float, default=2.0, help="distance from the building line (m)")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_gen_track)

    def timing(sp):
        sp.add_argument("--slot-length", type=float, default=300.0)
        sp.add_argument("--step", type=float, default=30.0, help="epoch sampling step inside a slot")
        sp.add_argument("--n-jobs", type=int, default=1)

    s = sub.add_parser("build-db", help="simulate the grid and write the correction database")
    s.add_argument("--scene", required=True)
    s.add_argument("--ephemeris", required=True)
    timing(s)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_build_db)

    def receiver(sp):
        sp.add_argument("--scene", required=True)
        sp.add_argument("--ephemeris", required=True)
        sp.add_argument("--track", required=True)
        sp.add_argument("--solver", choices=("wls", "ols"), default="wls")
        sp.add_argument("--noise-sigma", type=float, default=0.0)

    s = sub.add_parser("simulate-rx", help="simulate baseline fixes along a track")
    receiver(s)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_simulate_rx)

    s = sub.add_parser("correct", help="apply a correction database to fixes")
    s.add_argument("--db", required=True)
    s.add_argument("--fixes", required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_correct)

    s = sub.add_parser("evaluate", help="baseline vs corrected error statistics")
    receiver(s)
    s.add_argument("--db", help="existing database; built from the inputs when omitted")
    s.add_argument("--decimals", type=int, default=3)
    timing(s)
    s.set_defaults(func=cmd_evaluate)

    p._subparsers_by_name = sub.choices
    return p


def _apply_config(parser, path):
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    subs = parser._subparsers_by_name
    for key, value in cfg.items():
        if key in subs:
            if not isinstance(value, dict):
                raise ValidationError(f"config section {key!r} must be an object")
            subs[key].set_defaults(**{k.replace("-", "_"): v for k, v in value.items()})
        else:
            parser.set_defaults(**{key.replace("-", "_"): value})


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        known = argparse.ArgumentParser(add_help=False)
        known.add_argument("--config")
        cfg_args, _ = known.parse_known_args(argv)
        if cfg_args.config:
            _apply_config(parser, cfg_args.config)
        args = parser.parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValidationError, CorrectionDatabaseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DtGnssError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
