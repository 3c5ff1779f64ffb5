"""Digital-twin-aided GNSS positioning correction.

Simulates NLOS-biased fixes for a lattice of virtual receivers inside a 3D
urban scene, turns the simulated bias field into a correction database and
uses it to rectify receiver fixes.
"""

__version__ = "0.1.0"

from .exceptions import (
    CorrectionDatabaseError,
    CoverageError,
    DtGnssError,
    InsufficientSatellitesError,
    SingularGeometryError,
    ValidationError,
)
from .geo import (
    EcefPoint,
    EnuPoint,
    GeodeticPoint,
    SurfacePolygon,
    ecef_to_enu,
    enu_to_ecef,
    geodetic_to_ecef,
    mirror_across_plane,
    ray_intersect_polygon,
)
from .scene import Building, GridCell, GridSpec, Scene, Terrain, build_grid, load_scene, snap_to_cell
from .ephemeris import EphemerisTable, SatelliteEpoch, load_ephemeris, satellites_at, slot_of_epoch
from .raytrace import ReceptionPath, classify_los, simulate_reception, trace_single_reflection
from .measurement import NoiseModel, SimulatedMeasurement, simulate_cell_epoch, simulate_pseudorange
from .estimator import PositionSolution, solve_ols, solve_wls
from .correction import (
    CorrectionDatabase,
    CorrectionEntry,
    DigitalTwinCorrector,
    build_database,
    correct_position,
    load_database,
    save_database,
)
from .evaluation import ErrorStats, error_stats, horizontal_error, run_pipeline

__all__ = [
    "Building",
    "CorrectionDatabase",
    "CorrectionDatabaseError",
    "CorrectionEntry",
    "CoverageError",
    "DigitalTwinCorrector",
    "DtGnssError",
    "EcefPoint",
    "EnuPoint",
    "EphemerisTable",
    "ErrorStats",
    "GeodeticPoint",
    "GridCell",
    "GridSpec",
    "InsufficientSatellitesError",
    "NoiseModel",
    "PositionSolution",
    "ReceptionPath",
    "SatelliteEpoch",
    "Scene",
    "SimulatedMeasurement",
    "SingularGeometryError",
    "SurfacePolygon",
    "Terrain",
    "ValidationError",
    "build_database",
    "build_grid",
    "classify_los",
    "correct_position",
    "ecef_to_enu",
    "enu_to_ecef",
    "error_stats",
    "geodetic_to_ecef",
    "horizontal_error",
    "load_database",
    "load_ephemeris",
    "load_scene",
    "mirror_across_plane",
    "ray_intersect_polygon",
    "run_pipeline",
    "satellites_at",
    "save_database",
    "simulate_cell_epoch",
    "simulate_pseudorange",
    "simulate_reception",
    "slot_of_epoch",
    "snap_to_cell",
    "solve_ols",
    "solve_wls",
    "trace_single_reflection",
]
