class DtGnssError(Exception):
    """Base class for all package errors."""


class ValidationError(DtGnssError, ValueError):
    """Input violates a documented invariant or file schema."""


class CoverageError(DtGnssError):
    """Requested epoch is not covered by the ephemeris table."""


class InsufficientSatellitesError(DtGnssError):
    """Fewer than four pseudoranges are available for a fix."""


class SingularGeometryError(DtGnssError):
    """Normal matrix of the positioning problem is numerically singular."""


class CorrectionDatabaseError(DtGnssError):
    """Correction database file is corrupt or has an unsupported version."""
