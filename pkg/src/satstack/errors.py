"""Exception hierarchy shared by all satstack modules.

Every error raised on a documented failure path derives from
:class:`SatstackError`, so callers (and the CLI) can catch one type.
"""


class SatstackError(Exception):
    pass


# --- raster grids ---------------------------------------------------------

class CrsMismatchError(SatstackError):
    pass


class LatticeMisalignedError(SatstackError):
    pass


class EmptyIntersectionError(SatstackError):
    pass


class InvalidBoundsError(SatstackError, ValueError):
    pass


class GeorefMismatchError(SatstackError):
    pass


class NoDateTokenError(SatstackError, ValueError):
    pass


class DayOutOfRangeError(SatstackError, ValueError):
    pass


class RaggedStackError(SatstackError, ValueError):
    pass


class InvalidRoiError(SatstackError, ValueError):
    pass


# --- GeoTIFF I/O ----------------------------------------------------------

class MalformedTiffError(SatstackError):
    pass


class UnsupportedProfileError(SatstackError):
    pass


class MissingGeoreferencingError(SatstackError):
    pass


# --- projections ----------------------------------------------------------

class LatitudeOutOfRangeError(SatstackError, ValueError):
    pass


class OutOfDomainError(SatstackError, ValueError):
    pass


class UnsupportedCrsError(SatstackError):
    pass


# --- catalog --------------------------------------------------------------

class MissingCredentialsError(SatstackError):
    pass


class InvalidQueryError(SatstackError, ValueError):
    pass


class ResponseParseError(SatstackError):
    pass


class ResponseSchemaError(SatstackError):
    pass


class NoBrowseUrlError(SatstackError):
    pass


class TransportError(SatstackError):
    """Network-layer failure (unreachable host, HTTP error status)."""


# --- spectral indices -----------------------------------------------------

class UnmappedRoleError(SatstackError, KeyError):
    pass


class NoInputFilesError(SatstackError):
    pass


# --- cloud masks ----------------------------------------------------------

class NegativeQaValueError(SatstackError, ValueError):
    pass


class NonBinaryMaskError(SatstackError, ValueError):
    pass


# --- interpolation --------------------------------------------------------

class RankDeficientError(SatstackError):
    pass


class DimensionMismatchError(SatstackError, ValueError):
    pass


# --- IMA ------------------------------------------------------------------

class TargetNotFoundError(SatstackError, ValueError):
    pass


class EmptyNeighborhoodError(SatstackError):
    pass


# --- hydrology ------------------------------------------------------------

class NoPointsError(SatstackError, ValueError):
    pass


class NoComponentsError(SatstackError):
    pass


class UnknownComponentError(SatstackError, KeyError):
    pass


class EmptyShorelineError(SatstackError):
    pass


class AllMissingElevationError(SatstackError):
    pass


class InsufficientPairsError(SatstackError):
    pass
