"""Exception hierarchy shared by the library and the command line tool.

Each error class carries a distinct process exit code so shell pipelines can
tell configuration mistakes from data problems.
"""


class MobiError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(MobiError):
    """Run configuration is missing, malformed, or inconsistent."""

    exit_code = 2


class InsufficientMeasurementsError(MobiError):
    """Fewer mask positions than unknowns in the per-pixel system."""

    exit_code = 3


class DataError(MobiError):
    """Input arrays violate a numeric precondition (non-finite, non-positive...)."""

    exit_code = 4


class UnsupportedImageError(MobiError):
    """Image file exists but has an unsupported layout or bit depth."""

    exit_code = 5


class UnreadableImageError(MobiError):
    """Image file is missing, truncated, or otherwise unreadable."""

    exit_code = 6


class DimensionError(MobiError):
    """Array shapes are too small or mutually inconsistent."""

    exit_code = 7


class MissingArtifactError(MobiError):
    """A required output of an earlier pipeline stage is absent."""

    exit_code = 8


class CoverageError(MobiError):
    """Too few valid pixels inside a region of interest."""

    exit_code = 9


class DomainError(MobiError):
    """Scalar argument outside its documented domain."""

    exit_code = 10


class ModelValidityWarning(UserWarning):
    """Inputs are formally accepted but outside the regime the forward model
    represents faithfully (e.g. pattern displacements of many pixels)."""
