"""Exception types shared across the package."""


class LesionTrackError(Exception):
    """Base class for all data/usage errors raised by this package."""


class VolumeFormatError(LesionTrackError):
    """A volume file is unreadable or violates the supported NIfTI-1 subset."""


class GridMismatchError(LesionTrackError):
    """Two volumes that must share a grid do not."""


class ManifestError(LesionTrackError):
    """A cohort manifest is missing, empty, or malformed."""


class PhantomSpecError(LesionTrackError):
    """A phantom specification is inconsistent or out of bounds."""
