"""Exception types shared across the package."""


class SnapcsError(Exception):
    """Base class for all errors raised by snapcs."""


class GeometryError(SnapcsError):
    """Inconsistent or invalid capture geometry (sizes, strides, shapes)."""


class FormatError(SnapcsError):
    """Malformed or unsupported file content (bad magic, version, payload)."""


class MaskMismatchError(SnapcsError):
    """Artifacts built against different measurement masks were combined."""


class UnsolvableMaskError(SnapcsError):
    """The mask leaves measurement directions with no energy, so the
    normal equations of the linear decoder are singular.

    ``dead_rows`` holds the indices of measurement-vector entries whose
    second moment is exactly zero (empty if the deficiency is not that
    simple shape).
    """

    def __init__(self, message, dead_rows=()):
        super().__init__(message)
        self.dead_rows = tuple(dead_rows)


class ZeroSignalError(SnapcsError):
    """A signal-to-noise target was requested for an all-zero signal."""


class TrainingDivergedError(SnapcsError):
    """Training produced a non-finite loss.

    ``checkpoint`` carries the last best-validation state reached before
    the divergence (None when no finite iteration completed).
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
