"""Exception and warning types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not satisfy an operation's contract."""


class DegenerateVectorError(ValueError):
    """A vector with (near-)zero norm was passed where a direction is required."""


class DivergenceError(RuntimeError):
    """A gradient or loss became non-finite during optimization."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed or incompatible."""


class ManifestError(ValueError):
    """A manifest file failed to parse or violates manifest invariants."""


class SplitError(ValueError):
    """An object-level split cannot be formed as requested."""


class InterpolationRangeError(ValueError):
    """Query time lies outside the interpolation interval."""


class ConfigError(ValueError):
    """A configuration value or document is invalid."""


class NoValidPartnerError(LookupError):
    """No frame satisfies the pairing constraint for this anchor.

    Callers treat this as a resample-the-anchor signal, not a fatal error.
    """


class BatchError(ValueError):
    """A pair batch cannot be assembled from the available frames."""


class DegradedCropWarning(UserWarning):
    """A square crop exceeded the image and was clamped to fit."""
