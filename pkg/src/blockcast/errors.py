"""Exception types shared across the toolkit."""


class BlockcastError(Exception):
    """Base class for all toolkit errors."""


class ArityError(BlockcastError):
    """Wrong number of elements (frames, readings, members)."""


class ShapeError(BlockcastError):
    """Tensor shape does not match the operation's contract."""


class FormatError(BlockcastError):
    """A payload file is malformed (bad magic, truncated, wrong dims)."""


class MalformedIndexError(BlockcastError):
    """Frame indices within a sequence are not strictly increasing."""


class UnfittedScalerError(BlockcastError):
    """Scaler applied before fit."""


class DivisionGuardError(BlockcastError):
    """A count that must be positive is zero."""


class EmptyScenarioError(BlockcastError):
    """Scenario configured with no steps."""


class InsufficientPointsError(BlockcastError):
    """Too few points for the requested geometric fit."""


class DegenerateGeometryError(BlockcastError):
    """All sampled hypotheses were geometrically degenerate."""


class TimestampError(BlockcastError):
    """Timestamps are duplicated or not increasing."""


class CoordinateRangeError(BlockcastError):
    """Latitude/longitude outside the valid range."""


class MalformedImageError(BlockcastError):
    """Image has a zero dimension or wrong channel count."""


class UndefinedMetricError(BlockcastError):
    """Metric undefined for this input (e.g. single-class AUC)."""


class TrainingDivergenceError(BlockcastError):
    """Non-finite gradients encountered during optimization."""


class DataError(BlockcastError):
    """Dataset split empty or otherwise unusable."""


class ConfigError(BlockcastError):
    """Run configuration invalid (bad value or unknown key)."""


class MissingArtifactError(BlockcastError):
    """A required upstream stage artifact is absent."""
