"""Exception types raised by the rebartie pipeline stages."""


class RebartieError(Exception):
    """Base class for all rebartie errors."""


# --- geometry ---

class NearPiRotation(RebartieError):
    """Rotation angle too close to pi for a stable SE(3) log."""


class NegativeGamma(RebartieError):
    """Pose distance weight gamma must be >= 0."""


class NonPositiveDt(RebartieError):
    """Time increments must be strictly positive."""


# --- scene synthesis ---

class DegenerateAxis(RebartieError):
    """Bar axis direction has (near-)zero length."""


class SpecInvalid(RebartieError):
    """Scene or grid specification violates a validity constraint."""


# --- clustering ---

class EmptyCloud(RebartieError):
    """Operation requires a non-empty point cloud."""


class EmptyReference(RebartieError):
    """No scene points fall inside the reference extraction radius."""


class NoClusters(RebartieError):
    """Cluster labeling contains no clusters."""


class AllZeroCounts(RebartieError):
    """No cluster has any reference point nearby."""


# --- node extraction / ordering ---

class NoNodesFound(RebartieError):
    """Orthogonality filter left no clusterable intersection points."""


class DegenerateCloud(RebartieError):
    """Too few (or collinear) points for a principal axis estimate."""


class AmbiguousAxis(RebartieError):
    """Two candidate frame axes tie; the frame is not well defined."""


# --- pose sampling ---

class NonFiniteScore(RebartieError):
    """Score field returned a non-finite twist."""


class EmptyCrop(RebartieError):
    """Tying-pose prediction requires a non-empty node crop."""


# --- evaluation ---

class ShapeMismatch(RebartieError):
    """Prediction and ground-truth collections disagree in shape."""


# --- pipeline / CLI ---

class NoCandidateNode(RebartieError):
    """Pre-detection found no point passing the orthogonality mask."""


class ConfigError(RebartieError):
    """Configuration file is malformed or contains unknown keys."""


class PipelineStageError(RebartieError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}': {cause}")
