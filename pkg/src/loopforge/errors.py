"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures onto its
stable exit-code contract: 1 usage, 2 data, 3 numerical health.
"""


class LoopForgeError(Exception):
    exit_code = 2


class InvalidInputError(LoopForgeError):
    """Caller passed a value that violates an operation's preconditions."""


class NonManifoldSliceError(LoopForgeError):
    """A slice produced an open contour; the mesh is not manifold there."""

    def __init__(self, plane_index, detail=""):
        self.plane_index = plane_index
        msg = f"slice on plane {plane_index} produced an open contour"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DegenerateLoopError(LoopForgeError):
    """Geometry degenerate beyond use: a polyline with fewer than 3 distinct
    points or zero perimeter, or a mesh with zero extent."""


class EmptyShapeError(LoopForgeError):
    """No plane of the schedule intersects the shape."""


class OrphanLoopError(LoopForgeError):
    """A sequence starts with a loop that belongs to no plane (first flag 0)."""


class PlaneOverflowError(LoopForgeError):
    """A sequence contains more level-up flags than there are planes."""


class ShapeError(LoopForgeError):
    """An array has the wrong shape or length."""


class SequenceLengthError(LoopForgeError):
    """A sequence exceeds the configured maximum length."""


class ParseError(LoopForgeError):
    """A serialized stream is malformed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(LoopForgeError):
    """Checkpoint file is corrupt, wrong version, or config-incompatible."""


class DatasetQualityError(LoopForgeError):
    """More than half of the generated shapes were rejected."""


class SessionStateError(LoopForgeError):
    """Operation applied to a decode session in the wrong state."""


class EditRangeError(LoopForgeError):
    """Edit or transplant targets a step outside the allowed range."""


class NumericalHealthError(LoopForgeError):
    """A tensor became non-finite; training aborts."""

    exit_code = 3

    def __init__(self, message, last_good_checkpoint=None):
        self.last_good_checkpoint = last_good_checkpoint
        if last_good_checkpoint:
            message += f" (last good checkpoint: {last_good_checkpoint})"
        super().__init__(message)
