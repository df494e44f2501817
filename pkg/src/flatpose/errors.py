"""Exception types shared across the toolkit."""


class FlatposeError(Exception):
    """Base class for all toolkit errors."""


class DocumentParseError(FlatposeError):
    """Manufacturing document is not well-formed XML."""


class DocumentSchemaError(FlatposeError):
    """Document parsed but violates the part-list schema."""


class PathCommandError(FlatposeError):
    """SVG path data contains an unsupported or malformed command."""


class OpenSubpathError(FlatposeError):
    """A subpath does not close within tolerance and has no close command."""


class LoopNestingError(FlatposeError):
    """Profile loops overlap or nest in a way a flat part cannot."""


class DegenerateProfileError(FlatposeError):
    """Profile has no usable area."""


class TriangulationError(FlatposeError):
    """Polygon could not be decomposed into triangles."""


class BehindCameraError(FlatposeError):
    """A point at or behind the camera plane cannot be projected."""


class PlacementError(FlatposeError):
    """Scene composition could not place all parts without overlap."""


class EvaluationError(FlatposeError):
    """Pose evaluation inputs are inconsistent."""


class UnsupportedInputError(FlatposeError):
    """An estimator was handed input it cannot process."""
