"""Exception taxonomy for the curvature pipeline.

Every error raised on purpose by this package derives from :class:`ReggeError`,
so callers (and the CLI) can distinguish malformed input from internal bugs.
Mesh construction, metric evaluation, per-element geometry, frame machinery and
I/O each contribute a few specific subclasses; the class name is the contract,
the message carries the offending polytope / position / value.
"""


class ReggeError(Exception):
    """Base class for all package-level errors."""


# ---------------------------------------------------------------------------
# mesh construction / topology
# ---------------------------------------------------------------------------

class NonManifold(ReggeError):
    """A codimension-1 face has more than two incident cells."""


class NonManifoldHinge(ReggeError):
    """A codimension-2 hinge whose fan of cells is not a cycle or a path."""


class InvertedCell(ReggeError):
    """A cell whose geometry map has non-positive Jacobian determinant."""


class DanglingFace(ReggeError):
    """A face that is partially identified but has no consistent partner."""


class NotIncident(ReggeError):
    """Queried (face, cell) or (hinge, cell) pair that is not incident."""


class UnsupportedCellType(ReggeError):
    """Operation not available for this cell type (e.g. refining boxes)."""


class DegreeUnavailable(ReggeError):
    """No quadrature rule implemented for the requested exactness degree."""


# ---------------------------------------------------------------------------
# metric expressions and fields
# ---------------------------------------------------------------------------

class ExpressionSyntaxError(ReggeError):
    """Malformed metric expression; carries the character offset."""

    def __init__(self, message, position):
        super().__init__("%s (at offset %d)" % (message, position))
        self.position = position


class UnknownSymbol(ReggeError):
    """Expression references a symbol that is not defined in this dimension."""


class EvaluationError(ReggeError):
    """Expression could not be evaluated (singularity, domain error)."""


class OutOfCell(ReggeError):
    """Reference point lies outside the reference polytope."""


class SingularMetric(ReggeError):
    """Metric matrix not invertible / not positive definite where required."""


# ---------------------------------------------------------------------------
# per-element geometry
# ---------------------------------------------------------------------------

class DegenerateFace(ReggeError):
    """Face tangent vectors are linearly dependent under the metric."""


class DegenerateHinge(ReggeError):
    """Hinge conormal construction degenerates (zero-length conormal)."""


class BoundaryFace(ReggeError):
    """Interior-only operation called on a boundary face."""


class BoundaryHinge(ReggeError):
    """Interior-only operation called on a boundary hinge."""


class InteriorEdge(ReggeError):
    """Boundary-only operation called on an interior edge."""


class WrongDimension(ReggeError):
    """Operation restricted to a specific ambient dimension (usually n = 2)."""


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

class NonSkewK(ReggeError):
    """Rotation-rate field fed to the frame ODE is not skew-symmetric."""


class DriftExceeded(ReggeError):
    """Frame ODE lost orthonormality beyond the configured bound."""


class SignatureChange(ReggeError):
    """Metric signature changed along a homotopy (pivot sign flip)."""


class FaceDataMismatch(ReggeError):
    """Per-face extension data disagrees on a shared sub-face."""


class IncompatibleFrame(ReggeError):
    """Frame fails the compatibility conditions beyond tolerance."""


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

class IoError(ReggeError):
    """Report or input file could not be read/written."""
