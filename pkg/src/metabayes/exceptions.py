"""Exception types shared across the package.

Every error raised on a bad input or a failed numerical contract derives
from :class:`MetaBayesError` so callers can catch the package's failures
with a single except clause.
"""


class MetaBayesError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(MetaBayesError):
    """Operands have incompatible shapes."""


# Same condition seen from the caller's side: a dimension argument does not
# match the data it describes.
DimensionMismatch = ShapeMismatch


class NotSquare(MetaBayesError):
    """A matrix that must be square is not."""


class NotSymmetric(MetaBayesError):
    """A matrix that must be symmetric is not, beyond tolerance."""


class NotPositiveDefinite(MetaBayesError):
    """Cholesky failed even at the largest allowed jitter."""


class IndexOutOfRange(MetaBayesError):
    """An index list refers outside the valid range or repeats an entry."""


class NonScalarLoss(MetaBayesError):
    """Reverse-mode differentiation was asked to start from a non-scalar."""


class NonFiniteLoss(MetaBayesError):
    """A loss value is NaN or infinite."""


class SingularTransform(MetaBayesError):
    """A reparametrization matrix is singular or too ill-conditioned."""


class IncompatibleModelLoss(MetaBayesError):
    """The requested loss is not defined for the given model kind."""


class EmptyBatch(MetaBayesError):
    """A task batch with no tasks was supplied."""


class InvalidConfig(MetaBayesError):
    """A configuration value is missing, malformed, or out of range."""


class MissingColumn(MetaBayesError):
    """A required CSV column is absent."""


class NonNumericCell(MetaBayesError):
    """A CSV cell that must be numeric failed to parse.

    Attributes
    ----------
    row : int
        One-based data row index (header excluded).
    column : str
        Name of the offending column.
    """

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-numeric value {value!r} at row {row}, column {column!r}")


class EmptyFile(MetaBayesError):
    """A CSV file contains no data rows."""


class NotEnoughSamples(MetaBayesError):
    """A split asks for more context points than the task holds."""


class NonFiniteGradient(MetaBayesError):
    """An optimizer step received a NaN or infinite gradient."""


class DivergedLoss(MetaBayesError):
    """Training loss stayed non-finite for several consecutive steps."""
