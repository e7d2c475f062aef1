"""Exception types shared across the toolkit.

Every operation that can reject its input raises one of these instead of a
bare ValueError, so callers (and the pool runner, which must keep going on
per-cell failures) can distinguish data problems from bugs.
"""


class CardioXMapError(Exception):
    """Base class for all toolkit errors."""


# ---------------------------------------------------------------------------
# signal / dataset errors
# ---------------------------------------------------------------------------

class SeriesTooShort(CardioXMapError):
    """Raw series has fewer samples than the requested window."""


class InsufficientData(CardioXMapError):
    """Too few patients/cases to build a valid stratified split."""


class InvalidConfig(CardioXMapError):
    """Generator or model configuration violates its invariants."""


class ParseError(CardioXMapError):
    """Malformed dataset line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaError(CardioXMapError):
    """Dataset or bundle object is missing a required field."""

    def __init__(self, field: str, line_no: int | None = None):
        loc = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"missing field {field!r}{loc}")
        self.field = field
        self.line_no = line_no


# ---------------------------------------------------------------------------
# tensor / graph errors
# ---------------------------------------------------------------------------

class ShapeMismatch(CardioXMapError):
    """Operands have incompatible shapes."""


class NotScalar(CardioXMapError):
    """backward() called on a non-scalar output node."""


class NonFiniteValue(CardioXMapError):
    """An operation produced NaN or infinity."""


# ---------------------------------------------------------------------------
# classifier errors
# ---------------------------------------------------------------------------

class SingleClassData(CardioXMapError):
    """Training set contains only one class."""


class ChannelMismatch(CardioXMapError):
    """Record channel count does not match the model input width."""


class EmptySet(CardioXMapError):
    """Evaluation called with an empty case set."""


# ---------------------------------------------------------------------------
# attribution errors
# ---------------------------------------------------------------------------

class EmptyBaselineSet(CardioXMapError):
    """Gradient-based SHAP needs at least one reference record."""


class BudgetTooSmall(CardioXMapError):
    """Coalition sampling budget cannot cover the feature groups."""


class DegenerateDesign(CardioXMapError):
    """Surrogate design matrix is rank-deficient after a re-sample."""


# ---------------------------------------------------------------------------
# cross-modal / agreement errors
# ---------------------------------------------------------------------------

class WrongChannelCount(CardioXMapError):
    """Profile does not have the 12 rows the lead aggregation expects."""


class MissingDiagnosis(CardioXMapError):
    """Sign orientation requires an expert diagnosis."""


class EmptyRegion(CardioXMapError):
    """Post-processing or metric region contains no cells."""


class OutOfWindow(CardioXMapError):
    """Annotated segment lies entirely outside the record window."""


class EmptyGroundTruth(CardioXMapError):
    """Ground-truth mask has no active cells inside the region."""


class DegenerateRegion(CardioXMapError):
    """Rank correlation needs >= 2 region cells with non-identical truth."""


# ---------------------------------------------------------------------------
# harness errors
# ---------------------------------------------------------------------------

class EmptyInput(CardioXMapError):
    """Bootstrap called with no values."""


class MissingCheckpoint(CardioXMapError):
    """Pool cell needs a model checkpoint that was not supplied."""


class MissingAnnotation(CardioXMapError):
    """Pool cell needs an expert annotation that was not supplied."""


class MissingPrediction(CardioXMapError):
    """Stratification requires a model prediction for every case."""
