"""Exception hierarchy shared across the package."""


class TsvarError(Exception):
    """Base class for every error raised by this library."""


class ParseError(TsvarError):
    """Some piece of input text could not be parsed."""


class DSLParseError(ParseError):
    """Malformed time-scale description string."""


class ExpressionError(ParseError):
    """Malformed arithmetic expression."""


class ProblemFileError(ParseError):
    """Structurally invalid problem file."""


class EvaluationError(TsvarError):
    """A user-supplied callable or expression produced unusable values."""


class InvalidTimeScale(TsvarError):
    """Segment list violates the ordering/disjointness/unboundedness rules."""


class NotInTimeScale(TsvarError):
    """A point was used that is not a member of the time scale."""


class InvalidWindow(TsvarError):
    """Window endpoints are not ordered or not usable."""


class StepNotPositive(TsvarError):
    """A sampling step or progression step must be > 0."""


class NodeNotInGrid(TsvarError):
    """An endpoint passed to a grid operation is not a grid node."""


class BoundaryUndefined(TsvarError):
    """The requested quantity needs data beyond the edge of the grid."""


class GridTooSmall(TsvarError):
    """The grid has too few nodes for the requested operation."""


class DimensionMismatch(TsvarError):
    """Grid functions have incompatible shapes or live on different grids."""


class InsufficientHorizons(TsvarError):
    """Too few horizon samples to run the limit classifier."""


class ZeroEpsilon(TsvarError):
    """The variation parameter epsilon must be nonzero."""


class InadmissiblePath(TsvarError):
    """A trajectory violates the initial condition x(a) = x_a."""


class InadmissibleVariation(TsvarError):
    """A variation must vanish at the left endpoint."""


class NonFiniteObjective(TsvarError):
    """The objective evaluated to NaN/inf and no usable iterate exists."""


class PartialsMismatch(TsvarError):
    """Supplied analytic partials disagree with finite differences."""


class ProbeFailed(TsvarError):
    """The sign-persistence search of the lemma probe did not terminate."""
