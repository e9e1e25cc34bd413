"""Exception hierarchy.

Two intermediate bases drive CLI exit codes: DataError (bad input files,
schemas, configs) maps to exit 2, SearchError (failures inside the search
itself) maps to exit 3.
"""

from __future__ import annotations


class ExprMineError(Exception):
    """Base class for every error raised by this package."""


class DataError(ExprMineError):
    """Input data, schema, or configuration is unusable."""


class SearchError(ExprMineError):
    """The search or an expression operation failed."""


# ---- expressions


class IncompleteExpressionError(SearchError):
    """Token sequence does not close every operator slot."""


class UnknownFeatureError(DataError):
    """Expression references a feature index or name the data lacks."""


class ExpressionSyntaxError(DataError):
    """Expression text failed to parse."""

    def __init__(self, message: str, position: int = -1):
        super().__init__(message)
        self.position = position


# ---- search states


class TerminalStateError(SearchError):
    """Operation requires a non-terminal state."""


class IllegalActionError(SearchError):
    """Action is not legal in the given state."""


class EmptyMaskError(SearchError):
    """Action mask admits no action."""


class UnknownVariantError(SearchError):
    """Unrecognised PUCT variant name."""


# ---- evaluation


class NonFiniteLossError(SearchError):
    """A loss came out NaN or infinite."""


class NoPositivesError(DataError):
    """Recall is undefined without positive labels."""


class DegenerateLabelsError(DataError):
    """AUC is undefined unless both classes are present."""


# ---- data ingestion


class MissingColumnError(DataError):
    """CSV lacks a column the schema declares."""


class BadRoleError(DataError):
    """Schema role is unknown or the role layout is invalid."""


class UnparseableValueError(DataError):
    """A CSV cell could not be parsed for its declared role."""


class NotCategoricalError(DataError):
    """Operation requires a categorical column."""


class EmptyFeatureSetError(DataError):
    """Feature construction produced no columns."""


class ConfigInvalidError(DataError):
    """Configuration file or value is invalid."""


# ---- rules and oracle


class TooFewExpressionsError(SearchError):
    """Boundary equating needs at least two expressions."""


class SpaceTooLargeError(SearchError):
    """Exhaustive enumeration refused; carries the counted size."""

    def __init__(self, count: int, limit: int):
        super().__init__(
            f"expression space has {count} elements, over the {limit} enumeration limit"
        )
        self.count = count
        self.limit = limit
