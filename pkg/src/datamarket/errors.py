"""Exception hierarchy for the marketplace engine."""


class MarketError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MarketError):
    """Malformed or out-of-range user input (CLI exit code 2)."""


class InfeasibleError(MarketError):
    """A configuration that cannot be solved as requested (CLI exit code 3)."""


class TooManyOwners(InfeasibleError):
    pass


class TooManyItems(InfeasibleError):
    pass


class EnumerationTooLarge(InfeasibleError):
    pass


class BudgetTooLargeForTable(InfeasibleError):
    pass


class SearchSpaceTooLarge(InfeasibleError):
    pass


class EmptySolutionSpace(InfeasibleError):
    pass


class EmptyEvalSet(InputError):
    pass


class EmptySurvey(InputError):
    pass


class AllZeroShapley(InputError):
    pass


class ZeroTotalPrice(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class InvalidPrivacyParams(InputError):
    pass


class NonFinite(MarketError):
    """Optimizer produced a non-finite objective."""


class ParseError(InputError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class InvalidLabel(ParseError):
    pass
