"""Exception hierarchy shared by every layer of the package."""


class SurveyBandError(Exception):
    """Base class for all errors raised by surveyband."""


class InvalidArgumentError(SurveyBandError, ValueError):
    """An argument violates a documented precondition."""


class DivergenceError(SurveyBandError, ArithmeticError):
    """Integration produced a non-finite or negative compartment."""

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(message or f"integration diverged at t={self.time!r}")


class DegenerateExpectedError(SurveyBandError, ValueError):
    """A chi-square expected entry is not strictly positive."""


class UnfittableError(SurveyBandError):
    """The objective is -inf at the start point and every initial vertex."""


class InsufficientEnsembleError(SurveyBandError):
    """Fewer than two fits survived the acceptance threshold."""


class ParseError(SurveyBandError, ValueError):
    """Malformed survey or result file.  Carries the offending row and field."""

    def __init__(self, message, row=None, field=None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
