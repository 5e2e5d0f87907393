"""Exception hierarchy shared by every module."""


class EsaBcvError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EsaBcvError, ValueError):
    """Input array has the wrong shape, non-finite entries or bad values."""


class InvalidRankError(EsaBcvError, ValueError):
    """Requested rank is outside the admissible range."""


class DegenerateFactorizationError(EsaBcvError, ValueError):
    """A factor of a product ``L @ R`` does not have full rank."""


class DegenerateVariableError(EsaBcvError, ValueError):
    """A variable (row) is constant, so its variance or correlation is undefined."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DegenerateVarianceError(DegenerateVariableError):
    """The initial sample variance of some row is zero."""


class VarianceCollapseError(EsaBcvError, ArithmeticError):
    """A residual variance collapsed to (numerically) zero during alternation."""

    def __init__(self, step, row, value):
        super().__init__(
            f"variance of row {row} collapsed to {value:.3e} at alternation step {step}"
        )
        self.step = step
        self.row = row
        self.value = value


class DegenerateFitError(EsaBcvError, ArithmeticError):
    """A fitted signal has lower numerical rank than requested."""


class NoFeasibleRankError(EsaBcvError, RuntimeError):
    """Every candidate rank was excluded by the variance guard."""


class StrengthCollisionError(EsaBcvError, ValueError):
    """Factor strength categories overlap, so the ladder is not ordered."""


class CsvParseError(EsaBcvError, ValueError):
    """A matrix CSV is ragged or holds non-numeric cells."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column
