"""Exception hierarchy.

Every error carries a CLI exit code so the dispatcher can map failures
without knowing where they were raised.
"""


class KahredError(Exception):
    exit_code = 5


class ParseError(KahredError):
    exit_code = 2

    def __init__(self, message, line=None, column=None, position=None):
        self.line, self.column, self.position = line, column, position
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if position is not None and line is None:
            where.append(f"position {position}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class UnknownSymbol(ParseError):
    pass


class ValidationError(KahredError):
    exit_code = 3


class DimensionMismatch(ValidationError):
    pass


class NumericalError(KahredError):
    exit_code = 4


class DomainError(NumericalError):
    """A log, division or exponential was evaluated outside its domain."""


class NotKahler(NumericalError):
    """A Hermitian form that should be positive definite is not."""


class StabilityViolation(NumericalError):
    """The level-set solve diverged: the level is outside the fiberwise moment image."""


class NotEinstein(NumericalError):
    pass


class BoundaryLevel(NumericalError):
    """The level lies on the boundary of the hull; the minimizer is at infinity."""


class DegenerateInput(ValidationError):
    pass


class UnverifiedBound(NumericalError):
    pass


class NotPolarized(NumericalError):
    pass


class NotRegularLevel(NumericalError):
    pass


class BoundaryPoint(NumericalError):
    pass
