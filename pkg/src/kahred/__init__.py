"""Numerical Kähler reduction by torus actions."""
from .calculus import Jet2, Point, eval_jet2, fd_jet2
from .errors import (KahredError, NotEinstein, NotKahler, NumericalError, ParseError,
                     StabilityViolation, ValidationError)
from .potential import InvariantPotential, diagonal_trivialization, flat, from_expression, fubini_study
from .reduction import ReductionProblem, reduce_at, reduced_metric, solve_level_set

__version__ = "0.1.0"

__all__ = [
    "Jet2", "Point", "eval_jet2", "fd_jet2",
    "KahredError", "NotEinstein", "NotKahler", "NumericalError", "ParseError",
    "StabilityViolation", "ValidationError",
    "InvariantPotential", "diagonal_trivialization", "flat", "from_expression", "fubini_study",
    "ReductionProblem", "reduce_at", "reduced_metric", "solve_level_set",
]
