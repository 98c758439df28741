"""Mixed-integer linear model IR, HiGHS backend, and a small exact fallback."""
from .lpformat import to_lp
from .model import (
    BINARY,
    CONTINUOUS,
    DEFAULT_GAP,
    EQ,
    FEAS_TOL,
    GE,
    INTEGER,
    LE,
    Constraint,
    LinExpr,
    MilpModel,
    ModelError,
    Solution,
    Var,
)
from .solvers import BB_MAX_INTEGER_VARS, ModelTooLarge, bb_solve, solve

__all__ = [
    "BINARY", "CONTINUOUS", "INTEGER", "LE", "EQ", "GE", "DEFAULT_GAP", "FEAS_TOL",
    "BB_MAX_INTEGER_VARS", "Constraint", "LinExpr", "MilpModel", "ModelError",
    "ModelTooLarge", "Solution", "Var", "bb_solve", "solve", "to_lp",
]
