"""Solver-independent mixed-integer linear model."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from numbers import Real
from typing import Iterable, Mapping

BINARY = "binary"
INTEGER = "integer"
CONTINUOUS = "continuous"

LE, EQ, GE = "<=", "==", ">="
_SENSES = {"<=": LE, "≤": LE, "==": EQ, "=": EQ, ">=": GE, "≥": GE}

FEAS_TOL = 1e-6
DEFAULT_GAP = 1e-4


class ModelError(ValueError):
    pass


class Var:
    __slots__ = ("name", "kind", "lb", "ub", "index", "_owner")

    def __init__(self, name, kind, lb, ub, index, owner):
        self.name = name
        self.kind = kind
        self.lb = lb
        self.ub = ub
        self.index = index
        self._owner = owner

    @property
    def is_integral(self) -> bool:
        return self.kind != CONTINUOUS

    def __repr__(self):
        return f"Var({self.name!r}, {self.kind}, [{self.lb}, {self.ub}])"

    def _expr(self) -> LinExpr:
        return LinExpr({self: 1.0})

    def __add__(self, other):
        return self._expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self._expr() - other

    def __rsub__(self, other):
        return other - self._expr()

    def __mul__(self, coef):
        return self._expr() * coef

    __rmul__ = __mul__

    def __neg__(self):
        return self._expr() * -1.0


class LinExpr:
    """Sum of coefficient*variable terms plus a constant."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Mapping[Var, float] | None = None, constant: float = 0.0):
        self.terms: dict[Var, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    @staticmethod
    def of(value) -> LinExpr:
        if isinstance(value, LinExpr):
            return value
        if isinstance(value, Var):
            return value._expr()
        if isinstance(value, Real):
            return LinExpr(constant=float(value))
        raise TypeError(f"cannot use {type(value).__name__} in a linear expression")

    @staticmethod
    def total(items: Iterable) -> LinExpr:
        out = LinExpr()
        for item in items:
            out._iadd(LinExpr.of(item), 1.0)
        return out

    def copy(self) -> LinExpr:
        return LinExpr(self.terms, self.constant)

    def _iadd(self, other: LinExpr, scale: float) -> LinExpr:
        for var, coef in other.terms.items():
            self.terms[var] = self.terms.get(var, 0.0) + scale * coef
        self.constant += scale * other.constant
        return self

    def __add__(self, other):
        return self.copy()._iadd(LinExpr.of(other), 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd(LinExpr.of(other), -1.0)

    def __rsub__(self, other):
        return LinExpr.of(other).copy()._iadd(self, -1.0)

    def __mul__(self, coef):
        if not isinstance(coef, Real):
            raise TypeError("only scalar multiplication keeps an expression linear")
        return LinExpr({v: c * coef for v, c in self.terms.items()}, self.constant * coef)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def normalized(self) -> LinExpr:
        """Copy with zero coefficients dropped."""
        return LinExpr({v: c for v, c in self.terms.items() if c != 0.0}, self.constant)

    def value(self, assignment: Mapping[str, float]) -> float:
        return self.constant + sum(c * assignment[v.name] for v, c in self.terms.items())

    def __repr__(self):
        parts = [f"{c:+g}*{v.name}" for v, c in self.terms.items()]
        if self.constant or not parts:
            parts.append(f"{self.constant:+g}")
        return " ".join(parts)


@dataclass
class Constraint:
    expr: LinExpr
    sense: str
    rhs: float
    tag: str
    name: str = ""

    def slack_violation(self, assignment: Mapping[str, float]) -> float:
        """Amount by which ``assignment`` violates this row (0 if satisfied)."""
        lhs = self.expr.value(assignment)
        if self.sense == LE:
            return max(0.0, lhs - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class MilpModel:
    name: str = "model"
    vars: dict[str, Var] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    objective_sense: str = "max"

    def add_var(self, name: str, kind: str = CONTINUOUS, lb: float | None = 0.0,
                ub: float | None = None) -> Var:
        if name in self.vars:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind not in (BINARY, INTEGER, CONTINUOUS):
            raise ModelError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lb = 0.0 if lb is None else max(0.0, float(lb))
            ub = 1.0 if ub is None else min(1.0, float(ub))
        lb = -float("inf") if lb is None else float(lb)
        ub = float("inf") if ub is None else float(ub)
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb {lb} > ub {ub}")
        var = Var(name, kind, lb, ub, len(self.vars), self)
        self.vars[name] = var
        return var

    def binary(self, name: str, lb=0.0, ub=1.0) -> Var:
        return self.add_var(name, BINARY, lb, ub)

    def integer(self, name: str, lb=0.0, ub=None) -> Var:
        return self.add_var(name, INTEGER, lb, ub)

    def continuous(self, name: str, lb=0.0, ub=None) -> Var:
        return self.add_var(name, CONTINUOUS, lb, ub)

    def fix(self, var: Var, value: float) -> None:
        var.lb = var.ub = float(value)

    def _check_registered(self, expr: LinExpr) -> None:
        for var in expr.terms:
            if var._owner is not self or self.vars.get(var.name) is not var:
                raise ModelError(f"unregistered variable {var.name!r}")

    def add_constraint(self, lhs, sense: str, rhs, tag: str, name: str = "") -> Constraint:
        """Add ``lhs <sense> rhs``; variables may appear on either side."""
        if not tag:
            raise ModelError("constraint tag must be non-empty")
        try:
            sense = _SENSES[sense]
        except KeyError:
            raise ModelError(f"unknown sense {sense!r}") from None
        expr = (LinExpr.of(lhs) - LinExpr.of(rhs)).normalized()
        self._check_registered(expr)
        bound = -expr.constant
        expr.constant = 0.0
        con = Constraint(expr, sense, bound, tag, name or f"{tag}_{len(self.constraints)}")
        self.constraints.append(con)
        return con

    def set_objective(self, expr, sense: str = "max") -> None:
        if sense not in ("max", "min"):
            raise ModelError(f"unknown objective sense {sense!r}")
        expr = LinExpr.of(expr).normalized()
        self._check_registered(expr)
        self.objective = expr
        self.objective_sense = sense

    def by_tag(self, tag: str) -> list[Constraint]:
        return [c for c in self.constraints if c.tag == tag]

    def census(self) -> dict[str, int]:
        """Constraint count per tag."""
        return dict(sorted(Counter(c.tag for c in self.constraints).items()))

    def violations(self, assignment: Mapping[str, float], tol: float = FEAS_TOL):
        """Constraints and bounds not satisfied by ``assignment`` within ``tol``."""
        out = []
        for var in self.vars.values():
            x = assignment[var.name]
            if x < var.lb - tol or x > var.ub + tol:
                out.append((var.name, "bounds", x))
            elif var.is_integral and abs(x - round(x)) > tol:
                out.append((var.name, "integrality", x))
        for con in self.constraints:
            gap = con.slack_violation(assignment)
            if gap > tol:
                out.append((con.name, con.tag, gap))
        return out


@dataclass
class Solution:
    status: str
    objective_value: float | None
    assignment: dict[str, float]
    gap: float | None
    wall_time: float = 0.0
    backend: str = ""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    GAP_LIMIT = "gap_limit"
    TIME_LIMIT = "time_limit"

    @property
    def has_solution(self) -> bool:
        return bool(self.assignment)

    def __getitem__(self, var) -> float:
        name = var.name if isinstance(var, Var) else var
        return self.assignment[name]

    def value(self, expr) -> float:
        return LinExpr.of(expr).value(self.assignment)
