"""Solver backends.

``solve`` hands the model to HiGHS through ``highspy``;
``bb_solve`` is a small exact branch and bound used as an independent
check on toy models.
"""
from __future__ import annotations

import copy
import heapq
import math
import time

import highspy
import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import DEFAULT_GAP, EQ, FEAS_TOL, GE, LE, MilpModel, ModelError, Solution

BB_MAX_INTEGER_VARS = 40


class ModelTooLarge(ModelError):
    pass


class _Arrays:
    """Dense/sparse arrays of a model in minimisation form."""

    def __init__(self, model: MilpModel):
        variables = list(model.vars.values())
        self.names = [v.name for v in variables]
        n = len(variables)
        self.lb = np.array([v.lb for v in variables], dtype=float)
        self.ub = np.array([v.ub for v in variables], dtype=float)
        self.integral = np.array([v.is_integral for v in variables], dtype=bool)
        sign = -1.0 if model.objective_sense == "max" else 1.0
        self.sign = sign
        self.c = np.zeros(n)
        for var, coef in model.objective.terms.items():
            self.c[var.index] += sign * coef
        self.c0 = model.objective.constant

        rows, cols, vals, lo, hi = [], [], [], [], []
        for i, con in enumerate(model.constraints):
            for var, coef in con.expr.terms.items():
                rows.append(i)
                cols.append(var.index)
                vals.append(coef)
            lo.append(-np.inf if con.sense == LE else con.rhs)
            hi.append(np.inf if con.sense == GE else con.rhs)
        m = len(model.constraints)
        self.A = sparse.csr_array((vals, (rows, cols)), shape=(m, n))
        self.row_lo = np.array(lo, dtype=float)
        self.row_hi = np.array(hi, dtype=float)
        self.senses = [c.sense for c in model.constraints]

    def highs_lp(self):
        lp = highspy.HighsLp()
        csc = sparse.csc_array(self.A)
        lp.num_col_ = len(self.c)
        lp.num_row_ = csc.shape[0]
        lp.col_cost_ = self.c
        lp.col_lower_ = self.lb
        lp.col_upper_ = self.ub
        lp.row_lower_ = self.row_lo
        lp.row_upper_ = self.row_hi
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = csc.indptr
        lp.a_matrix_.index_ = csc.indices
        lp.a_matrix_.value_ = csc.data
        lp.integrality_ = [highspy.HighsVarType.kInteger if i else highspy.HighsVarType.kContinuous
                           for i in self.integral]
        return lp

    def objective(self, x) -> float:
        return self.sign * float(self.c @ x) + self.c0

    def assignment(self, x) -> dict[str, float]:
        x = np.where(self.integral, np.round(x), x)
        # clamp noise on continuous values to their bounds
        x = np.minimum(np.maximum(x, self.lb), self.ub)
        return {name: float(v) for name, v in zip(self.names, x)}


def _highs(arr: _Arrays, gap, time_limit):
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", float(gap))
    h.setOptionValue("mip_feasibility_tolerance", FEAS_TOL / 10)
    h.setOptionValue("primal_feasibility_tolerance", FEAS_TOL / 10)
    if time_limit is not None:
        h.setOptionValue("time_limit", max(float(time_limit), 0.01))
    h.passModel(arr.highs_lp())
    return h


def _complete_hint(arr: _Arrays, hint, time_limit):
    """Fix the hinted variables, solve for the rest; a full start vector or None."""
    lb, ub = arr.lb.copy(), arr.ub.copy()
    index = {name: n for n, name in enumerate(arr.names)}
    for name, value in hint.items():
        n = index.get(name)
        if n is None:
            continue
        value = min(max(float(value), lb[n]), ub[n])
        lb[n] = ub[n] = value
    fixed = copy.copy(arr)
    fixed.lb, fixed.ub = lb, ub
    h = _highs(fixed, 1e-2, time_limit)
    h.run()
    if h.getInfo().primal_solution_status != 2:
        return None
    return np.array(h.getSolution().col_value)


def solve(model: MilpModel, gap: float = DEFAULT_GAP, time_limit: float | None = None,
          backend: str = "highs", hint: dict[str, float] | None = None) -> Solution:
    """Solve ``model`` and return a :class:`Solution`.

    ``hint`` optionally names values for some variables; when they extend
    to a feasible point it is used as the starting incumbent. The returned
    assignment satisfies every row within ``FEAS_TOL``; integer variables
    are rounded to exact integers.
    """
    if backend == "bb":
        return bb_solve(model, gap=gap, time_limit=time_limit)
    if backend != "highs":
        raise ModelError(f"unknown backend {backend!r}")

    arr = _Arrays(model)
    start = time.perf_counter()
    x0 = None
    if hint:
        budget = 10.0 if time_limit is None else max(time_limit / 4, 0.01)
        x0 = _complete_hint(arr, hint, budget)
    remaining = None if time_limit is None else time_limit - (time.perf_counter() - start)
    h = _highs(arr, gap, remaining)
    if x0 is not None:
        start_point = highspy.HighsSolution()
        start_point.col_value = list(x0)
        start_point.value_valid = True
        h.setSolution(start_point)
    h.run()
    elapsed = time.perf_counter() - start

    status = h.getModelStatus()
    info = h.getInfo()
    has_x = info.primal_solution_status == 2  # kSolutionStatusFeasible
    if status == highspy.HighsModelStatus.kInfeasible:
        return Solution(Solution.INFEASIBLE, None, {}, None, elapsed, "highs")
    if status in (highspy.HighsModelStatus.kUnbounded,
                  highspy.HighsModelStatus.kUnboundedOrInfeasible) and not has_x:
        raise ModelError("model is unbounded or infeasible")
    if not has_x:
        kind = Solution.TIME_LIMIT if status == highspy.HighsModelStatus.kTimeLimit \
            else Solution.INFEASIBLE
        return Solution(kind, None, {}, None, elapsed, "highs")
    assignment = arr.assignment(np.array(h.getSolution().col_value))
    value = model.objective.value(assignment)
    mip_gap = float(info.mip_gap) if arr.integral.any() else 0.0
    if not math.isfinite(mip_gap):
        mip_gap = math.inf
    if status == highspy.HighsModelStatus.kOptimal:
        kind = Solution.OPTIMAL if mip_gap <= gap + 1e-12 else Solution.GAP_LIMIT
    else:
        kind = Solution.TIME_LIMIT
    return Solution(kind, value, assignment, mip_gap, elapsed, "highs")


def _split_rows(arr: _Arrays) -> dict:
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    A = arr.A.toarray()
    for i, sense in enumerate(arr.senses):
        if sense == LE:
            ub_rows.append(A[i])
            ub_rhs.append(arr.row_hi[i])
        elif sense == GE:
            ub_rows.append(-A[i])
            ub_rhs.append(-arr.row_lo[i])
        else:
            eq_rows.append(A[i])
            eq_rhs.append(arr.row_lo[i])
    kwargs = {}
    if ub_rows:
        kwargs.update(A_ub=np.array(ub_rows), b_ub=np.array(ub_rhs))
    if eq_rows:
        kwargs.update(A_eq=np.array(eq_rows), b_eq=np.array(eq_rhs))
    return kwargs


def _lp_relaxation(arr: _Arrays, rows: dict, lb, ub):
    res = linprog(arr.c, bounds=list(zip(lb, ub)), method="highs", **rows)
    if res.status == 2:
        return None
    if res.status != 0:
        raise ModelError(f"LP relaxation failed: {res.message}")
    return res.x, float(res.fun)


def bb_solve(model: MilpModel, gap: float = DEFAULT_GAP, time_limit: float | None = None,
             max_integer_vars: int = BB_MAX_INTEGER_VARS) -> Solution:
    """Best-first branch and bound with LP relaxations at every node.

    Refuses models with more than ``max_integer_vars`` free integer
    variables; use :func:`solve` for those.
    """
    arr = _Arrays(model)
    free_int = int(np.sum(arr.integral & (arr.ub > arr.lb)))
    if free_int > max_integer_vars:
        raise ModelTooLarge(
            f"{free_int} integer variables exceed the branch-and-bound guard "
            f"({max_integer_vars}); use external backend"
        )
    start = time.perf_counter()
    lb0 = np.where(arr.integral, np.ceil(arr.lb - FEAS_TOL), arr.lb)
    ub0 = np.where(arr.integral, np.floor(arr.ub + FEAS_TOL), arr.ub)

    best_x, best_val = None, math.inf  # minimisation form
    counter = 0
    rows = _split_rows(arr)
    root = _lp_relaxation(arr, rows, lb0, ub0) if np.all(lb0 <= ub0) else None
    if root is None:
        return Solution(Solution.INFEASIBLE, None, {}, None, time.perf_counter() - start, "bb")
    heap = [(root[1], counter, lb0, ub0, root[0])]
    timed_out = False
    proven_bound = None
    while heap:
        if time_limit is not None and time.perf_counter() - start > time_limit:
            timed_out = True
            proven_bound = min(item[0] for item in heap)
            break
        bound, _, lb, ub, x = heapq.heappop(heap)
        if best_x is not None and bound >= best_val - gap * max(1.0, abs(best_val)) - 1e-9:
            proven_bound = bound
            break
        frac = np.abs(x - np.round(x))
        frac[~arr.integral] = 0.0
        j = int(np.argmax(frac))
        if frac[j] <= FEAS_TOL:
            if bound < best_val:
                best_x, best_val = x, bound
            continue
        for side in ("down", "up"):
            lb2, ub2 = lb.copy(), ub.copy()
            if side == "down":
                ub2[j] = math.floor(x[j])
            else:
                lb2[j] = math.ceil(x[j])
            if lb2[j] > ub2[j]:
                continue
            child = _lp_relaxation(arr, rows, lb2, ub2)
            if child is None:
                continue
            if best_x is not None and child[1] >= best_val - 1e-9:
                continue
            counter += 1
            heapq.heappush(heap, (child[1], counter, lb2, ub2, child[0]))
    elapsed = time.perf_counter() - start

    if best_x is None:
        status = Solution.TIME_LIMIT if timed_out else Solution.INFEASIBLE
        return Solution(status, None, {}, None, elapsed, "bb")
    if proven_bound is None:
        proven_bound = best_val
    rel_gap = max(0.0, best_val - proven_bound) / max(1.0, abs(best_val))
    assignment = arr.assignment(best_x)
    status = Solution.TIME_LIMIT if timed_out and rel_gap > gap else Solution.OPTIMAL
    return Solution(status, model.objective.value(assignment), assignment, rel_gap, elapsed, "bb")
