"""CPLEX LP-format text export (for debugging against external tools)."""
from __future__ import annotations

import math
import re

from .model import BINARY, EQ, GE, INTEGER, LE, LinExpr, MilpModel

_BAD = re.compile(r"[^A-Za-z0-9_.(),{}!#$%&;?@|~'`/]")
_LINE_WIDTH = 200


def lp_name(name: str) -> str:
    """Name made safe for LP files; LP names may not start with a digit or '.'."""
    out = _BAD.sub("_", name)
    if not out or out[0].isdigit() or out[0] in ".e":
        out = "_" + out
    return out


def _num(x: float) -> str:
    return repr(float(x)) if x != int(x) or abs(x) >= 1e15 else str(int(x))


def _expr(expr: LinExpr) -> str:
    parts = []
    for var, coef in sorted(expr.terms.items(), key=lambda t: t[0].index):
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = lp_name(var.name) if mag == 1 else f"{_num(mag)} {lp_name(var.name)}"
        parts.append(f"{sign} {body}")
    if not parts:
        return "0"
    text = " ".join(parts)
    if text.startswith("+ "):
        text = text[2:]
    return _wrap(text)


def _wrap(text: str) -> str:
    if len(text) <= _LINE_WIDTH:
        return text
    out, line = [], ""
    for tok in text.split(" "):
        if len(line) + len(tok) + 1 > _LINE_WIDTH:
            out.append(line)
            line = "   " + tok
        else:
            line = f"{line} {tok}" if line else tok
    out.append(line)
    return "\n".join(out)


def to_lp(model: MilpModel) -> str:
    lines = [f"\\ model {model.name}"]
    for tag, count in model.census().items():
        lines.append(f"\\ tag {tag}: {count}")
    lines.append("Maximize" if model.objective_sense == "max" else "Minimize")
    obj = model.objective
    lines.append(f" obj: {_expr(obj)}")
    if obj.constant:
        lines.append(f"\\ objective constant {_num(obj.constant)} omitted")
    lines.append("Subject To")
    op = {LE: "<=", GE: ">=", EQ: "="}
    for con in model.constraints:
        lhs = _expr(con.expr)
        if lhs == "0":
            # LP files cannot hold constant rows; keep a trace instead
            lines.append(f"\\ {con.name}: 0 {op[con.sense]} {_num(con.rhs)}")
            continue
        lines.append(f" {lp_name(con.name)}: {lhs} {op[con.sense]} {_num(con.rhs)}")
    lines.append("Bounds")
    for var in model.vars.values():
        if var.kind == BINARY and var.lb == 0 and var.ub == 1:
            continue
        name = lp_name(var.name)
        lo = "-inf" if math.isinf(var.lb) else _num(var.lb)
        hi = "+inf" if math.isinf(var.ub) else _num(var.ub)
        if var.lb == var.ub:
            lines.append(f" {name} = {lo}")
        else:
            lines.append(f" {lo} <= {name} <= {hi}")
    generals = [lp_name(v.name) for v in model.vars.values() if v.kind == INTEGER]
    binaries = [lp_name(v.name) for v in model.vars.values() if v.kind == BINARY]
    if generals:
        lines.append("Generals")
        lines.extend(f" {n}" for n in generals)
    if binaries:
        lines.append("Binaries")
        lines.extend(f" {n}" for n in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"
