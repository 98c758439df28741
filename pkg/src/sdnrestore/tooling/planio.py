"""Plan files: one section per restoration stage, in the case-file syntax."""
from __future__ import annotations

from urllib.parse import quote, unquote

from ..formulation import Routing
from ..planner import ALGORITHMS, RestorationPlan, RestorationStage, SolveStats
from .records import (FieldReader, FormatError, FormatIssue, atomic_write, fmt_number,
                      read_sections, write_record)

FORMAT = "sdnrestore-plan"
VERSION = 1

_STAGE_KEYS = {"kind", "stage_kw", "cumulative_kw", "objective", "gap", "wall_time", "status"}


class PlanError(FormatError):
    pass


def emit_plan(plan: RestorationPlan, case_name: str = "") -> str:
    out = ["# sdnrestore plan file", "[plan]", f"format = {FORMAT}", f"version = {VERSION}",
           f"algorithm = {plan.algorithm}"]
    if case_name:
        out.append(f"case = {case_name}")
    if plan.error:
        out.append(f"error = {quote(plan.error, safe='')}")
    for st in plan.stages:
        stats = st.solve_stats
        out += ["", f"[stage {st.stage_index}]",
                f"kind = {st.kind}",
                f"stage_kw = {fmt_number(st.stage_pickup_kw)}",
                f"cumulative_kw = {fmt_number(st.cumulative_pickup_kw)}",
                f"objective = {fmt_number(stats.objective)}",
                f"gap = {fmt_number(stats.gap)}",
                f"wall_time = {fmt_number(round(stats.wall_time, 6))}",
                f"status = {stats.status}"]
        for k, action in st.line_ops:
            out.append(write_record("line_op", [("line", k), ("action", action)]))
        for i, action in st.load_ops:
            out.append(write_record("load_op", [("bus", i), ("action", action)]))
        for t in sorted(st.comm_states):
            route = st.routing.get(t, Routing())
            fields = [("id", t), ("s", int(st.comm_states[t]))]
            if t in st.delays:
                fields.append(("delay", st.delays[t]))
            fields += [("nodes", ",".join(route.nodes) or "-"),
                       ("links", ",".join(route.links) or "-")]
            out.append(write_record("terminal", fields))
        if st.kind == "load":
            out.append(write_record("energized",
                                    [("buses", ",".join(sorted(st.energized_buses)) or "-")]))
    return "\n".join(out) + "\n"


def parse_plan(text: str) -> tuple[RestorationPlan, dict[str, str]]:
    """Returns the plan and its header (``algorithm``, ``case`` ...)."""
    sections, issues = read_sections(text)
    if not sections or sections[0].name != "plan":
        issues.append(FormatIssue(1, 1, "file must start with a [plan] section"))
        raise PlanError(issues)
    head = sections[0]
    meta = {k: v.value for k, v in head.settings.items()}
    for key, loc in head.settings.items():
        if key not in ("format", "version", "algorithm", "case", "error"):
            issues.append(FormatIssue(loc.line, loc.col, f"unknown [plan] key {key!r}"))
    if meta.get("format") != FORMAT or meta.get("version") != str(VERSION):
        issues.append(FormatIssue(head.line, 1, f"[plan] needs format = {FORMAT}, version = {VERSION}"))
    algorithm = meta.get("algorithm", "")
    if algorithm not in ALGORITHMS:
        issues.append(FormatIssue(head.line, 1, f"algorithm must be one of {ALGORITHMS}"))

    stages = []
    for sec in sections[1:]:
        if sec.name != "stage" or not sec.arg.isdigit():
            issues.append(FormatIssue(sec.line, 2, "expected [stage N]"))
            continue
        stage = _parse_stage(sec, issues)
        if stage is not None:
            stages.append(stage)
    if issues:
        raise PlanError(issues)
    plan = RestorationPlan(algorithm, stages, unquote(meta.get("error", "")))
    return plan, meta


def _parse_stage(sec, issues):
    values = {}
    for key, loc in sec.settings.items():
        if key not in _STAGE_KEYS:
            issues.append(FormatIssue(loc.line, loc.col, f"unknown stage key {key!r}"))
            continue
        if key in ("kind", "status"):
            values[key] = loc.value
            continue
        try:
            values[key] = float(loc.value)
        except ValueError:
            issues.append(FormatIssue(loc.line, loc.col, f"{key}: not a number"))
    for key in ("kind", "cumulative_kw"):
        if key not in values:
            issues.append(FormatIssue(sec.line, 1, f"stage missing {key!r}"))
    kind = values.get("kind")
    if kind not in (None, "load", "comm"):
        loc = sec.settings["kind"]
        issues.append(FormatIssue(loc.line, loc.col, "kind must be load or comm"))

    line_ops, load_ops, comm, routing, delays, energized = [], [], {}, {}, {}, set()
    for rec in sec.records:
        if rec.kind == "line_op":
            r = FieldReader(rec, issues, {"line", "action"})
            line_ops.append((r.text("line"), r.text("action")))
        elif rec.kind == "load_op":
            r = FieldReader(rec, issues, {"bus", "action"})
            load_ops.append((r.text("bus"), r.text("action")))
        elif rec.kind == "terminal":
            r = FieldReader(rec, issues, {"id", "s", "delay", "nodes", "links"})
            t = r.text("id")
            s = r.flag("s")
            if t is None or s is None:
                continue
            comm[t] = int(s)
            routing[t] = Routing(r.items("nodes"), r.items("links"))
            delay = r.number("delay", None)
            if delay is not None:
                delays[t] = delay
        elif rec.kind == "energized":
            r = FieldReader(rec, issues, {"buses"})
            energized |= set(r.items("buses"))
        else:
            issues.append(FormatIssue(rec.line, rec.col, f"unknown stage record {rec.kind!r}"))
    if issues:
        return None
    stats = SolveStats(values.get("objective", 0.0), values.get("gap", 0.0),
                       values.get("wall_time", 0.0), values.get("status", "optimal"))
    return RestorationStage(
        stage_index=int(sec.arg), kind=kind, routing=routing, comm_states=comm,
        line_ops=line_ops, load_ops=load_ops, energized_buses=energized,
        stage_pickup_kw=values.get("stage_kw", 0.0),
        cumulative_pickup_kw=values["cumulative_kw"], solve_stats=stats, delays=delays,
    )


def read_plan(path):
    with open(path, encoding="utf-8") as fh:
        return parse_plan(fh.read())


def write_plan(plan: RestorationPlan, path, case_name: str = "") -> None:
    atomic_write(path, emit_plan(plan, case_name))
