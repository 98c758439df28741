"""Comparison reports: a fixed-width table for people and JSON for programs.

The text is always rendered from the JSON-ready structure, so
``render_text(json.loads(js)) == text`` for anything ``emit_report`` returns.
"""
from __future__ import annotations

import json

from ..planner import RestorationPlan

FORMAT = "sdnrestore-report"
VERSION = 1

# column order is part of the format
STAGE_FIELDS = ("algorithm", "stage", "kind", "wall_time_s", "communicating", "energized",
                "stage_kw", "cumulative_kw", "status")
TOTAL_FIELDS = ("algorithm", "stages", "wall_time_s", "communicating", "energized",
                "total_kw", "error")

_WIDTH = {"algorithm": 9, "stage": 5, "kind": 4, "wall_time_s": 11, "communicating": 13,
          "energized": 9, "stage_kw": 10, "cumulative_kw": 13, "status": 10}


def _round(x: float) -> float:
    return round(float(x), 6)


def build_report(plans: list[RestorationPlan], case_name: str = "") -> dict:
    stages, totals = [], []
    for plan in plans:
        for st in plan.stages:
            row = {
                "algorithm": plan.algorithm,
                "stage": st.stage_index,
                "kind": st.kind,
                "wall_time_s": _round(st.solve_stats.wall_time),
                "communicating": st.communicating,
                "energized": len(st.energized_buses),
                "stage_kw": _round(st.stage_pickup_kw),
                "cumulative_kw": _round(st.cumulative_pickup_kw),
                "status": st.solve_stats.status,
            }
            stages.append({k: row[k] for k in STAGE_FIELDS})
        last = plan.stages[-1] if plan.stages else None
        totals.append({
            "algorithm": plan.algorithm,
            "stages": len(plan.stages),
            "wall_time_s": _round(plan.total_wall_time),
            "communicating": last.communicating if last else 0,
            "energized": plan.energized_count,
            "total_kw": _round(plan.total_pickup_kw),
            "error": plan.error,
        })
    return {"format": FORMAT, "version": VERSION, "case": case_name,
            "stages": stages, "totals": totals}


def _cell(key, value) -> str:
    if isinstance(value, float):
        text = f"{value:.3f}" if key == "wall_time_s" else f"{value:.1f}"
    else:
        text = str(value)
    return text.rjust(_WIDTH[key]) if key in _WIDTH else text


def render_text(data: dict) -> str:
    title = "restoration comparison"
    if data.get("case"):
        title += f": {data['case']}"
    out = [title, "  ".join(k.rjust(_WIDTH[k]) for k in STAGE_FIELDS)]
    for row in data["stages"]:
        out.append("  ".join(_cell(k, row[k]) for k in STAGE_FIELDS))
    if data["totals"]:
        out += ["", "totals"]
        for row in data["totals"]:
            line = (f"{row['algorithm']:<6} stages={row['stages']} "
                    f"wall_time_s={row['wall_time_s']:.3f} "
                    f"communicating={row['communicating']} energized={row['energized']} "
                    f"total_kw={row['total_kw']:.1f}")
            if row["error"]:
                line += f" error={row['error']}"
            out.append(line)
    return "\n".join(out) + "\n"


def emit_report(plans: list[RestorationPlan], case_name: str = "") -> tuple[str, str]:
    """Returns ``(text, json_text)``."""
    data = build_report(plans, case_name)
    return render_text(data), json.dumps(data, indent=2) + "\n"


def load_report(json_text: str) -> dict:
    data = json.loads(json_text)
    if data.get("format") != FORMAT or data.get("version") != VERSION:
        raise ValueError(f"not a {FORMAT} v{VERSION} document")
    for key in ("stages", "totals"):
        if not isinstance(data.get(key), list):
            raise ValueError(f"report missing {key!r} list")
    for row in data["stages"]:
        if tuple(row) != STAGE_FIELDS:
            raise ValueError(f"stage row fields out of order: {list(row)}")
    for row in data["totals"]:
        if tuple(row) != TOTAL_FIELDS:
            raise ValueError(f"total row fields out of order: {list(row)}")
    return data
