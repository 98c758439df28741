"""Case files: network, disaster scenario and model settings in one text file.

See ``docs/formats.md`` for the grammar. Emission is canonical (fixed
section order, records sorted by id, shortest round-trip numbers), so
``emit_case(parse_case(text))`` is a fixed point.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

from ..formulation import FormulationConfig
from ..netmodel import (NODE_KINDS, TERMINAL, Bus, CommLink, CommNode, CoupledNetwork,
                        Line, Scenario, validate)
from .records import (FieldReader, FormatError, FormatIssue, atomic_write, fmt_number,
                      read_sections, write_record)

FORMAT = "sdnrestore-case"
VERSION = 1

SECTIONS = ("case", "settings", "buses", "lines", "nodes", "links", "scenario")

_BUS_FIELDS = {"id", "p", "q", "weight", "load_switch", "source", "pg_max", "qg_max"}
_LINE_FIELDS = {"id", "from", "to", "r", "x", "p_max", "q_max", "sw_from", "sw_to"}
_NODE_FIELDS = {"id", "kind", "bw", "fwd", "bus", "w", "tau"}
_LINK_FIELDS = {"id", "a", "b", "bw", "delay"}
_STATE_FIELDS = {
    "bus": {"id", "ok", "load"},
    "line": {"id", "ok", "closed"},
    "node": {"id", "ok"},
    "link": {"id", "ok"},
}

# settings keys and their parsers; defaults come from FormulationConfig
_SETTING_TYPES = {
    "delta": float,
    "v_ref": float,
    "big_m_voltage": float,
    "big_m_commodity": float,
    "epsilon": float,
    "enforce_load_switch_comm": bool,
    "require_both_ends_observed_to_close": bool,
    "gap": float,
    "time_limit": float,
}
_META_KEYS = {"format", "version", "name", "seed", "profile", "max_stages",
              "default_bandwidth", "default_delay_cap"}

DEFAULT_BANDWIDTH = 2.0  # Mbps per terminal
DEFAULT_DELAY_CAP = 10.0  # ms per terminal


@dataclass
class Case:
    net: CoupledNetwork
    sc: Scenario
    cfg: FormulationConfig = field(default_factory=FormulationConfig)
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.meta.get("name", "case")

    @property
    def max_stages(self) -> int | None:
        value = self.meta.get("max_stages")
        return int(value) if value is not None else None


class CaseError(FormatError):
    """Syntax, schema or invariant errors, each tied to a line and column."""


# parsing ------------------------------------------------------------------

def parse_case(text: str) -> Case:
    sections, issues = read_sections(text)
    by_name: dict[str, object] = {}
    for sec in sections:
        if sec.name not in SECTIONS:
            issues.append(FormatIssue(sec.line, 2, f"unknown section [{sec.name}]"))
        elif sec.name in by_name:
            issues.append(FormatIssue(sec.line, 2, f"duplicate section [{sec.name}]"))
        else:
            by_name[sec.name] = sec
    head = by_name.get("case")
    if head is None:
        issues.append(FormatIssue(1, 1, "missing [case] section"))
        raise CaseError(issues)
    meta = _parse_meta(head, issues)
    if issues:
        raise CaseError(issues)

    cfg = _parse_settings(by_name.get("settings"), issues)
    bw_default = float(meta.get("default_bandwidth", DEFAULT_BANDWIDTH))
    tau_default = float(meta.get("default_delay_cap", DEFAULT_DELAY_CAP))

    where: dict[tuple[str, str], tuple[int, int]] = {}
    buses = _collect(by_name.get("buses"), "bus", _BUS_FIELDS, _bus, issues, where)
    lines = _collect(by_name.get("lines"), "line", _LINE_FIELDS, _line, issues, where)
    nodes = _collect(by_name.get("nodes"), "node", _NODE_FIELDS,
                     lambda r: _node(r, bw_default, tau_default), issues, where)
    links = _collect(by_name.get("links"), "link", _LINK_FIELDS, _link, issues, where)
    if issues:
        raise CaseError(issues)
    net = CoupledNetwork.build(buses, lines, nodes, links)
    sc = _parse_scenario(by_name.get("scenario"), net, issues)
    if issues:
        raise CaseError(issues)

    kinds = {"bus": net.buses, "line": net.lines, "node": net.nodes, "link": net.links}
    for v in validate(net, sc):
        kind = next((k for k, table in kinds.items() if v.element in table), None)
        line, col = where.get((kind, v.element), (1, 1))
        issues.append(FormatIssue(line, col, str(v)))
    if issues:
        raise CaseError(issues)
    return Case(net, sc, cfg, meta)


def _parse_meta(sec, issues) -> dict[str, str]:
    meta = {}
    for key, loc in sec.settings.items():
        if key not in _META_KEYS:
            issues.append(FormatIssue(loc.line, loc.col, f"unknown [case] key {key!r}"))
            continue
        meta[key] = loc.value
    for rec in sec.records:
        issues.append(FormatIssue(rec.line, rec.col, "[case] takes key = value lines only"))
    fmt, ver = sec.settings.get("format"), sec.settings.get("version")
    if fmt is None or fmt.value != FORMAT:
        issues.append(FormatIssue(sec.line, 1, f"[case] needs format = {FORMAT}"))
    if ver is None:
        issues.append(FormatIssue(sec.line, 1, "[case] needs version"))
    elif ver.value != str(VERSION):
        issues.append(FormatIssue(ver.line, ver.col, f"unsupported version {ver.value}"))
    for key in ("seed", "max_stages"):
        loc = sec.settings.get(key)
        if loc is not None and not loc.value.lstrip("-").isdigit():
            issues.append(FormatIssue(loc.line, loc.col, f"{key}: expected an integer"))
    for key in ("default_bandwidth", "default_delay_cap"):
        loc = sec.settings.get(key)
        if loc is not None:
            try:
                float(loc.value)
            except ValueError:
                issues.append(FormatIssue(loc.line, loc.col, f"{key}: not a number"))
    meta.pop("format", None)
    meta.pop("version", None)
    return meta


def _parse_settings(sec, issues) -> FormulationConfig:
    if sec is None:
        return FormulationConfig()
    values = {}
    for rec in sec.records:
        issues.append(FormatIssue(rec.line, rec.col, "[settings] takes key = value lines only"))
    for key, loc in sec.settings.items():
        kind = _SETTING_TYPES.get(key)
        if kind is None:
            issues.append(FormatIssue(loc.line, loc.col, f"unknown setting {key!r}"))
        elif kind is bool:
            if loc.value not in ("0", "1"):
                issues.append(FormatIssue(loc.line, loc.col, f"{key}: expected 0 or 1"))
            else:
                values[key] = loc.value == "1"
        else:
            try:
                values[key] = float(loc.value)
            except ValueError:
                issues.append(FormatIssue(loc.line, loc.col, f"{key}: not a number"))
    return FormulationConfig(**values)


def _collect(sec, kind, allowed, make, issues, where):
    out, seen = [], set()
    if sec is None:
        return out
    for key, loc in sec.settings.items():
        issues.append(FormatIssue(loc.line, loc.col, f"unexpected setting {key!r}"))
    for rec in sec.records:
        if rec.kind != kind:
            issues.append(FormatIssue(rec.line, rec.col, f"expected {kind} record, got {rec.kind!r}"))
            continue
        before = len(issues)
        r = FieldReader(rec, issues, allowed)
        item = make(r)
        if len(issues) > before or item is None:
            continue
        if item.id in seen:
            loc = rec.fields["id"]
            issues.append(FormatIssue(loc.line, loc.col, f"duplicate {kind} id {item.id!r}"))
            continue
        seen.add(item.id)
        where[(kind, item.id)] = (rec.line, rec.col)
        out.append(item)
    return out


def _bus(r: FieldReader):
    source = r.flag("source", False)
    bus = Bus(
        id=r.text("id"),
        p_load=r.number("p", 0.0),
        q_load=r.number("q", 0.0),
        load_weight=r.number("weight", 1.0),
        has_load_switch=r.flag("load_switch", True),
        has_source=source,
        source_p_max=r.number("pg_max") if source else r.number("pg_max", None),
        source_q_max=r.number("qg_max") if source else r.number("qg_max", None),
    )
    return bus


def _line(r: FieldReader):
    return Line(
        id=r.text("id"), from_bus=r.text("from"), to_bus=r.text("to"),
        r=r.number("r"), x=r.number("x"), p_max=r.number("p_max"), q_max=r.number("q_max"),
        switch_at_from=r.flag("sw_from", True), switch_at_to=r.flag("sw_to", True),
    )


def _node(r: FieldReader, bw_default, tau_default):
    kind = r.text("kind")
    if kind is not None and kind not in NODE_KINDS:
        loc = r.record.fields["kind"]
        r.issues.append(FormatIssue(loc.line, loc.col, f"kind must be one of {NODE_KINDS}"))
        return None
    terminal = kind == TERMINAL
    return CommNode(
        id=r.text("id"), kind=kind, bandwidth_cap=r.number("bw"),
        forward_delay=r.number("fwd", 0.0),
        attached_bus=r.text("bus", None),
        required_bandwidth=r.number("w", bw_default if terminal else None),
        delay_cap=r.number("tau", tau_default if terminal else None),
    )


def _link(r: FieldReader):
    return CommLink(id=r.text("id"), end_a=r.text("a"), end_b=r.text("b"),
                    bandwidth_cap=r.number("bw"), prop_delay=r.number("delay", 0.0))


def _parse_scenario(sec, net, issues) -> Scenario:
    ok = {k: {} for k in _STATE_FIELDS}
    closed, loads = {}, {}
    tables = {"bus": net.buses, "line": net.lines, "node": net.nodes, "link": net.links}
    if sec is not None:
        for key, loc in sec.settings.items():
            issues.append(FormatIssue(loc.line, loc.col, f"unexpected setting {key!r}"))
        seen = set()
        for rec in sec.records:
            if rec.kind not in _STATE_FIELDS:
                issues.append(FormatIssue(rec.line, rec.col, f"unknown state record {rec.kind!r}"))
                continue
            r = FieldReader(rec, issues, _STATE_FIELDS[rec.kind])
            ident = r.text("id")
            if ident is None:
                continue
            if ident not in tables[rec.kind]:
                loc = rec.fields["id"]
                issues.append(FormatIssue(loc.line, loc.col, f"unknown {rec.kind} {ident!r}"))
                continue
            if (rec.kind, ident) in seen:
                loc = rec.fields["id"]
                issues.append(FormatIssue(loc.line, loc.col,
                                          f"duplicate state for {rec.kind} {ident!r}"))
                continue
            seen.add((rec.kind, ident))
            flag = r.flag("ok", True)
            if flag is not None:
                ok[rec.kind][ident] = int(flag)
            if rec.kind == "line":
                value = r.flag("closed", False)
                if value is not None:
                    closed[ident] = int(value)
            if rec.kind == "bus":
                value = r.flag("load", False)
                if value is not None:
                    loads[ident] = int(value)
    sc = Scenario.build(
        net,
        failed_buses=[k for k, v in ok["bus"].items() if not v],
        failed_lines=[k for k, v in ok["line"].items() if not v],
        failed_nodes=[k for k, v in ok["node"].items() if not v],
        failed_links=[k for k, v in ok["link"].items() if not v],
        line_initial=closed, load_initial=loads,
    )
    return sc


# emission -----------------------------------------------------------------

def emit_case(case: Case) -> str:
    net, sc, cfg = case.net, case.sc, case.cfg
    out = ["# sdnrestore case file", "[case]", f"format = {FORMAT}", f"version = {VERSION}"]
    for key in sorted(case.meta):
        if key not in ("format", "version"):
            out.append(f"{key} = {case.meta[key]}")

    out += ["", "[settings]"]
    default = FormulationConfig()
    for f in dc_fields(FormulationConfig):
        if f.name not in _SETTING_TYPES:
            continue
        value = getattr(cfg, f.name)
        if value is None or (value == getattr(default, f.name) and f.name not in ("delta", "v_ref")):
            continue
        out.append(f"{f.name} = {fmt_number(value)}")

    out += ["", "[buses]"]
    for b in net.buses.values():
        out.append(write_record("bus", [
            ("id", b.id), ("p", b.p_load), ("q", b.q_load), ("weight", b.load_weight),
            ("load_switch", b.has_load_switch), ("source", b.has_source),
            ("pg_max", b.source_p_max), ("qg_max", b.source_q_max),
        ]))
    out += ["", "[lines]"]
    for ln in net.lines.values():
        out.append(write_record("line", [
            ("id", ln.id), ("from", ln.from_bus), ("to", ln.to_bus), ("r", ln.r), ("x", ln.x),
            ("p_max", ln.p_max), ("q_max", ln.q_max),
            ("sw_from", ln.switch_at_from), ("sw_to", ln.switch_at_to),
        ]))
    out += ["", "[nodes]"]
    for n in net.nodes.values():
        out.append(write_record("node", [
            ("id", n.id), ("kind", n.kind), ("bw", n.bandwidth_cap), ("fwd", n.forward_delay),
            ("bus", n.attached_bus), ("w", n.required_bandwidth), ("tau", n.delay_cap),
        ]))
    out += ["", "[links]"]
    for k in net.links.values():
        out.append(write_record("link", [
            ("id", k.id), ("a", k.end_a), ("b", k.end_b), ("bw", k.bandwidth_cap),
            ("delay", k.prop_delay),
        ]))
    out += ["", "[scenario]"]
    for i in net.buses:
        out.append(write_record("bus", [("id", i), ("ok", sc.bus_ok[i]),
                                        ("load", sc.load_initial.get(i, 0))]))
    for k in net.lines:
        out.append(write_record("line", [("id", k), ("ok", sc.line_ok[k]),
                                         ("closed", sc.line_initial[k])]))
    for m in net.nodes:
        out.append(write_record("node", [("id", m), ("ok", sc.node_ok[m])]))
    for l in net.links:
        out.append(write_record("link", [("id", l), ("ok", sc.link_ok[l])]))
    return "\n".join(out) + "\n"


def read_case(path) -> Case:
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read())


def write_case(case: Case, path) -> None:
    atomic_write(path, emit_case(case))


__all__ = ["Case", "CaseError", "parse_case", "emit_case", "read_case", "write_case"]
