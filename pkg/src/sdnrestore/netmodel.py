"""Coupled power/communication network data model and fault-state overlay.

Everything here is immutable after construction. Identifiers are opaque
strings; wherever order matters it is lexicographic on the id.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Mapping

TERMINAL = "terminal"
FORWARDER = "forwarder"
CENTER = "center"
NODE_KINDS = (TERMINAL, FORWARDER, CENTER)


@dataclass(frozen=True)
class Bus:
    id: str
    p_load: float = 0.0
    q_load: float = 0.0
    load_weight: float = 1.0
    has_load_switch: bool = True
    has_source: bool = False
    source_p_max: float | None = None
    source_q_max: float | None = None


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    r: float
    x: float
    p_max: float
    q_max: float
    switch_at_from: bool = True
    switch_at_to: bool = True

    @property
    def controllable(self) -> bool:
        return self.switch_at_from or self.switch_at_to

    def switch_at(self, bus: str) -> bool:
        if bus == self.from_bus:
            return self.switch_at_from
        if bus == self.to_bus:
            return self.switch_at_to
        raise KeyError(f"bus {bus!r} is not an end of line {self.id!r}")


@dataclass(frozen=True)
class CommNode:
    id: str
    kind: str
    bandwidth_cap: float
    forward_delay: float = 0.0
    attached_bus: str | None = None
    required_bandwidth: float | None = None
    delay_cap: float | None = None


@dataclass(frozen=True)
class CommLink:
    id: str
    end_a: str
    end_b: str
    bandwidth_cap: float
    prop_delay: float = 0.0

    def other(self, node: str) -> str:
        if node == self.end_a:
            return self.end_b
        if node == self.end_b:
            return self.end_a
        raise KeyError(f"node {node!r} is not an end of link {self.id!r}")


def _freeze(items, what):
    out = {}
    for item in items:
        if item.id in out:
            raise ValueError(f"duplicate {what} id {item.id!r}")
        out[item.id] = item
    return MappingProxyType(dict(sorted(out.items())))


@dataclass(frozen=True, eq=False)
class CoupledNetwork:
    """Power network (buses, lines) plus its communication network.

    Construction rejects duplicate ids only; all other invariants are
    reported by :func:`validate` so malformed inputs can be inspected.
    """

    buses: Mapping[str, Bus]
    lines: Mapping[str, Line]
    nodes: Mapping[str, CommNode]
    links: Mapping[str, CommLink]

    @classmethod
    def build(cls, buses, lines, nodes, links) -> CoupledNetwork:
        return cls(
            _freeze(buses, "bus"),
            _freeze(lines, "line"),
            _freeze(nodes, "node"),
            _freeze(links, "link"),
        )

    # incidence caches -------------------------------------------------

    @cached_property
    def _line_incidence(self) -> Mapping[str, tuple[tuple[Line, int], ...]]:
        inc: dict[str, list] = {b: [] for b in self.buses}
        for line in self.lines.values():
            inc.setdefault(line.from_bus, []).append((line, 1))
            inc.setdefault(line.to_bus, []).append((line, -1))
        return {b: tuple(v) for b, v in inc.items()}

    @cached_property
    def _link_incidence(self) -> Mapping[str, tuple[CommLink, ...]]:
        inc: dict[str, list] = {m: [] for m in self.nodes}
        for link in self.links.values():
            inc.setdefault(link.end_a, []).append(link)
            inc.setdefault(link.end_b, []).append(link)
        return {m: tuple(v) for m, v in inc.items()}

    def incident_lines(self, bus: str) -> list[tuple[Line, int]]:
        """Lines touching ``bus`` with their direction sign (+1 at from_bus)."""
        if bus not in self.buses:
            raise KeyError(f"unknown bus {bus!r}")
        return list(self._line_incidence[bus])

    def incident_links(self, node: str) -> list[CommLink]:
        if node not in self.nodes:
            raise KeyError(f"unknown node {node!r}")
        return list(self._link_incidence[node])

    # derived sets -----------------------------------------------------

    @cached_property
    def sources(self) -> tuple[str, ...]:
        return tuple(b for b, bus in self.buses.items() if bus.has_source)

    @cached_property
    def terminals(self) -> tuple[str, ...]:
        return tuple(m for m, n in self.nodes.items() if n.kind == TERMINAL)

    @cached_property
    def forwarders(self) -> tuple[str, ...]:
        return tuple(m for m, n in self.nodes.items() if n.kind == FORWARDER)

    @cached_property
    def center(self) -> str:
        centers = [m for m, n in self.nodes.items() if n.kind == CENTER]
        if len(centers) != 1:
            raise ValueError(f"expected one operation center, found {len(centers)}")
        return centers[0]

    @cached_property
    def terminal_of_bus(self) -> Mapping[str, str]:
        """bus id -> id of the terminal device monitoring it."""
        out = {}
        for m in self.terminals:
            bus = self.nodes[m].attached_bus
            if bus is not None and bus not in out:
                out[bus] = m
        return MappingProxyType(out)

    def monitored_buses(self) -> set[str]:
        """Buses that carry a line-end switch or a load switch."""
        out = {b for b, bus in self.buses.items() if bus.has_load_switch}
        for line in self.lines.values():
            if line.switch_at_from:
                out.add(line.from_bus)
            if line.switch_at_to:
                out.add(line.to_bus)
        return out


@dataclass(frozen=True, eq=False)
class Scenario:
    """Equipment states and the initial operating state for one disaster case."""

    bus_ok: Mapping[str, int]
    line_ok: Mapping[str, int]
    node_ok: Mapping[str, int]
    link_ok: Mapping[str, int]
    line_initial: Mapping[str, int]
    load_initial: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def intact(cls, net: CoupledNetwork, line_initial=None, load_initial=None) -> Scenario:
        return cls.build(net, line_initial=line_initial, load_initial=load_initial)

    @classmethod
    def build(
        cls,
        net: CoupledNetwork,
        *,
        failed_buses=(),
        failed_lines=(),
        failed_nodes=(),
        failed_links=(),
        line_initial=None,
        load_initial=None,
    ) -> Scenario:
        """Total maps over ``net`` with the listed elements marked failed."""

        def ok(keys, failed):
            failed = set(failed)
            return MappingProxyType({k: 0 if k in failed else 1 for k in keys})

        line_initial = dict(line_initial or {})
        load_initial = dict(load_initial or {})
        return cls(
            ok(net.buses, failed_buses),
            ok(net.lines, failed_lines),
            ok(net.nodes, failed_nodes),
            ok(net.links, failed_links),
            MappingProxyType({k: int(line_initial.get(k, 0)) for k in net.lines}),
            MappingProxyType({k: int(load_initial.get(k, 0)) for k in net.buses}),
        )

    def line_operable(self, net: CoupledNetwork, line_id: str) -> bool:
        line = net.lines[line_id]
        return bool(
            self.line_ok[line_id] and self.bus_ok[line.from_bus] and self.bus_ok[line.to_bus]
        )

    def replace(self, **changes) -> Scenario:
        fields = dict(
            bus_ok=self.bus_ok,
            line_ok=self.line_ok,
            node_ok=self.node_ok,
            link_ok=self.link_ok,
            line_initial=self.line_initial,
            load_initial=self.load_initial,
        )
        for key, value in changes.items():
            fields[key] = MappingProxyType({**fields[key], **value})
        return Scenario(**fields)


@dataclass(frozen=True)
class Violation:
    code: str
    element: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} [{self.element}]: {self.message}"


def _check_nonneg(out, code, element, **values):
    for name, value in values.items():
        if value is None or value < 0:
            out.append(Violation(code, element, f"{name} must be >= 0, got {value}"))


def validate(net: CoupledNetwork, sc: Scenario | None = None) -> list[Violation]:
    """Every invariant violation of ``net`` (and ``sc`` when given)."""
    out: list[Violation] = []

    for b, bus in net.buses.items():
        _check_nonneg(out, "bus", b, p_load=bus.p_load, q_load=bus.q_load,
                      load_weight=bus.load_weight)
        has_caps = bus.source_p_max is not None or bus.source_q_max is not None
        if bus.has_source:
            _check_nonneg(out, "bus", b, source_p_max=bus.source_p_max,
                          source_q_max=bus.source_q_max)
        elif has_caps:
            out.append(Violation("bus", b, "source caps given for a bus without a source"))

    for k, line in net.lines.items():
        for end in (line.from_bus, line.to_bus):
            if end not in net.buses:
                out.append(Violation("dangling line", k, f"unknown bus {end!r}"))
        if line.from_bus == line.to_bus:
            out.append(Violation("line", k, "self loop"))
        _check_nonneg(out, "line", k, r=line.r, x=line.x)
        if not (line.p_max > 0 and line.q_max > 0):
            out.append(Violation("line", k, "flow caps must be > 0"))

    centers = [m for m, n in net.nodes.items() if n.kind == CENTER]
    if len(centers) == 0:
        out.append(Violation("no operation center", "-", "no node of kind center"))
    elif len(centers) > 1:
        out.append(Violation("multiple operation centers", ",".join(centers),
                             "exactly one center node is allowed"))

    seen_bus: dict[str, str] = {}
    for m, node in net.nodes.items():
        if node.kind not in NODE_KINDS:
            out.append(Violation("node", m, f"unknown kind {node.kind!r}"))
            continue
        if not node.bandwidth_cap > 0:
            out.append(Violation("node", m, "bandwidth_cap must be > 0"))
        _check_nonneg(out, "node", m, forward_delay=node.forward_delay)
        if node.kind == TERMINAL:
            if node.attached_bus is None or node.attached_bus not in net.buses:
                out.append(Violation("dangling coupling", m,
                                     f"attached bus {node.attached_bus!r} not in power network"))
            elif node.attached_bus in seen_bus:
                out.append(Violation("coupling not injective", m,
                                     f"bus {node.attached_bus!r} also monitored by "
                                     f"{seen_bus[node.attached_bus]!r}"))
            else:
                seen_bus[node.attached_bus] = m
            if node.required_bandwidth is None or node.required_bandwidth < 0:
                out.append(Violation("node", m, "terminal needs required_bandwidth >= 0"))
            if node.delay_cap is None or node.delay_cap < 0:
                out.append(Violation("node", m, "terminal needs delay_cap >= 0"))
        elif node.attached_bus is not None:
            out.append(Violation("node", m, "only terminals attach to buses"))

    for b in sorted(net.monitored_buses()):
        if b in net.buses and b not in seen_bus:
            out.append(Violation("missing coupling", b, "switched bus has no terminal device"))

    for l, link in net.links.items():
        for end in (link.end_a, link.end_b):
            if end not in net.nodes:
                out.append(Violation("dangling link", l, f"unknown node {end!r}"))
        if link.end_a == link.end_b:
            out.append(Violation("link", l, "self loop"))
        if not link.bandwidth_cap > 0:
            out.append(Violation("link", l, "bandwidth_cap must be > 0"))
        _check_nonneg(out, "link", l, prop_delay=link.prop_delay)

    if sc is not None:
        for name, keys in (
            ("bus_ok", net.buses), ("line_ok", net.lines), ("node_ok", net.nodes),
            ("link_ok", net.links), ("line_initial", net.lines), ("load_initial", net.buses),
        ):
            got = getattr(sc, name)
            missing = sorted(set(keys) - set(got))
            extra = sorted(set(got) - set(keys))
            if missing:
                out.append(Violation("scenario", name, f"missing entries {missing}"))
            if extra:
                out.append(Violation("scenario", name, f"unknown entries {extra}"))
            bad = sorted(k for k, v in got.items() if v not in (0, 1))
            if bad:
                out.append(Violation("scenario", name, f"non-binary entries {bad}"))
        if not out:
            out.extend(_initial_state_violations(net, sc))
    return out


def _initial_state_violations(net, sc) -> list[Violation]:
    from .topology import closed_components

    lines = effective_initial_lines(net, sc)
    out = []
    for comp in closed_components(net, lines):
        live = [b for b in comp.buses if net.buses[b].has_source and sc.bus_ok[b]]
        if comp.lines and len(comp.lines) != len(comp.buses) - 1:
            out.append(Violation("initial state not radial", ",".join(comp.lines),
                                 "closed lines form a loop"))
        elif len(live) > 1:
            out.append(Violation("initial state not radial", ",".join(live),
                                 "several sources share one closed component"))
    return out


def effective_initial_lines(net: CoupledNetwork, sc: Scenario) -> dict[str, int]:
    """Initial line states used for planning.

    Closed lines that are damaged (or touch a damaged bus) are taken as
    already isolated. Closed lines inside a component with no live source
    carry no power and are taken as open, since the radiality census only
    admits closed lines on energized buses.
    """
    from .topology import closed_components

    state = {k: int(sc.line_initial[k] and sc.line_operable(net, k)) for k in net.lines}
    for comp in closed_components(net, state):
        if not any(net.buses[b].has_source and sc.bus_ok[b] for b in comp.buses):
            for k in comp.lines:
                state[k] = 0
    return state


def manual_isolation_lines(net: CoupledNetwork, sc: Scenario) -> list[str]:
    """Closed, damaged lines without switches: crews must isolate them."""
    return [
        k for k, line in net.lines.items()
        if sc.line_initial[k] and not sc.line_operable(net, k) and not line.controllable
    ]
