"""Solver-independent checks of routing, power feasibility and switch control.

Nothing here reads auxiliary solver values: delays, bandwidth sums, flows
and voltages are recomputed from the raw routing support and switch states.
"""
from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import networkx as nx

from .formulation import DROP_TO_KV, FormulationConfig, Routing, StageState
from .netmodel import TERMINAL, CoupledNetwork, Scenario, Violation
from .topology import closed_components, closed_graph

TOL = 1e-6


# routing ----------------------------------------------------------------

@dataclass
class TerminalVerdict:
    terminal: str
    communicating: bool
    ok: bool
    path: tuple[str, ...] = ()
    delay: float = 0.0
    reason: str = ""


@dataclass
class RoutingVerdict:
    terminals: dict[str, TerminalVerdict]
    violations: list[Violation]
    node_load: dict[str, float]
    link_load: dict[str, float]
    delays: dict[str, float]

    @property
    def ok(self) -> bool:
        return not self.violations


def _walk_path(net, start, end, links):
    """Follow a degree-2 support from ``start``; returns (nodes, used links)."""
    by_node = defaultdict(list)
    for l in links:
        link = net.links[l]
        by_node[link.end_a].append(l)
        by_node[link.end_b].append(l)
    nodes, used = [start], []
    current, prev_link = start, None
    while current != end:
        nxt = [l for l in by_node[current] if l != prev_link and l not in used]
        if not nxt:
            return None, used
        prev_link = nxt[0]
        used.append(prev_link)
        current = net.links[prev_link].other(current)
        nodes.append(current)
        if len(nodes) > len(net.nodes) + 1:
            return None, used
    return tuple(nodes), used


def verify_terminal(net: CoupledNetwork, sc: Scenario, t: str, route: Routing,
                    communicating: bool | None = None) -> TerminalVerdict:
    nodes, links = set(route.nodes), set(route.links)
    center = net.center
    if communicating is None:
        communicating = t in nodes
    node_delay = sum(net.nodes[m].forward_delay for m in nodes if net.nodes[m].kind != TERMINAL)
    delay = sum(net.links[l].prop_delay for l in links) + node_delay

    def bad(reason):
        return TerminalVerdict(t, communicating, False, (), delay, reason)

    if not communicating:
        if nodes or links:
            return bad("stray cycle")
        return TerminalVerdict(t, False, True, (), 0.0)
    if not sc.node_ok[t]:
        return bad("eq27")
    for l in sorted(links):
        if not sc.link_ok[l]:
            return bad("eq21")
    for m in sorted(nodes):
        if not sc.node_ok[m]:
            return bad("eq22")
    if t not in nodes:
        return bad("eq25")
    if center not in nodes:
        return bad("eq26")
    degree = defaultdict(int)
    for l in links:
        link = net.links[l]
        degree[link.end_a] += 1
        degree[link.end_b] += 1
    for m, node in net.nodes.items():
        inside = m in nodes
        if node.kind == "center":
            want, tag = (1 if inside else 0), "eq23"
        elif node.kind == TERMINAL:
            want, tag = (1 if m == t and inside else 0), "eq25"
            if m != t and inside:
                return bad("eq25")
        else:
            want, tag = (2 if inside else 0), "eq24"
        if degree[m] != want:
            return bad(tag)
    path, used = _walk_path(net, t, center, links)
    if path is None:
        return bad("eq24")
    if set(used) != links or set(path) != nodes:
        return bad("stray cycle")
    if delay > net.nodes[t].delay_cap + TOL:
        return TerminalVerdict(t, True, False, path, delay, "eq33")
    return TerminalVerdict(t, True, True, path, delay)


def verify_routing(net: CoupledNetwork, sc: Scenario, ra: Mapping[str, Routing],
                   comm_states: Mapping[str, int] | None = None) -> RoutingVerdict:
    """Check every terminal's routing support and the shared bandwidth budget."""
    verdicts, violations = {}, []
    node_load = {m: 0.0 for m in net.nodes}
    link_load = {l: 0.0 for l in net.links}
    delays = {}
    for t in net.terminals:
        route = ra.get(t, Routing())
        s = None if comm_states is None else bool(comm_states.get(t, 0))
        verdict = verify_terminal(net, sc, t, route, s)
        verdicts[t] = verdict
        delays[t] = verdict.delay
        if not verdict.ok:
            violations.append(Violation(verdict.reason, t, "routing check failed"))
        w = net.nodes[t].required_bandwidth
        for m in route.nodes:
            node_load[m] += w
        for l in route.links:
            link_load[l] += w
    for m, node in net.nodes.items():
        if node_load[m] > node.bandwidth_cap + TOL:
            violations.append(Violation("eq29", m, f"{node_load[m]:g} > {node.bandwidth_cap:g} Mbps"))
    for l, link in net.links.items():
        if link_load[l] > link.bandwidth_cap + TOL:
            violations.append(Violation("eq31", l, f"{link_load[l]:g} > {link.bandwidth_cap:g} Mbps"))
    return RoutingVerdict(verdicts, violations, node_load, link_load, delays)


def prune_cycles(net: CoupledNetwork, ra: Mapping[str, Routing]) -> dict[str, Routing]:
    """Drop support components that do not contain the terminal itself."""
    out = {}
    for t, route in ra.items():
        g = nx.MultiGraph()
        g.add_nodes_from(route.nodes)
        for l in route.links:
            link = net.links[l]
            g.add_edge(link.end_a, link.end_b, key=l)
        if t not in g:
            out[t] = Routing()
            continue
        keep = nx.node_connected_component(g, t)
        out[t] = Routing(
            tuple(m for m in route.nodes if m in keep),
            tuple(l for l in route.links if net.links[l].end_a in keep),
        )
    return out


# reachability -------------------------------------------------------------

@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    links: tuple[str, ...]
    delay: float

    def as_routing(self) -> Routing:
        return Routing(tuple(sorted(self.nodes)), tuple(sorted(self.links)))


def _alive(sc, m=None, l=None):
    if sc is None:
        return True
    if m is not None and not sc.node_ok[m]:
        return False
    if l is not None and not sc.link_ok[l]:
        return False
    return True


def shortest_routes(net: CoupledNetwork, sc: Scenario | None = None) -> dict[str, Path]:
    """Minimum-delay terminal->center path for every reachable terminal.

    Paths relay only through forwarders (a terminal forwards nothing but its
    own data). With ``sc`` omitted the intact network is used. Ties break
    on the lexicographic node sequence so results are deterministic.
    """
    center = net.center
    if not _alive(sc, m=center):
        return {}
    fwd = {m: (n.forward_delay if n.kind != TERMINAL else 0.0) for m, n in net.nodes.items()}
    # search outward from the center; paths are stored center-first
    heap = [(fwd[center], (center,), ())]
    best: dict[str, tuple] = {}
    while heap:
        dist, nodes, links = heapq.heappop(heap)
        here = nodes[-1]
        if here in best:
            continue
        best[here] = (dist, nodes, links)
        if net.nodes[here].kind == TERMINAL:
            continue
        for link in net.incident_links(here):
            nxt = link.other(here)
            if nxt in best or nxt in nodes or not _alive(sc, m=nxt, l=link.id):
                continue
            heapq.heappush(heap, (dist + link.prop_delay + fwd[nxt], nodes + (nxt,),
                                  links + (link.id,)))
    return {
        t: Path(tuple(reversed(best[t][1])), tuple(reversed(best[t][2])), best[t][0])
        for t in net.terminals if t in best
    }


def reachable(net: CoupledNetwork, sc: Scenario,
              routes: Mapping[str, Path] | None = None) -> dict[str, int]:
    """Terminal -> 1 if it can reach the center over working elements.

    With ``routes`` the question is whether that fixed route survived
    (no rerouting); otherwise any working path counts.
    """
    if routes is None:
        found = shortest_routes(net, sc)
        return {t: int(t in found) for t in net.terminals}
    out = {}
    for t in net.terminals:
        path = routes.get(t)
        out[t] = int(path is not None
                     and all(sc.node_ok[m] for m in path.nodes)
                     and all(sc.link_ok[l] for l in path.links))
    return out


def prefault_routes(net: CoupledNetwork) -> dict[str, Path]:
    """Routing in force before the disaster: minimum-delay paths on the intact network."""
    return shortest_routes(net, None)


# power side --------------------------------------------------------------

@dataclass
class PowerVerdict:
    violations: list[Violation]
    energized: set[str] = field(default_factory=set)
    voltages: dict[str, float] = field(default_factory=dict)
    p_flow: dict[str, float] = field(default_factory=dict)
    q_flow: dict[str, float] = field(default_factory=dict)
    generation: dict[str, tuple[float, float]] = field(default_factory=dict)
    pickup_kw: float = 0.0
    weighted_pickup: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_power(net: CoupledNetwork, sc: Scenario, line_state: Mapping[str, int],
                 load_state: Mapping[str, int], cfg: FormulationConfig | None = None
                 ) -> PowerVerdict:
    """Feasibility of a switch configuration and load pickup.

    Each energized component must be a tree holding exactly one working
    source; flows and voltages are then solved exactly along the tree.
    """
    cfg = cfg or FormulationConfig()
    out = PowerVerdict([])
    viol = out.violations
    for k, on in line_state.items():
        if on and not sc.line_operable(net, k):
            viol.append(Violation("eq1", k, "closed line is damaged or touches a damaged bus"))

    g = closed_graph(net, line_state)
    for comp in closed_components(net, line_state):
        live = [b for b in comp.buses if net.buses[b].has_source and sc.bus_ok[b]]
        if comp.lines and len(comp.lines) != len(comp.buses) - 1:
            viol.append(Violation("radiality", ",".join(comp.lines), "closed lines form a loop"))
            continue
        if len(live) > 1:
            viol.append(Violation("one-DG rule", ",".join(live), "component has several sources"))
            continue
        if not live:
            if comp.lines:
                viol.append(Violation("eq20", ",".join(comp.lines),
                                      "closed lines in a component without a source"))
            continue
        if not comp.lines and not load_state.get(live[0], 0):
            continue  # an isolated source may stay dark
        out.energized.update(comp.buses)
        _solve_tree(net, cfg, g, live[0], comp, load_state, out)

    for i, bus in net.buses.items():
        on = bool(load_state.get(i, 0))
        if on and i not in out.energized:
            viol.append(Violation("eq17", i, "load picked up on a de-energized bus"))
        if not bus.has_load_switch and on != (i in out.energized):
            viol.append(Violation("eq17", i, "bus without load switch must follow its bus"))
    for i in out.energized:
        if load_state.get(i, 0):
            out.pickup_kw += net.buses[i].p_load
            out.weighted_pickup += net.buses[i].p_load * net.buses[i].load_weight
    return out


def _solve_tree(net, cfg, g, source, comp, load_state, out):
    served_p = {b: net.buses[b].p_load * bool(load_state.get(b, 0)) for b in comp.buses}
    served_q = {b: net.buses[b].q_load * bool(load_state.get(b, 0)) for b in comp.buses}
    order = list(nx.dfs_preorder_nodes(g, source))
    parent_line = {}
    for parent, child in nx.dfs_edges(g, source):
        keys = list(g[parent][child])
        parent_line[child] = (parent, keys[0])
    sub_p = dict(served_p)
    sub_q = dict(served_q)
    for b in reversed(order):
        if b in parent_line:
            parent, _ = parent_line[b]
            sub_p[parent] += sub_p[b]
            sub_q[parent] += sub_q[b]
    va = cfg.v_ref
    out.voltages[source] = va
    for b in order:
        if b not in parent_line:
            continue
        parent, k = parent_line[b]
        line = net.lines[k]
        sign = 1.0 if line.from_bus == parent else -1.0
        p, q = sign * sub_p[b], sign * sub_q[b]
        out.p_flow[k], out.q_flow[k] = p, q
        # v_from - drop = v_to along the line's own orientation
        drop = (line.r * p + line.x * q) * DROP_TO_KV / va
        out.voltages[b] = out.voltages[parent] - sign * drop
        if abs(p) > line.p_max + TOL:
            out.violations.append(Violation("eq4", k, f"|p| {abs(p):g} > {line.p_max:g}"))
        if abs(q) > line.q_max + TOL:
            out.violations.append(Violation("eq5", k, f"|q| {abs(q):g} > {line.q_max:g}"))
    bus = net.buses[source]
    pg, qg = sub_p[source], sub_q[source]
    out.generation[source] = (pg, qg)
    if pg > bus.source_p_max + TOL:
        out.violations.append(Violation("eq2", source, f"{pg:g} kW > {bus.source_p_max:g}"))
    if qg > bus.source_q_max + TOL:
        out.violations.append(Violation("eq3", source, f"{qg:g} kvar > {bus.source_q_max:g}"))
    lo, hi = (1 - cfg.delta) * va, (1 + cfg.delta) * va
    for b in comp.buses:
        v = out.voltages[b]
        if v < lo - TOL or v > hi + TOL:
            out.violations.append(Violation("eq13", b, f"voltage {v:.6g} kV outside band"))


# switch control ----------------------------------------------------------

def check_lcc(net: CoupledNetwork, prev_lines: Mapping[str, int], lines: Mapping[str, int],
              comm_states: Mapping[str, int], cfg: FormulationConfig | None = None,
              prev_loads: Mapping[str, int] | None = None,
              loads: Mapping[str, int] | None = None) -> list[Violation]:
    """Switch operations that the terminal communication states do not permit."""
    cfg = cfg or FormulationConfig()
    out = []

    def side_ok(bus):
        t = net.terminal_of_bus.get(bus)
        return t is None or bool(comm_states.get(t, 0))

    for k, line in net.lines.items():
        before, after = int(prev_lines[k]), int(lines[k])
        if before == after:
            continue
        if not line.controllable:
            out.append(Violation("eq35", k, "line without switches was operated"))
            continue
        switched = [b for b, has in ((line.from_bus, line.switch_at_from),
                                     (line.to_bus, line.switch_at_to)) if has]
        if after == 1:
            need = (line.from_bus, line.to_bus) if cfg.require_both_ends_observed_to_close \
                else switched
            missing = [b for b in need if not side_ok(b)]
            if missing:
                out.append(Violation("eq35", k, f"closing needs communication at {missing}"))
        elif not any(net.terminal_of_bus.get(b) and comm_states.get(net.terminal_of_bus[b], 0)
                     for b in switched):
            out.append(Violation("eq35", k, "opening needs a communicating switch terminal"))
    if cfg.enforce_load_switch_comm and loads is not None:
        prev_loads = prev_loads or {}
        for i, bus in net.buses.items():
            if bus.has_load_switch and int(loads.get(i, 0)) != int(prev_loads.get(i, 0)) \
                    and not side_ok(i):
                out.append(Violation("lcc_load", i, "load switch operated without communication"))
    return out


# whole plans ------------------------------------------------------------

def verify_plan(net: CoupledNetwork, sc: Scenario, plan, cfg: FormulationConfig | None = None
                ) -> list[Violation]:
    """Replay a restoration plan from the initial state and re-check every stage.

    Only the switch operations, communication states and routing stored in
    the plan are trusted; states, energized sets and pickups are recomputed
    and compared with what the plan reports.
    """
    cfg = cfg or FormulationConfig()
    state = StageState.initial(net, sc)
    lines, loads = dict(state.line_state), dict(state.load_state)
    out: list[Violation] = []
    for st in plan.stages:
        where = f"stage {st.stage_index}"
        routing = verify_routing(net, sc, st.routing, st.comm_states)
        out.extend(Violation(v.code, f"{where}: {v.element}", v.message)
                   for v in routing.violations)
        if st.kind != "load":
            if st.line_ops or st.load_ops:
                out.append(Violation("replay", where, "communication stage operates switches"))
            continue
        new_lines, new_loads = dict(lines), dict(loads)
        for k, action in st.line_ops:
            if k not in net.lines or action not in ("close", "open"):
                out.append(Violation("replay", where, f"bad line operation {k} {action}"))
                continue
            want = 1 if action == "close" else 0
            if lines[k] == want:
                out.append(Violation("replay", where, f"line {k} is already {'closed' if want else 'open'}"))
            new_lines[k] = want
        for i, action in st.load_ops:
            if i not in net.buses or action not in ("pickup", "drop"):
                out.append(Violation("replay", where, f"bad load operation {i} {action}"))
                continue
            if action == "drop" and loads[i]:
                out.append(Violation("latch", f"{where}: {i}", "picked-up load was dropped"))
            new_loads[i] = 1 if action == "pickup" else 0
        out.extend(Violation(v.code, f"{where}: {v.element}", v.message)
                   for v in check_lcc(net, lines, new_lines, st.comm_states, cfg, loads, new_loads))
        power = verify_power(net, sc, new_lines, new_loads, cfg)
        out.extend(Violation(v.code, f"{where}: {v.element}", v.message)
                   for v in power.violations)
        if set(st.energized_buses) != power.energized:
            out.append(Violation("report", where, "energized buses differ from recomputation"))
        if abs(st.cumulative_pickup_kw - power.pickup_kw) > 1e-6 * max(1.0, power.pickup_kw):
            out.append(Violation("report", where,
                                 f"cumulative pickup {st.cumulative_pickup_kw:g} kW, "
                                 f"recomputed {power.pickup_kw:g} kW"))
        lines, loads = new_lines, new_loads
    return out
