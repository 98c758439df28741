"""Exhaustive ground truth for tiny instances.

Enumerates routable terminal sets, switch configurations and load pickups
directly, with no optimisation model involved. Line-control and
load-control conditions only ever *require* a terminal to communicate, so
it is enough to try the maximal routable terminal sets.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .formulation import DROP_TO_KV, FormulationConfig, Routing, StageState
from .netmodel import TERMINAL, CoupledNetwork, Scenario
from .topology import closed_components

MAX_CONTROLLABLE_LINES = 8
MAX_TERMINALS = 8
MAX_COMM_NODES = 12
TOL = 1e-6


class OracleGuardError(ValueError):
    pass


@dataclass
class OracleResult:
    feasible: bool
    weighted_pickup: float = 0.0
    pickup_kw: float = 0.0
    line_state: dict[str, int] = field(default_factory=dict)
    load_state: dict[str, int] = field(default_factory=dict)
    comm_states: dict[str, int] = field(default_factory=dict)
    routing: dict[str, Routing] = field(default_factory=dict)
    configurations: int = 0


# communication ------------------------------------------------------------

def terminal_paths(net: CoupledNetwork, sc: Scenario, t: str):
    """All simple working paths t -> center within the terminal's delay cap.

    Returns (nodes, links, delay) triples; relays are forwarders only.
    """
    center = net.center
    if not sc.node_ok[t] or not sc.node_ok[center]:
        return []
    cap = net.nodes[t].delay_cap
    out = []

    def fwd(m):
        node = net.nodes[m]
        return node.forward_delay if node.kind != TERMINAL else 0.0

    def dfs(here, nodes, links, delay):
        if delay > cap + TOL:
            return
        if here == center:
            out.append((tuple(nodes), tuple(links), delay))
            return
        for link in net.incident_links(here):
            nxt = link.other(here)
            if nxt in nodes or not sc.link_ok[link.id] or not sc.node_ok[nxt]:
                continue
            if nxt != center and net.nodes[nxt].kind != "forwarder":
                continue
            dfs(nxt, nodes + [nxt], links + [link.id], delay + link.prop_delay + fwd(nxt))

    dfs(t, [t], [], 0.0)
    out.sort(key=lambda p: (p[2], p[0], p[1]))
    return out


def routable_sets(net: CoupledNetwork, sc: Scenario):
    """Map frozenset(terminals) -> one feasible joint routing, for every routable set."""
    terms = list(net.terminals)
    paths = {t: terminal_paths(net, sc, t) for t in terms}
    w = {t: net.nodes[t].required_bandwidth for t in terms}
    node_cap = {m: n.bandwidth_cap for m, n in net.nodes.items()}
    link_cap = {l: k.bandwidth_cap for l, k in net.links.items()}

    def assign(order, i, node_use, link_use, chosen):
        if i == len(order):
            return dict(chosen)
        t = order[i]
        for nodes, links, _ in paths[t]:
            if any(node_use[m] + w[t] > node_cap[m] + TOL for m in nodes):
                continue
            if any(link_use[l] + w[t] > link_cap[l] + TOL for l in links):
                continue
            for m in nodes:
                node_use[m] += w[t]
            for l in links:
                link_use[l] += w[t]
            chosen[t] = (nodes, links)
            found = assign(order, i + 1, node_use, link_use, chosen)
            for m in nodes:
                node_use[m] -= w[t]
            for l in links:
                link_use[l] -= w[t]
            del chosen[t]
            if found is not None:
                return found
        return None

    found = {frozenset(): {}}
    candidates = [t for t in terms if paths[t]]
    for size in range(1, len(candidates) + 1):
        for combo in itertools.combinations(candidates, size):
            key = frozenset(combo)
            if any(key - {t} not in found for t in combo):
                continue
            order = sorted(combo, key=lambda t: (len(paths[t]), t))
            routing = assign(order, 0, {m: 0.0 for m in net.nodes},
                             {l: 0.0 for l in net.links}, {})
            if routing is not None:
                found[key] = routing
    return found


def maximal_sets(sets):
    keys = sorted(sets, key=len, reverse=True)
    out = []
    for key in keys:
        if not any(key < other for other in out):
            out.append(key)
    return out


# power --------------------------------------------------------------------

class _Components:
    """Cached best load pickup for one energized tree component."""

    def __init__(self, net, sc, cfg):
        self.net, self.sc, self.cfg = net, sc, cfg
        self.cache = {}

    def best(self, source, buses, lines, forced_on, free):
        key = (source, buses, lines, forced_on, free)
        if key not in self.cache:
            self.cache[key] = self._solve(*key)
        return self.cache[key]

    def _solve(self, source, buses, lines, forced_on, free):
        net, cfg = self.net, self.cfg
        buses = list(buses)
        idx = {b: n for n, b in enumerate(buses)}
        # parent structure from the source
        adj = {b: [] for b in buses}
        for k in lines:
            ln = net.lines[k]
            adj[ln.from_bus].append((ln.to_bus, k))
            adj[ln.to_bus].append((ln.from_bus, k))
        parent = {source: None}
        order = [source]
        for b in order:
            for nb, k in adj[b]:
                if nb not in parent:
                    parent[nb] = (b, k)
                    order.append(nb)
        # subtree[k] = buses below line k; path[b] = lines from source to b
        below = {b: {b} for b in buses}
        for b in reversed(order):
            if parent[b] is not None:
                below[parent[b][0]] |= below[b]
        path = {source: []}
        for b in order[1:]:
            p, k = parent[b]
            path[b] = path[p] + [k]
        line_rows = [(k, below[b]) for b in order[1:] for k in [parent[b][1]]]

        free = list(free)
        base = np.zeros(len(buses), dtype=bool)
        for b in forced_on:
            base[idx[b]] = True
        masks = np.array(list(itertools.product((0, 1), repeat=len(free))), dtype=bool)
        masks = masks.reshape(len(masks), len(free))
        on = np.repeat(base[None, :], len(masks), axis=0)
        for c, b in enumerate(free):
            on[:, idx[b]] = masks[:, c]
        p = np.array([net.buses[b].p_load for b in buses])
        q = np.array([net.buses[b].q_load for b in buses])
        val = np.array([net.buses[b].p_load * net.buses[b].load_weight for b in buses])
        ok = np.ones(len(masks), dtype=bool)
        sub_p, sub_q = {}, {}
        for k, sub in line_rows:
            cols = [idx[b] for b in sub]
            sub_p[k] = on[:, cols] @ p[cols]
            sub_q[k] = on[:, cols] @ q[cols]
            ln = net.lines[k]
            ok &= sub_p[k] <= ln.p_max + TOL
            ok &= sub_q[k] <= ln.q_max + TOL
        bus = net.buses[source]
        ok &= on @ p <= bus.source_p_max + TOL
        ok &= on @ q <= bus.source_q_max + TOL
        va = cfg.v_ref
        lo, hi = (1 - cfg.delta) * va, (1 + cfg.delta) * va
        for b in buses:
            drop = np.zeros(len(masks))
            for k in path[b]:
                ln = net.lines[k]
                drop += (ln.r * sub_p[k] + ln.x * sub_q[k]) * DROP_TO_KV / va
            v = va - drop
            ok &= (v >= lo - TOL) & (v <= hi + TOL)
        if not ok.any():
            return None
        values = np.where(ok, on @ val, -np.inf)
        best = int(np.argmax(values))
        served = {b for b in buses if on[best, idx[b]]}
        return float(values[best]), served


# search -------------------------------------------------------------------

def _check_guards(net):
    ctrl = [k for k, ln in net.lines.items() if ln.controllable]
    if len(ctrl) > MAX_CONTROLLABLE_LINES:
        raise OracleGuardError(f"{len(ctrl)} controllable lines > {MAX_CONTROLLABLE_LINES}")
    if len(net.terminals) > MAX_TERMINALS:
        raise OracleGuardError(f"{len(net.terminals)} terminals > {MAX_TERMINALS}")
    if len(net.nodes) > MAX_COMM_NODES:
        raise OracleGuardError(f"{len(net.nodes)} comm nodes > {MAX_COMM_NODES}")
    return ctrl


def _allowed_values(net, k, prev, comm, cfg):
    line = net.lines[k]

    def on(bus):
        t = net.terminal_of_bus.get(bus)
        return t is None or t in comm

    switched = [b for b, has in ((line.from_bus, line.switch_at_from),
                                 (line.to_bus, line.switch_at_to)) if has]
    if prev == 0:
        need = (line.from_bus, line.to_bus) if cfg.require_both_ends_observed_to_close \
            else switched
        flip = all(on(b) for b in need)
    else:
        flip = any(net.terminal_of_bus.get(b) in comm for b in switched)
    return (prev, 1 - prev) if flip else (prev,)


def oracle_solve(net: CoupledNetwork, sc: Scenario, stage: StageState | None = None,
                 cfg: FormulationConfig | None = None) -> OracleResult:
    """Maximum weighted pickup for one stage, by exhaustive enumeration."""
    cfg = cfg or FormulationConfig()
    stage = stage or StageState.initial(net, sc)
    ctrl = _check_guards(net)
    routable = routable_sets(net, sc)
    comps = _Components(net, sc, cfg)
    fixed = {k: (stage.line_state[k] if sc.line_operable(net, k) else 0)
             for k, ln in net.lines.items() if not ln.controllable}

    best = OracleResult(False, -np.inf)
    seen = 0
    for comm in maximal_sets(routable):
        choices = [_allowed_values(net, k, stage.line_state[k], comm, cfg) for k in ctrl]
        for values in itertools.product(*choices):
            seen += 1
            lines = dict(fixed)
            lines.update(zip(ctrl, values))
            got = _evaluate(net, sc, stage, cfg, comps, lines, comm)
            if got is None:
                continue
            value, served = got
            if value > best.weighted_pickup + TOL:
                best = OracleResult(
                    True, value,
                    sum(net.buses[b].p_load for b in served),
                    dict(sorted(lines.items())),
                    {b: int(b in served) for b in net.buses},
                    {t: int(t in comm) for t in net.terminals},
                    {t: Routing(tuple(sorted(n)), tuple(sorted(l)))
                     for t, (n, l) in routable[comm].items()},
                )
    best.configurations = seen
    if not best.feasible:
        best.weighted_pickup = 0.0
    return best


def _evaluate(net, sc, stage, cfg, comps, lines, comm):
    """Best pickup for one switch configuration, or None if infeasible."""
    for k, on in lines.items():
        if on and not sc.line_operable(net, k):
            return None
    value, served = 0.0, set()
    latched = {b for b, v in stage.load_state.items() if v}
    energized = set()
    for comp in closed_components(net, lines):
        live = [b for b in comp.buses if net.buses[b].has_source and sc.bus_ok[b]]
        if comp.lines:
            if len(comp.lines) != len(comp.buses) - 1 or len(live) != 1:
                return None
        elif not live:
            continue
        energized.update(comp.buses)
        forced, free = [], []
        isolated_source = not comp.lines
        for b in comp.buses:
            bus = net.buses[b]
            if b in latched:
                forced.append(b)
            elif not bus.has_load_switch and not isolated_source:
                forced.append(b)
            elif bus.has_load_switch and cfg.enforce_load_switch_comm \
                    and net.terminal_of_bus.get(b) not in comm:
                continue  # load switch stays open
            else:
                free.append(b)
        got = comps.best(live[0], tuple(comp.buses), tuple(comp.lines),
                         tuple(sorted(forced)), tuple(sorted(free)))
        if got is None:
            return None
        value += got[0]
        served |= got[1]
    if latched - energized:
        return None
    return value, served
