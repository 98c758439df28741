"""Greedy feasible starting points for the stage models.

The solver still proves optimality; a good incumbent only saves it from
searching for a first radial configuration, which is the slow part on
large feeders.
"""
from __future__ import annotations

import heapq
from collections import deque

from . import formulation as fm
from .formulation import FormulationConfig, StageState
from .netmodel import CENTER, FORWARDER, CoupledNetwork, Scenario
from .verifier import check_lcc, verify_power

TOL = 1e-9


def greedy_routes(net: CoupledNetwork, sc: Scenario, order=None) -> dict[str, tuple]:
    """Route terminals one at a time on their fastest path with spare bandwidth.

    Returns ``{terminal: (nodes, links)}`` for the terminals that fit.
    """
    node_left = {m: n.bandwidth_cap for m, n in net.nodes.items()}
    link_left = {l: k.bandwidth_cap for l, k in net.links.items()}
    center = net.center
    if not sc.node_ok[center]:
        return {}
    out = {}
    for t in order or net.terminals:
        if not sc.node_ok[t]:
            continue
        node = net.nodes[t]
        w = node.required_bandwidth
        if node_left[t] < w - TOL or node_left[center] < w - TOL:
            continue
        best = {t: 0.0}
        prev = {}
        heap = [(0.0, t)]
        found = None
        while heap:
            d, m = heapq.heappop(heap)
            if d > best.get(m, float("inf")) + TOL:
                continue
            if m == center:
                found = d
                break
            for link in net.incident_links(m):
                nxt = link.other(m)
                kind = net.nodes[nxt].kind
                if kind not in (FORWARDER, CENTER) or not sc.node_ok[nxt] \
                        or not sc.link_ok[link.id]:
                    continue
                if link_left[link.id] < w - TOL or node_left[nxt] < w - TOL:
                    continue
                nd = d + link.prop_delay + net.nodes[nxt].forward_delay
                if nd < best.get(nxt, float("inf")) - TOL:
                    best[nxt] = nd
                    prev[nxt] = (m, link.id)
                    heapq.heappush(heap, (nd, nxt))
        if found is None or found > node.delay_cap + TOL:
            continue
        nodes, links, m = [center], [], center
        while m != t:
            m, l = prev[m]
            nodes.append(m)
            links.append(l)
        for m in nodes:
            node_left[m] -= w
        for l in links:
            link_left[l] -= w
        out[t] = (tuple(sorted(nodes)), tuple(sorted(links)))
    return out


def _bus_order(net, sc):
    """Buses by hop distance from the nearest working source."""
    dist = {}
    queue = deque()
    for i in net.sources:
        if sc.bus_ok[i]:
            dist[i] = 0
            queue.append(i)
    while queue:
        i = queue.popleft()
        for line, _ in net.incident_lines(i):
            if not sc.line_operable(net, line.id):
                continue
            j = line.to_bus if line.from_bus == i else line.from_bus
            if j not in dist:
                dist[j] = dist[i] + 1
                queue.append(j)
    return sorted(net.buses, key=lambda i: (dist.get(i, len(net.buses)), i))


def grow_islands(net: CoupledNetwork, sc: Scenario, stage: StageState,
                 comm_states, cfg: FormulationConfig):
    """Extend the energized islands along electrically shortest paths.

    Islands claim dead buses nearest first by impedance, through lines the
    communication states allow closing, and a bus only joins an island that
    can still carry its load. Buses no island can serve are then used to
    pass power through, leftover loads are picked up where they fit, and
    subtrees are handed between islands to free source capacity. Returns
    ``(line_state, load_state)`` or ``None`` when the starting state itself
    is infeasible.
    """
    lines = dict(stage.line_state)
    energized = fm.energized_buses(net, sc, lines)
    loads = dict(stage.load_state)
    for i in energized:
        if not net.buses[i].has_load_switch:
            loads[i] = 1

    def load_allowed(i):
        if not cfg.enforce_load_switch_comm:
            return True
        t = net.terminal_of_bus.get(i)
        return t is None or bool(comm_states.get(t, 0))

    def feasible(ls, ld):
        return verify_power(net, sc, ls, ld, cfg).ok

    if not feasible(lines, loads):
        return None

    closable = {}
    for k, line in net.lines.items():
        if lines[k] or not sc.line_operable(net, k):
            continue
        trial = dict(lines)
        trial[k] = 1
        if not check_lcc(net, stage.line_state, trial, comm_states, cfg):
            closable[k] = line

    def wants_load(j):
        bus = net.buses[j]
        if not bus.has_load_switch:
            return 1
        return int(load_allowed(j) and (bus.p_load > 0 or bus.q_load > 0))

    attached = set(energized)
    dist = {i: 0.0 for i in energized}

    def grow(carry_load: bool):
        """Islands claim neighbouring buses nearest first; True if any joined."""
        nonlocal lines, loads
        heap = []

        def push(i):
            for line, _ in net.incident_lines(i):
                j = line.to_bus if line.from_bus == i else line.from_bus
                if line.id in closable and j not in attached:
                    d = dist[i] + abs(complex(line.r, line.x))
                    heapq.heappush(heap, (d, j, line.id))

        for i in sorted(attached):
            push(i)
        progress = False
        while heap:
            d, j, k = heapq.heappop(heap)
            if j in attached:
                continue
            trial, trial_loads = dict(lines), dict(loads)
            trial[k] = 1
            trial_loads[j] = wants_load(j) if carry_load else int(
                not net.buses[j].has_load_switch)
            if feasible(trial, trial_loads):
                lines, loads = trial, trial_loads
                attached.add(j)
                dist[j] = d
                progress = True
                push(j)
        return progress

    # first with loads, then let unserved buses pass power through
    grow(True)
    while grow(False):
        grow(True)

    def pick_up():
        for i in sorted(attached, key=lambda b: (dist.get(b, 0.0), b)):
            if loads.get(i) or not wants_load(i):
                continue
            loads[i] = 1
            if not feasible(lines, loads):
                loads[i] = 0

    pick_up()
    for _ in range(len(net.buses)):
        moved = _rebalance(net, sc, stage, comm_states, lines, loads, closable, wants_load, cfg)
        if moved is None:
            break
        lines, loads = moved
        pick_up()
    return lines, loads


def _forest(net, sc, lines):
    """Parent links of every energized bus, rooted at its source."""
    parent, root = {}, {}
    for s in net.sources:
        if not sc.bus_ok[s] or s in root:
            continue
        root[s] = s
        queue = deque([s])
        while queue:
            i = queue.popleft()
            for line, _ in net.incident_lines(i):
                j = line.to_bus if line.from_bus == i else line.from_bus
                if lines[line.id] and j not in root:
                    root[j] = s
                    parent[j] = (line.id, i)
                    queue.append(j)
    return parent, root


def _rebalance(net, sc, stage, comm_states, lines, loads, closable, wants_load, cfg):
    """Hand a subtree holding an unserved load to a neighbouring island.

    Walks up from each unserved load and, for every closed line above it,
    looks for a closable open line joining the part below to another island
    with spare source capacity. Returns the first swap that lets the load
    be served, or ``None``.
    """
    parent, root = _forest(net, sc, lines)
    power = verify_power(net, sc, lines, loads, cfg)
    if not power.ok:
        return None
    spare = {s: (net.buses[s].source_p_max or 0.0) - power.generation.get(s, (0.0, 0.0))[0]
             for s in set(root.values())}
    children = {}
    for j, (_, i) in parent.items():
        children.setdefault(i, []).append(j)

    def below(j):
        out, stack = [], [j]
        while stack:
            i = stack.pop()
            out.append(i)
            stack.extend(children.get(i, ()))
        return out

    unserved = sorted(i for i in root if not loads.get(i) and wants_load(i))
    for i in unserved:
        j = i
        while j in parent:
            k_up, up = parent[j]
            part = set(below(j))
            demand = sum(net.buses[b].p_load for b in part if loads.get(b) or b == i)
            for b in sorted(part):
                for line, _ in net.incident_lines(b):
                    if line.id not in closable or lines[line.id]:
                        continue
                    other = line.to_bus if line.from_bus == b else line.from_bus
                    if other in part or other not in root or root[other] == root[i]:
                        continue
                    if spare[root[other]] < demand - TOL:
                        continue
                    trial, trial_loads = dict(lines), dict(loads)
                    trial[line.id], trial[k_up] = 1, 0
                    trial_loads[i] = 1
                    if check_lcc(net, stage.line_state, trial, comm_states, cfg):
                        continue
                    if verify_power(net, sc, trial, trial_loads, cfg).ok:
                        return trial, trial_loads
            j = up
    return None


def stage_hint(net: CoupledNetwork, sc: Scenario, stage: StageState, cfg: FormulationConfig,
               comm_states=None) -> dict[str, float] | None:
    """Values for the binary decisions of a stage model, or ``None``.

    With ``comm_states`` given (frozen communication), only switch and load
    decisions are hinted; otherwise terminals are routed greedily first and
    those not needed by any switch operation are switched off again.
    """
    routes = {}
    if comm_states is None:
        order = [net.terminal_of_bus[i] for i in _bus_order(net, sc)
                 if i in net.terminal_of_bus]
        routes = greedy_routes(net, sc, order)
        comm = {t: int(t in routes) for t in net.terminals}
    else:
        comm = dict(comm_states)
    grown = grow_islands(net, sc, stage, comm, cfg)
    if grown is None:
        return None
    lines, loads = grown
    hint = {fm.b_(k): float(v) for k, v in lines.items()}
    hint.update({fm.bl_(i): float(v) for i, v in loads.items()})
    if comm_states is None:
        needed = set()
        for k, line in net.lines.items():
            if lines[k] != stage.line_state[k]:
                for b in (line.from_bus, line.to_bus):
                    if b in net.terminal_of_bus:
                        needed.add(net.terminal_of_bus[b])
        if cfg.enforce_load_switch_comm:
            for i, v in loads.items():
                if v != stage.load_state.get(i, 0) and i in net.terminal_of_bus:
                    needed.add(net.terminal_of_bus[i])
        for t in net.terminals:
            on = t in needed and t in routes
            hint[fm.s_(t)] = float(on)
            nodes, links = routes.get(t, ((), ()))
            for m in net.nodes:
                hint[fm.hn_(t, m)] = float(on and m in nodes)
            for l in net.links:
                hint[fm.hl_(t, l)] = float(on and l in links)
    return hint
