"""Integrated restoration MILP: operational, connectivity, data-flow,
bandwidth/delay and line-control constraint families plus the objective.

Units: power in kW / kvar, impedance in ohm, voltage in kV, bandwidth in
Mbps, delay in ms. Every row carries a constraint-family tag (``eq1`` to
``eq35``, plus ``tree`` and ``lcc_load``) so a model can be audited family
by family and verifier findings can name the family they break.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping

from .milp import LinExpr, MilpModel, ModelError
from .netmodel import TERMINAL, CoupledNetwork, Scenario, effective_initial_lines
from .topology import closed_components

# (kW * ohm) / kV is volts; voltages are carried in kV
DROP_TO_KV = 1e-3


class FormulationError(ModelError):
    pass


@dataclass(frozen=True)
class FormulationConfig:
    delta: float = 0.05
    v_ref: float = 12.66
    big_m_flow: Mapping[str, float] | None = None
    big_m_voltage: float | None = None
    big_m_commodity: float | None = None
    epsilon: float | None = None
    enforce_load_switch_comm: bool = False
    require_both_ends_observed_to_close: bool = True
    gap: float = 1e-4
    time_limit: float | None = None
    # redundant parent-orientation rows; they cut no feasible point but
    # make radial configurations far easier for the solver to find
    tree_rows: bool = True
    # greedy starting point handed to the solver
    warm_start: bool = True
    # fix routing variables of elements no route within the delay cap can use
    prune_routes: bool = True


@dataclass(frozen=True)
class StageState:
    """Operating state at the start of a stage.

    ``load_state`` is the current load-switch state; loads at 1 have been
    picked up already and stay latched closed in every later stage.
    """

    line_state: Mapping[str, int]
    load_state: Mapping[str, int]
    stage_index: int = 1

    @classmethod
    def initial(cls, net: CoupledNetwork, sc: Scenario) -> StageState:
        lines = effective_initial_lines(net, sc)
        live = energized_buses(net, sc, lines)
        loads = {b: int(bool(sc.load_initial.get(b, 0)) and b in live) for b in net.buses}
        return cls(MappingProxyType(lines), MappingProxyType(loads), 1)

    def next(self, line_state, load_state) -> StageState:
        merged = {b: int(load_state.get(b, 0) or self.load_state.get(b, 0))
                  for b in self.load_state}
        return StageState(MappingProxyType(dict(line_state)), MappingProxyType(merged),
                          self.stage_index + 1)


def energized_buses(net, sc, line_state, load_state=None) -> set[str]:
    """Buses fed by a live source through closed lines.

    A source with no closed line may stay dark; given ``load_state`` it counts
    as energized only while its own load is served.
    """
    out = set()
    for comp in closed_components(net, line_state):
        if any(net.buses[b].has_source and sc.bus_ok[b] for b in comp.buses):
            if comp.lines or load_state is None or load_state.get(comp.buses[0], 0):
                out.update(comp.buses)
    return out


# variable names ---------------------------------------------------------

def b_(k): return f"b[{k}]"
def bl_(i): return f"bload[{i}]"
def pg_(i): return f"pg[{i}]"
def qg_(i): return f"qg[{i}]"
def pl_(k): return f"pl[{k}]"
def ql_(k): return f"ql[{k}]"
def v_(i): return f"v[{i}]"
def fl_(k): return f"fl[{k}]"
def fn_(i): return f"fn[{i}]"
def fs_(i): return f"fs[{i}]"
def hn_(t, m): return f"hn[{t},{m}]"
def hl_(t, l): return f"hl[{t},{l}]"
def s_(m): return f"s[{m}]"
def dn_(m): return f"dn[{m}]"
def dl_(l): return f"dl[{l}]"
def e_(t): return f"e[{t}]"
def dir_(k, sign): return f"dir[{k},{sign}]"


def _get(model: MilpModel, name, kind="continuous", lb=0.0, ub=None):
    var = model.vars.get(name)
    if var is None:
        var = model.add_var(name, kind, lb, ub)
    return var


def _line_vars(model, net, sc, stage):
    out = {}
    for k, line in net.lines.items():
        var = _get(model, b_(k), "binary")
        if not line.controllable:
            # fixed at its (isolation-adjusted) initial state
            model.fix(var, stage.line_state[k] if sc.line_operable(net, k) else 0)
        out[k] = var
    return out


def _load_vars(model, net, stage):
    out = {}
    for i in net.buses:
        var = _get(model, bl_(i), "binary")
        if stage.load_state.get(i, 0):
            var.lb = 1.0
        out[i] = var
    return out


def _fn_vars(model, net, sc):
    return {i: _get(model, fn_(i), "binary", 0.0, float(sc.bus_ok[i])) for i in net.buses}


def voltage_big_m(net, cfg) -> float:
    if cfg.big_m_voltage is not None:
        return cfg.big_m_voltage
    # an open line carries no flow, so only the band width has to be relaxed
    return 2 * cfg.delta * cfg.v_ref


def build_doc(net: CoupledNetwork, sc: Scenario, cfg: FormulationConfig, model: MilpModel,
              stage: StageState | None = None) -> MilpModel:
    """Operational rows: line availability, source/line caps, nodal balance, voltage."""
    stage = stage or StageState.initial(net, sc)
    b = _line_vars(model, net, sc, stage)
    bl = _load_vars(model, net, stage)
    sources = set(net.sources)

    for k, line in net.lines.items():
        avail = (sc.line_ok[k] + sc.bus_ok[line.from_bus] + sc.bus_ok[line.to_bus]) / 3
        model.add_constraint(b[k], "<=", avail, "eq1")

    pg, qg = {}, {}
    for i in net.sources:
        bus = net.buses[i]
        pg[i] = _get(model, pg_(i), lb=None)
        qg[i] = _get(model, qg_(i), lb=None)
        model.add_constraint(pg[i], ">=", 0.0, "eq2")
        model.add_constraint(pg[i], "<=", bus.source_p_max, "eq2")
        model.add_constraint(qg[i], ">=", 0.0, "eq3")
        model.add_constraint(qg[i], "<=", bus.source_q_max, "eq3")

    pl, ql = {}, {}
    flow_m = cfg.big_m_flow or {}
    for k, line in net.lines.items():
        pl[k] = _get(model, pl_(k), lb=None)
        ql[k] = _get(model, ql_(k), lb=None)
        model.add_constraint(pl[k], ">=", -line.p_max, "eq4")
        model.add_constraint(pl[k], "<=", line.p_max, "eq4")
        model.add_constraint(ql[k], ">=", -line.q_max, "eq5")
        model.add_constraint(ql[k], "<=", line.q_max, "eq5")
        mp = flow_m.get(k, line.p_max)
        mq = flow_m.get(k, line.q_max)
        model.add_constraint(pl[k], "<=", mp * b[k], "eq6")
        model.add_constraint(pl[k], ">=", -mp * b[k], "eq6")
        model.add_constraint(ql[k], "<=", mq * b[k], "eq7")
        model.add_constraint(ql[k], ">=", -mq * b[k], "eq7")

    for i, bus in net.buses.items():
        out_p = LinExpr.total(mu * pl[ln.id] for ln, mu in net.incident_lines(i))
        out_q = LinExpr.total(mu * ql[ln.id] for ln, mu in net.incident_lines(i))
        if i in sources:
            model.add_constraint(out_p + bus.p_load * bl[i] - pg[i], "==", 0.0, "eq10")
            model.add_constraint(out_q + bus.q_load * bl[i] - qg[i], "==", 0.0, "eq11")
        else:
            model.add_constraint(out_p + bus.p_load * bl[i], "==", 0.0, "eq8")
            model.add_constraint(out_q + bus.q_load * bl[i], "==", 0.0, "eq9")

    va = cfg.v_ref
    v = {i: _get(model, v_(i), lb=None) for i in net.buses}
    for i in net.sources:
        model.add_constraint(v[i], "==", va, "eq12")
    for i in net.buses:
        model.add_constraint(v[i], ">=", (1 - cfg.delta) * va, "eq13")
        model.add_constraint(v[i], "<=", (1 + cfg.delta) * va, "eq13")

    big_m = voltage_big_m(net, cfg)
    for k, line in net.lines.items():
        drop = (line.r * pl[k] + line.x * ql[k]) * (DROP_TO_KV / va)
        lhs = v[line.from_bus] - drop - v[line.to_bus]
        model.add_constraint(lhs, "<=", big_m * (1 - b[k]), "eq14")
        model.add_constraint(lhs, ">=", -big_m * (1 - b[k]), "eq14")
    return model


def build_dcc(net: CoupledNetwork, sc: Scenario, cfg: FormulationConfig, model: MilpModel,
              stage: StageState | None = None) -> MilpModel:
    """Single-commodity-flow connectivity and radiality rows."""
    stage = stage or StageState.initial(net, sc)
    b = _line_vars(model, net, sc, stage)
    bl = _load_vars(model, net, stage)
    fn = _fn_vars(model, net, sc)
    phi = float(len(net.buses))
    big_f = cfg.big_m_commodity if cfg.big_m_commodity is not None else phi

    fl = {}
    for k, line in net.lines.items():
        fl[k] = _get(model, fl_(k), "integer", -big_f, big_f)
        model.add_constraint(fl[k], "<=", big_f * b[k], "eq15")
        model.add_constraint(fl[k], ">=", -big_f * b[k], "eq15")
    for k, line in net.lines.items():
        i, j = line.from_bus, line.to_bus
        model.add_constraint(fn[i] - fn[j], "<=", 1 - b[k], "eq16")
        model.add_constraint(fn[j] - fn[i], "<=", 1 - b[k], "eq16")
    for i, bus in net.buses.items():
        # a bus without a load switch serves its load whenever energized
        model.add_constraint(bl[i], "<=" if bus.has_load_switch else "==", fn[i], "eq17")

    sources = set(net.sources)
    for i in net.buses:
        out = LinExpr.total(mu * fl[ln.id] for ln, mu in net.incident_lines(i))
        if i in sources:
            fs = _get(model, fs_(i), lb=0.0, ub=phi)
            model.add_constraint(out + fn[i], "==", fs, "eq19")
        else:
            model.add_constraint(out + fn[i], "==", 0.0, "eq18")

    lhs = LinExpr.total(fn[i] for i in net.buses if i not in sources)
    model.add_constraint(lhs, "==", LinExpr.total(b.values()), "eq20")

    if cfg.tree_rows:
        # every energized non-source bus has exactly one parent line
        parents = {i: [] for i in net.buses}
        for k, line in net.lines.items():
            down = _get(model, dir_(k, "+"), "binary")  # from_bus feeds to_bus
            up = _get(model, dir_(k, "-"), "binary")
            model.add_constraint(down + up - b[k], "==", 0.0, "tree")
            parents[line.to_bus].append(down)
            parents[line.from_bus].append(up)
        for i in net.buses:
            rhs = 0.0 if i in sources else fn[i]
            model.add_constraint(LinExpr.total(parents[i]) - rhs, "==", 0.0, "tree")
    return model


def _comm_vars(model, net, sc):
    hn, hl, s = {}, {}, {}
    for t in net.terminals:
        for m in net.nodes:
            hn[t, m] = _get(model, hn_(t, m), "binary")
        for l in net.links:
            hl[t, l] = _get(model, hl_(t, l), "binary")
        s[t] = _get(model, s_(t), "binary")
    return hn, hl, s


def route_reach(net: CoupledNetwork, sc: Scenario, t: str, slack: float = 1e-6):
    """Relay nodes and links that some route from ``t`` within its delay cap uses.

    A node counts when the fastest path from ``t`` to it plus the fastest
    path on to the center fits the cap. Routes that also carry a detached
    cycle lose nothing by dropping it, so the rest can be fixed at zero.
    """
    cap = net.nodes[t].delay_cap + slack
    relay = {m for m, node in net.nodes.items() if node.kind != TERMINAL and sc.node_ok[m]}
    fwd = {m: net.nodes[m].forward_delay for m in relay}

    def sweep(start, base, cost):
        best = {start: base}
        heap = [(base, start)]
        while heap:
            d, m = heapq.heappop(heap)
            if d > best[m]:
                continue
            if m != start and m not in relay:
                continue
            for link in net.incident_links(m):
                nxt = link.other(m)
                if nxt not in relay or not sc.link_ok[link.id]:
                    continue
                nd = d + link.prop_delay + cost(m, nxt)
                if nd < best.get(nxt, math.inf):
                    best[nxt] = nd
                    heapq.heappush(heap, (nd, nxt))
        return best

    if not sc.node_ok[t] or net.center not in relay:
        return set(), set()
    # to_t includes the node's own forwarding delay, to_c excludes it
    to_t = sweep(t, 0.0, lambda a, b: fwd[b])
    to_c = sweep(net.center, 0.0, lambda a, b: fwd[a])
    nodes = {m for m in relay if to_t.get(m, math.inf) + to_c.get(m, math.inf) <= cap}
    if nodes:
        nodes.add(t)
    links = set()
    for l in net.links.values():
        if not sc.link_ok[l.id]:
            continue
        for a, b in ((l.end_a, l.end_b), (l.end_b, l.end_a)):
            if a in nodes and b in nodes and b in relay and (a == t or a in relay):
                if to_t.get(a, math.inf) + l.prop_delay + fwd[b] + to_c[b] <= cap:
                    links.add(l.id)
    return nodes, links


def build_dfc(net: CoupledNetwork, sc: Scenario, cfg: FormulationConfig,
              model: MilpModel) -> MilpModel:
    """Per-terminal routing rows: element availability and path degree conditions."""
    hn, hl, s = _comm_vars(model, net, sc)
    if cfg.prune_routes:
        for t in net.terminals:
            nodes, links = route_reach(net, sc, t)
            for m in net.nodes:
                if m not in nodes:
                    hn[t, m].ub = 0.0
            for l in net.links:
                if l not in links:
                    hl[t, l].ub = 0.0
    center = net.center
    terminals = set(net.terminals)
    for t in net.terminals:
        for l in net.links:
            model.add_constraint(hl[t, l], "<=", sc.link_ok[l], "eq21")
        for m in net.nodes:
            model.add_constraint(hn[t, m], "<=", sc.node_ok[m], "eq22")
        around = LinExpr.total(hl[t, lk.id] for lk in net.incident_links(center))
        model.add_constraint(around, "==", hn[t, center], "eq23")
        for m in net.forwarders:
            around = LinExpr.total(hl[t, lk.id] for lk in net.incident_links(m))
            model.add_constraint(around, "==", 2 * hn[t, m], "eq24")
        for m in net.terminals:
            around = LinExpr.total(hl[t, lk.id] for lk in net.incident_links(m))
            model.add_constraint(around, "==", hn[t, m], "eq25")
            model.add_constraint(hn[t, m], "==", s[m] if m == t else 0.0, "eq25")
    for m in net.terminals:
        model.add_constraint(s[m], "==", hn[m, center], "eq26")
        model.add_constraint(s[m], "<=", sc.node_ok[m], "eq27")
    assert terminals == set(s)
    return model


def build_bdc(net: CoupledNetwork, sc: Scenario, cfg: FormulationConfig,
              model: MilpModel) -> MilpModel:
    """Bandwidth consumption and end-to-end delay rows."""
    hn, hl, _ = _comm_vars(model, net, sc)
    w = {t: net.nodes[t].required_bandwidth for t in net.terminals}
    for m, node in net.nodes.items():
        d = _get(model, dn_(m))
        model.add_constraint(d, "==", LinExpr.total(w[t] * hn[t, m] for t in net.terminals),
                             "eq28")
        model.add_constraint(d, "<=", node.bandwidth_cap, "eq29")
    for l, link in net.links.items():
        d = _get(model, dl_(l))
        model.add_constraint(d, "==", LinExpr.total(w[t] * hl[t, l] for t in net.terminals),
                             "eq30")
        model.add_constraint(d, "<=", link.bandwidth_cap, "eq31")
    relay = [m for m, node in net.nodes.items() if node.kind != TERMINAL]
    for t in net.terminals:
        e = _get(model, e_(t))
        delay = LinExpr.total(link.prop_delay * hl[t, l] for l, link in net.links.items())
        delay = delay + LinExpr.total(net.nodes[m].forward_delay * hn[t, m] for m in relay)
        model.add_constraint(e, "==", delay, "eq32")
        model.add_constraint(e, "<=", net.nodes[t].delay_cap, "eq33")
    return model


def _side_state(net, bus, s_vars, comm_states):
    """Communication state seen from one end of a line (1 when no terminal)."""
    t = net.terminal_of_bus.get(bus)
    if t is None:
        return 1.0
    if comm_states is not None:
        return float(comm_states.get(t, 0))
    return s_vars[t]


def build_lcc(net: CoupledNetwork, sc: Scenario, stage: StageState | None,
              cfg: FormulationConfig, model: MilpModel,
              comm_states: Mapping[str, int] | None = None) -> MilpModel:
    """Line-control rows tying switch operations to terminal communication.

    ``comm_states`` freezes the terminal states to constants; otherwise the
    routing model's ``s`` variables are used (they must already exist).
    """
    stage = stage or StageState.initial(net, sc)
    b = _line_vars(model, net, sc, stage)
    s_vars = {}
    if comm_states is None:
        for t in net.terminals:
            if s_(t) not in model.vars:
                raise FormulationError("build_dfc must run before build_lcc")
            s_vars[t] = model.vars[s_(t)]
    tag = "eq35" if cfg.require_both_ends_observed_to_close else "eq34"
    for k, line in net.lines.items():
        if not line.controllable:
            continue
        i, j = line.from_bus, line.to_bus
        si = _side_state(net, i, s_vars, comm_states)
        sj = _side_state(net, j, s_vars, comm_states)
        rho_i, rho_j = int(line.switch_at_from), int(line.switch_at_to)
        prev = stage.line_state[k]
        act = rho_i * LinExpr.of(si) + rho_j * LinExpr.of(sj)
        model.add_constraint(b[k], ">=", prev - act, tag)
        if cfg.require_both_ends_observed_to_close:
            model.add_constraint(b[k], "<=", prev + 0.5 * (LinExpr.of(si) + sj), tag)
        else:
            model.add_constraint(b[k], "<=", prev + act * (1.0 / (rho_i + rho_j)), tag)

    if cfg.enforce_load_switch_comm:
        bl = _load_vars(model, net, stage)
        for i, bus in net.buses.items():
            if not bus.has_load_switch:
                continue
            si = _side_state(net, i, s_vars, comm_states)
            prev = stage.load_state.get(i, 0)
            model.add_constraint(bl[i] - prev, "<=", si, "lcc_load")
            model.add_constraint(prev - bl[i], "<=", si, "lcc_load")
    return model


def load_grain(net: CoupledNetwork) -> float:
    """Largest g such that every weighted load value is an integer multiple of g."""
    values = [Fraction(bus.p_load * bus.load_weight).limit_denominator(10**6)
              for bus in net.buses.values() if bus.p_load * bus.load_weight > 0]
    if not values:
        return 1.0
    num = 0
    den = 1
    for v in values:
        den = den * v.denominator // math.gcd(den, v.denominator)
    for v in values:
        num = math.gcd(num, int(v * den))
    return num / den


def delay_epsilon(net: CoupledNetwork, cfg: FormulationConfig, value_grain=None) -> float:
    """Delay weight that can never trade away a unit of objective value.

    The total delay is at most the sum of the terminals' delay caps, so
    any epsilon below ``grain / sum(caps)`` keeps the delay term inside
    one grain of load value.
    """
    grain = load_grain(net) if value_grain is None else value_grain
    total_cap = sum(net.nodes[t].delay_cap for t in net.terminals)
    if total_cap <= 0:
        return 0.0
    if cfg.epsilon is not None:
        if cfg.epsilon < 0 or cfg.epsilon * total_cap >= grain:
            raise FormulationError(
                f"epsilon {cfg.epsilon} too large: delay term can reach "
                f"{cfg.epsilon * total_cap:g} >= value grain {grain:g}"
            )
        return cfg.epsilon
    return 0.9 * grain / total_cap


def load_value(net: CoupledNetwork, model: MilpModel) -> LinExpr:
    return LinExpr.total(
        bus.p_load * bus.load_weight * model.vars[bl_(i)]
        for i, bus in net.buses.items() if bus.p_load * bus.load_weight
    )


def build_objective(net: CoupledNetwork, cfg: FormulationConfig, model: MilpModel) -> MilpModel:
    """Weighted restored load minus an epsilon-weighted total delay."""
    obj = load_value(net, model)
    eps = delay_epsilon(net, cfg)
    delays = [model.vars[e_(t)] for t in net.terminals if e_(t) in model.vars]
    if delays and eps:
        obj = obj - eps * LinExpr.total(delays)
    model.set_objective(obj, "max")
    return model


def build_integrated(net: CoupledNetwork, sc: Scenario, stage: StageState | None = None,
                     cfg: FormulationConfig | None = None) -> MilpModel:
    cfg = cfg or FormulationConfig()
    stage = stage or StageState.initial(net, sc)
    model = MilpModel(f"integrated-stage{stage.stage_index}")
    build_doc(net, sc, cfg, model, stage)
    build_dcc(net, sc, cfg, model, stage)
    build_dfc(net, sc, cfg, model)
    build_bdc(net, sc, cfg, model)
    build_lcc(net, sc, stage, cfg, model)
    build_objective(net, cfg, model)
    return model


def build_load_recovery(net: CoupledNetwork, sc: Scenario, stage: StageState | None,
                        cfg: FormulationConfig, comm_states: Mapping[str, int]) -> MilpModel:
    """Power-side model with terminal communication states frozen."""
    stage = stage or StageState.initial(net, sc)
    model = MilpModel(f"load-recovery-stage{stage.stage_index}")
    build_doc(net, sc, cfg, model, stage)
    build_dcc(net, sc, cfg, model, stage)
    build_lcc(net, sc, stage, cfg, model, comm_states=comm_states)
    build_objective(net, cfg, model)
    return model


def build_comm_recovery(net: CoupledNetwork, sc: Scenario, cfg: FormulationConfig) -> MilpModel:
    """Routing-only model maximising the number of communicating terminals."""
    model = MilpModel("comm-recovery")
    build_dfc(net, sc, cfg, model)
    build_bdc(net, sc, cfg, model)
    count = LinExpr.total(model.vars[s_(t)] for t in net.terminals)
    eps = delay_epsilon(net, cfg, value_grain=1.0)
    delays = LinExpr.total(model.vars[e_(t)] for t in net.terminals)
    model.set_objective(count - eps * delays if net.terminals else count, "max")
    return model


# decoding ---------------------------------------------------------------

@dataclass
class Routing:
    """Support of one terminal's routing variables."""

    nodes: tuple[str, ...] = ()
    links: tuple[str, ...] = ()


@dataclass
class DecodedStage:
    line_state: dict[str, int]
    load_state: dict[str, int]
    energized: set[str]
    comm_states: dict[str, int]
    routing: dict[str, Routing] = field(default_factory=dict)
    delays: dict[str, float] = field(default_factory=dict)
    node_load: dict[str, float] = field(default_factory=dict)
    link_load: dict[str, float] = field(default_factory=dict)
    commodity: dict[str, float] = field(default_factory=dict)


def decode(net: CoupledNetwork, model: MilpModel, sol) -> DecodedStage:
    a = sol.assignment

    def bit(name, default=0):
        return int(round(a[name])) if name in a else default

    lines = {k: bit(b_(k)) for k in net.lines}
    loads = {i: bit(bl_(i)) for i in net.buses}
    closed = {b for k, on in lines.items() if on
              for b in (net.lines[k].from_bus, net.lines[k].to_bus)}
    energized = {i for i in net.buses if bit(fn_(i)) and (i in closed or loads[i])}
    comm = {t: bit(s_(t)) for t in net.terminals if s_(t) in a}
    routing, delays = {}, {}
    for t in net.terminals:
        if s_(t) not in a:
            continue
        routing[t] = Routing(
            tuple(m for m in net.nodes if bit(hn_(t, m))),
            tuple(l for l in net.links if bit(hl_(t, l))),
        )
        if e_(t) in a:
            delays[t] = a[e_(t)]
    node_load = {m: a[dn_(m)] for m in net.nodes if dn_(m) in a}
    link_load = {l: a[dl_(l)] for l in net.links if dl_(l) in a}
    commodity = {i: bit(fn_(i)) for i in net.buses if fn_(i) in a}
    return DecodedStage(lines, loads, energized, comm, routing, delays, node_load, link_load,
                        commodity)
