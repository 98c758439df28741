"""Test feeders with an attached SDN and seeded disaster damage.

``gen_feeder33`` is the 33-bus Baran-Wu feeder (12.66 kV) with DGs at buses
18, 21 and 31. ``gen_feeder123`` rebuilds the 123-bus feeder topology
(4.16 kV, regulators folded into lines, normally-open ties kept) with DGs
at the five tie stubs; its impedances are representative, not the
published per-segment values. ``gen_random`` draws tiny coupled instances
sized for exhaustive enumeration.
"""
from __future__ import annotations

from dataclasses import replace

import networkx as nx
import numpy as np

from ..formulation import FormulationConfig, energized_buses
from ..netmodel import (CENTER, FORWARDER, TERMINAL, Bus, CommLink, CommNode, CoupledNetwork,
                        Line, Scenario, effective_initial_lines, validate)
from ..planner import compare
from ..verifier import prefault_routes, verify_power
from .caseio import DEFAULT_BANDWIDTH, DEFAULT_DELAY_CAP, Case
from .records import fmt_number as fmt

PROFILES = ("none", "light", "severe")

# seed for which the severe 33-bus case separates the three algorithms
FEEDER33_SEVERE_SEED = 22

# (from, to, r ohm, x ohm)
_F33_LINES = [
    (1, 2, .0922, .0470), (2, 3, .4930, .2511), (3, 4, .3660, .1864), (4, 5, .3811, .1941),
    (5, 6, .8190, .7070), (6, 7, .1872, .6188), (7, 8, .7114, .2351), (8, 9, 1.030, .740),
    (9, 10, 1.044, .740), (10, 11, .1966, .0650), (11, 12, .3744, .1238),
    (12, 13, 1.468, 1.155), (13, 14, .5416, .7129), (14, 15, .5910, .5260),
    (15, 16, .7463, .5450), (16, 17, 1.289, 1.721), (17, 18, .7320, .5740),
    (2, 19, .1640, .1565), (19, 20, 1.5042, 1.3554), (20, 21, .4095, .4784),
    (21, 22, .7089, .9373), (3, 23, .4512, .3083), (23, 24, .8980, .7091),
    (24, 25, .8960, .7011), (6, 26, .2030, .1034), (26, 27, .2842, .1447),
    (27, 28, 1.059, .9337), (28, 29, .8042, .7006), (29, 30, .5075, .2585),
    (30, 31, .9744, .9630), (31, 32, .3105, .3619), (32, 33, .3410, .5302),
]
_F33_TIES = [(8, 21, 2.0, 2.0), (9, 15, 2.0, 2.0), (12, 22, 2.0, 2.0),
             (18, 33, 0.5, 0.5), (25, 29, 0.5, 0.5)]
_F33_LOADS = {
    1: (0, 0), 2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20),
    7: (200, 100), 8: (200, 100), 9: (60, 20), 10: (60, 20), 11: (45, 30), 12: (60, 35),
    13: (60, 35), 14: (120, 80), 15: (60, 10), 16: (60, 20), 17: (60, 20), 18: (90, 40),
    19: (90, 40), 20: (90, 40), 21: (90, 40), 22: (90, 40), 23: (90, 50), 24: (420, 200),
    25: (420, 200), 26: (60, 25), 27: (60, 25), 28: (60, 20), 29: (120, 70), 30: (200, 600),
    31: (150, 70), 32: (210, 100), 33: (60, 40),
}
_F33_DG = {18: (1600, 1200), 21: (1400, 1000), 31: (1600, 1400)}

# 123-bus topology; regulators and the substation bus are folded away
_F123_TREE = [
    (1, 2), (1, 3), (1, 7), (3, 4), (3, 5), (5, 6), (7, 8), (8, 12), (8, 9), (8, 13),
    (9, 14), (13, 34), (13, 18), (14, 11), (14, 10), (15, 16), (15, 17), (18, 19), (18, 21),
    (19, 20), (21, 22), (21, 23), (23, 24), (23, 25), (25, 26), (25, 28), (26, 27), (26, 31),
    (27, 33), (28, 29), (29, 30), (30, 250), (31, 32), (34, 15), (35, 36), (35, 40),
    (36, 37), (36, 38), (38, 39), (40, 41), (40, 42), (42, 43), (42, 44), (44, 45), (44, 47),
    (45, 46), (47, 48), (47, 49), (49, 50), (50, 51), (51, 151), (52, 53), (53, 54),
    (54, 55), (54, 57), (55, 56), (57, 58), (57, 60), (58, 59), (60, 61), (60, 62), (62, 63),
    (63, 64), (64, 65), (65, 66), (67, 68), (67, 72), (67, 97), (68, 69), (69, 70), (70, 71),
    (72, 73), (72, 76), (73, 74), (74, 75), (76, 77), (76, 86), (77, 78), (78, 79), (78, 80),
    (80, 81), (81, 82), (81, 84), (82, 83), (84, 85), (86, 87), (87, 88), (87, 89), (89, 90),
    (89, 91), (91, 92), (91, 93), (93, 94), (93, 95), (95, 96), (97, 98), (98, 99),
    (99, 100), (100, 450), (101, 102), (101, 105), (102, 103), (103, 104), (105, 106),
    (105, 108), (106, 107), (108, 109), (108, 300), (109, 110), (110, 111), (110, 112),
    (112, 113), (113, 114), (61, 610), (13, 52), (18, 35), (60, 67), (97, 101),
]
_F123_STUBS = [(250, 251), (450, 451), (95, 195), (300, 350)]
_F123_TIES = [(54, 94), (151, 300)]
_F123_HEAVY = {47: (105, 75), 48: (210, 150), 49: (140, 95), 64: (75, 35), 65: (140, 100),
               66: (75, 35), 76: (245, 180)}
_F123_DG = {195: (1000, 750), 251: (1200, 900), 350: (1000, 750), 451: (1000, 750),
            610: (1000, 750)}

# damage probabilities per element class
_DAMAGE = {
    "none": dict(spur=0.0, ring=0.0, forwarder=0.0, terminal=0.0, line=0.0, bus=0.0),
    "light": dict(spur=0.1, ring=0.05, forwarder=0.0, terminal=0.02, line=0.03, bus=0.0),
    "severe": dict(spur=0.4, ring=0.1, forwarder=0.05, terminal=0.05, line=0.08, bus=0.03),
}


def _pad(n_items):
    width = len(str(n_items))
    return lambda i: str(i).zfill(width)


def _sdn(bus_ids, n_forwarders, *, terminal_bw=10.0, forwarder_bw=20.0, spur_bw=10.0,
         ring_bw=4.0, access_delay=1.0, spur_delay=2.0, ring_delay=1.5, forward_delay=1.0,
         center_delay=0.5):
    """Terminals on every bus, grouped onto a ring of forwarders with spurs to the center.

    Pre-disaster routes go terminal -> forwarder -> center; the low-capacity
    ring only carries detours.
    """
    pad_t, pad_f = _pad(max(int(b) for b in bus_ids)), _pad(n_forwarders)
    nodes = [CommNode("C", CENTER, 1000.0, center_delay)]
    links = []
    fwd = [f"F{pad_f(k + 1)}" for k in range(n_forwarders)]
    for k, f in enumerate(fwd):
        nodes.append(CommNode(f, FORWARDER, forwarder_bw, forward_delay))
        links.append(CommLink(f"S{pad_f(k + 1)}", f, "C", spur_bw, spur_delay))
        nxt = fwd[(k + 1) % n_forwarders]
        if n_forwarders > 2 or k == 0:
            links.append(CommLink(f"R{pad_f(k + 1)}", f, nxt, ring_bw, ring_delay))
    for k, block in enumerate(np.array_split(np.array(bus_ids, dtype=object), n_forwarders)):
        for b in block:
            t = f"T{pad_t(b)}"
            nodes.append(CommNode(t, TERMINAL, terminal_bw, 0.0, attached_bus=str(b),
                                  required_bandwidth=DEFAULT_BANDWIDTH,
                                  delay_cap=DEFAULT_DELAY_CAP))
            links.append(CommLink(f"A{pad_t(b)}", t, fwd[k], terminal_bw, access_delay))
    return nodes, links


def damage_params(profile) -> tuple[str, dict[str, float]]:
    """Resolve a profile name, or a mapping of per-class failure probabilities
    (missing classes default to the severe values), to ``(label, params)``."""
    if isinstance(profile, str):
        if profile not in _DAMAGE:
            raise ValueError(f"unknown damage profile {profile!r}; choose from {PROFILES}")
        return profile, dict(_DAMAGE[profile])
    params = dict(_DAMAGE["severe"])
    for key, value in dict(profile).items():
        if key not in params:
            raise ValueError(f"unknown damage class {key!r}; choose from {sorted(params)}")
        if not 0.0 <= float(value) <= 1.0:
            raise ValueError(f"damage probability for {key!r} must lie in [0, 1]")
        params[key] = float(value)
    label = "custom:" + ",".join(f"{k}={fmt(v)}" for k, v in sorted(params.items()))
    return label, params


def _damage(net, rng, p, protect_buses=()):
    protect = set(protect_buses)

    def pick(ids, prob):
        ids = list(ids)
        draws = rng.random(len(ids))
        return [i for i, d in zip(ids, draws) if d < prob]

    return dict(
        failed_buses=pick([b for b in net.buses if b not in protect], p["bus"]),
        failed_lines=pick(net.lines, p["line"]),
        failed_nodes=pick(net.forwarders, p["forwarder"]) + pick(net.terminals, p["terminal"]),
        failed_links=pick([l for l in net.links if l.startswith("S")], p["spur"])
        + pick([l for l in net.links if l.startswith("R")], p["ring"]),
    )


def _assemble(name, buses, lines, n_forwarders, seed, profile, cfg):
    # after the disaster every switch is open and every bus is dark
    nodes, links = _sdn([b.id for b in buses], n_forwarders)
    net = CoupledNetwork.build(buses, lines, nodes, links)
    rng = np.random.default_rng(seed)
    label, params = damage_params(profile)
    failed = _damage(net, rng, params, protect_buses=net.sources)
    sc = Scenario.build(net, **failed)
    problems = validate(net, sc)
    if problems:
        raise ValueError(f"generated case is invalid: {problems[0]}")
    meta = {"name": name, "seed": str(seed), "profile": label}
    return Case(net, sc, cfg, meta)


def gen_feeder33(seed: int = FEEDER33_SEVERE_SEED, profile: str = "severe") -> Case:
    pad = _pad(len(_F33_LINES) + len(_F33_TIES))
    buses = []
    for i, (p, q) in _F33_LOADS.items():
        dg = _F33_DG.get(i)
        buses.append(Bus(str(i), p, q, has_source=dg is not None,
                         source_p_max=dg and dg[0], source_q_max=dg and dg[1]))
    lines = []
    for n, (a, b, r, x) in enumerate(_F33_LINES, start=1):
        # sectionalizing switch at the upstream end only
        lines.append(Line(f"L{pad(n)}", str(a), str(b), r, x, 4000.0, 3000.0, True, False))
    for n, (a, b, r, x) in enumerate(_F33_TIES, start=len(_F33_LINES) + 1):
        lines.append(Line(f"L{pad(n)}", str(a), str(b), r, x, 1500.0, 1200.0, True, True))
    cfg = FormulationConfig(v_ref=12.66)
    return _assemble("feeder33", buses, lines, 10, seed, profile, cfg)


def _f123_load(bus: int) -> tuple[float, float]:
    if bus in _F123_HEAVY:
        return _F123_HEAVY[bus]
    if bus > 114 or bus in (1, 3, 8, 13, 14, 15, 18, 21, 23, 25, 26, 40, 44, 54, 57, 67, 72,
                            78, 81, 89, 91, 93, 97, 101, 105, 108, 110):
        return (0.0, 0.0)  # junction or tie stub
    return (40.0, 20.0) if bus % 3 == 0 else (20.0, 10.0)


def gen_feeder123(seed: int = 0, profile: str = "none") -> Case:
    ids = sorted({b for edge in _F123_TREE + _F123_STUBS for b in edge})
    buses = []
    for i in ids:
        p, q = _f123_load(i)
        dg = _F123_DG.get(i)
        buses.append(Bus(str(i), p, q, has_source=dg is not None,
                         source_p_max=dg and dg[0], source_q_max=dg and dg[1]))
    edges = _F123_TREE + _F123_STUBS + _F123_TIES
    pad = _pad(len(edges))
    lines = []
    for n, (a, b) in enumerate(edges, start=1):
        lid = f"L{pad(n)}"
        # representative overhead segment impedances (ohm)
        r = 0.03 + 0.02 * (n % 4)
        x = 1.6 * r
        tie = (a, b) in _F123_STUBS or (a, b) in _F123_TIES
        lines.append(Line(lid, str(a), str(b), r, x, 2500.0, 2000.0, True, tie))
    cfg = FormulationConfig(v_ref=4.16)
    return _assemble("feeder123", buses, lines, 37, seed, profile, cfg)


def search_severe_seed(start: int = 0, limit: int = 100, profile="severe",
                       min_stages: int = 2, cfg: FormulationConfig | None = None):
    """First seed at or after ``start`` whose 33-bus case strictly orders
    OLR < SCLR < ICLR pickups with ICLR taking ``min_stages`` stages or more.

    Returns ``(seed, plans)``; raises ``LookupError`` when none is found.
    """
    for seed in range(start, start + limit):
        case = gen_feeder33(seed, profile)
        plans = compare(case.net, case.sc, cfg or case.cfg)
        if any(p.error for p in plans):
            continue
        olr, sclr, iclr = (p.total_pickup_kw for p in plans)
        if olr < sclr < iclr and len(plans[2].load_stages) >= min_stages:
            return seed, plans
    raise LookupError(f"no separating seed in [{start}, {start + limit})")


# tiny random instances -----------------------------------------------------

def gen_random(seed: int, *, max_buses: int = 5, max_lines: int = 7) -> Case:
    """A small coupled instance within the exhaustive-oracle guards.

    Loads are integer kW; capacities along pre-disaster routes are raised
    to fit them, so the load-only baseline always has a feasible routing.
    Damage, initial states and the two control-rule options are drawn at
    random.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_buses + 1))
    bus_ids = [f"b{i}" for i in range(n)]
    n_src = int(rng.integers(1, min(2, n) + 1))
    sources = set(rng.choice(bus_ids, size=n_src, replace=False).tolist())
    buses = []
    for b in bus_ids:
        src = b in sources
        p = float(rng.integers(0, 31) * 10)
        q = float(rng.integers(0, 16) * 10)
        buses.append(Bus(
            b, p, q, float(rng.choice([1.0, 1.0, 2.0])),
            has_load_switch=bool(rng.random() < 0.85),
            has_source=src,
            source_p_max=float(rng.integers(10, 60) * 10) if src else None,
            source_q_max=float(rng.integers(5, 40) * 10) if src else None,
        ))
    # spanning tree plus a few extra edges
    edges = [(bus_ids[int(rng.integers(0, i))], bus_ids[i]) for i in range(1, n)]
    extra = int(rng.integers(0, 3))
    for _ in range(extra):
        a, b = rng.choice(bus_ids, size=2, replace=False).tolist()
        edges.append((a, b))
    edges = edges[:max_lines]
    lines = []
    for k, (a, b) in enumerate(edges):
        mode = rng.random()
        sw_from, sw_to = (True, True) if mode < 0.5 else (True, False) if mode < 0.75 \
            else (False, True) if mode < 0.95 else (False, False)
        lines.append(Line(f"l{k}", a, b, float(rng.uniform(0.1, 15.0)),
                          float(rng.uniform(0.1, 10.0)), float(rng.integers(5, 60) * 10),
                          float(rng.integers(5, 60) * 10), sw_from, sw_to))
    probe = CoupledNetwork.build(buses, lines, [], [])
    monitored = sorted(probe.monitored_buses())

    n_fwd = int(rng.integers(1, 4))
    nodes = [CommNode("C", CENTER, float(rng.integers(2, 12)), float(rng.uniform(0, 1)))]
    links = []
    fwd = [f"F{i}" for i in range(n_fwd)]
    for i, f in enumerate(fwd):
        nodes.append(CommNode(f, FORWARDER, float(rng.integers(2, 8)),
                              float(rng.uniform(0, 2))))
        links.append(CommLink(f"s{i}", f, "C", float(rng.integers(2, 6)),
                              float(rng.uniform(0.5, 3))))
        if n_fwd > 1 and (i + 1 < n_fwd or n_fwd > 2):
            links.append(CommLink(f"r{i}", f, fwd[(i + 1) % n_fwd], float(rng.integers(2, 6)),
                                  float(rng.uniform(0.5, 4))))
    for b in monitored:
        t = f"T{b}"
        nodes.append(CommNode(t, TERMINAL, float(rng.integers(2, 8)), 0.0, attached_bus=b,
                              required_bandwidth=float(rng.choice([1.0, 2.0])),
                              delay_cap=float(rng.choice([6.0, 10.0]))))
        home = fwd[int(rng.integers(0, n_fwd))]
        links.append(CommLink(f"a{b}", t, home, float(rng.integers(2, 6)),
                              float(rng.uniform(0.2, 2))))
        if rng.random() < 0.25 and n_fwd > 1:
            other = fwd[(fwd.index(home) + 1) % n_fwd]
            links.append(CommLink(f"a{b}x", t, other, float(rng.integers(2, 6)),
                                  float(rng.uniform(0.2, 4))))

    net = CoupledNetwork.build(buses, lines, nodes, links)
    net = _fit_prefault(net)

    def pick(ids, prob):
        return [i for i in ids if rng.random() < prob]

    line_initial = {k: int(rng.random() < 0.5) for k in net.lines}
    failed = dict(
        failed_buses=pick([b for b in net.buses], 0.1),
        failed_lines=pick(list(net.lines), 0.15),
        failed_nodes=pick(list(net.forwarders) + list(net.terminals), 0.1),
        failed_links=pick(list(net.links), 0.15),
    )
    sc = Scenario.build(net, line_initial=line_initial, **failed)
    sc = _radialize(net, sc)
    lines_now = effective_initial_lines(net, sc)
    live = energized_buses(net, sc, lines_now)
    sc = sc.replace(load_initial={b: int(b in live and rng.random() < 0.3) for b in net.buses})
    cfg = FormulationConfig(
        enforce_load_switch_comm=bool(rng.random() < 0.3),
        require_both_ends_observed_to_close=bool(rng.random() < 0.8),
    )
    # keep the drawn operating state only if it is itself feasible
    if not _initial_feasible(net, sc, cfg):
        sc = sc.replace(load_initial={b: 0 for b in net.buses})
    if not _initial_feasible(net, sc, cfg):
        sc = sc.replace(line_initial={k: 0 for k in net.lines})
    problems = validate(net, sc)
    if problems:
        raise ValueError(f"random case {seed} invalid: {problems[0]}")
    return Case(net, sc, cfg, {"name": f"random-{seed}", "seed": str(seed), "profile": "random"})


def _initial_feasible(net, sc, cfg) -> bool:
    lines = effective_initial_lines(net, sc)
    live = energized_buses(net, sc, lines)
    loads = {b: int(sc.load_initial.get(b, 0) or (b in live and not net.buses[b].has_load_switch))
             for b in net.buses}
    return verify_power(net, sc, lines, loads, cfg).ok


def _fit_prefault(net: CoupledNetwork) -> CoupledNetwork:
    """Raise capacities and delay caps so every pre-disaster route fits."""
    routes = prefault_routes(net)
    node_use = {m: 0.0 for m in net.nodes}
    link_use = {l: 0.0 for l in net.links}
    nodes = dict(net.nodes)
    for t, path in routes.items():
        w = net.nodes[t].required_bandwidth
        for m in path.nodes:
            node_use[m] += w
        for l in path.links:
            link_use[l] += w
        if path.delay > net.nodes[t].delay_cap:
            nodes[t] = replace(nodes[t], delay_cap=float(np.ceil(path.delay)))
    nodes = [replace(n, bandwidth_cap=max(n.bandwidth_cap, node_use[m]))
             for m, n in nodes.items()]
    links = [replace(k, bandwidth_cap=max(k.bandwidth_cap, link_use[l]))
             for l, k in net.links.items()]
    return CoupledNetwork.build(net.buses.values(), net.lines.values(), nodes, links)


def _radialize(net, sc):
    """Open initially closed lines until every live component is a tree with one source."""
    closed = {k: v for k, v in sc.line_initial.items()}
    for _ in range(len(closed) + 1):
        if not validate(net, sc.replace(line_initial=closed)):
            break
        g = nx.MultiGraph()
        g.add_nodes_from(net.buses)
        for k, on in closed.items():
            if on and sc.line_operable(net, k):
                ln = net.lines[k]
                g.add_edge(ln.from_bus, ln.to_bus, key=k)
        bad = None
        for comp in nx.connected_components(g):
            sub = g.subgraph(comp)
            srcs = [b for b in comp if net.buses[b].has_source and sc.bus_ok[b]]
            if sub.number_of_edges() >= len(comp) or len(srcs) > 1:
                bad = sorted(k for _, _, k in sub.edges(keys=True))[0]
                break
        if bad is None:
            break
        closed[bad] = 0
    return sc.replace(line_initial=closed)
