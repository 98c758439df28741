import numpy as np
import pytest

from sdnrestore.formulation import FormulationConfig
from sdnrestore.netmodel import (CENTER, FORWARDER, TERMINAL, Bus, CommLink, CommNode,
                                 CoupledNetwork, Line, Scenario)

ACCEPTANCE = []


def terminal(tid, bus, bw=10.0, w=2.0, tau=10.0):
    return CommNode(tid, TERMINAL, bw, 0.0, bus, w, tau)


def two_bus(*, sw_from=True, sw_to=True, load=50.0, pg_max=100.0, line_bw=10.0):
    """Source bus A feeding load bus B over one switched line.

    Terminals TA and TB reach the center C through forwarder F.
    """
    buses = [Bus("A", has_source=True, source_p_max=pg_max, source_q_max=pg_max,
                 has_load_switch=False),
             Bus("B", p_load=load, q_load=load / 2)]
    lines = [Line("L1", "A", "B", 0.5, 0.4, 500.0, 500.0, sw_from, sw_to)]
    nodes = [terminal("TA", "A"), terminal("TB", "B"),
             CommNode("F", FORWARDER, 20.0, 1.0), CommNode("C", CENTER, 100.0, 0.5)]
    links = [CommLink("TA-F", "TA", "F", line_bw, 1.0), CommLink("TB-F", "TB", "F", line_bw, 1.0),
             CommLink("F-C", "F", "C", line_bw, 2.0)]
    return CoupledNetwork.build(buses, lines, nodes, links)


def chain(n_loads=3, *, load=40.0, pg_max=1000.0):
    """Source S0 and a chain of switched load buses, each with its own terminal."""
    buses = [Bus("S0", has_source=True, source_p_max=pg_max, source_q_max=pg_max,
                 has_load_switch=False)]
    lines, nodes, links = [], [CommNode("F", FORWARDER, 40.0, 1.0),
                               CommNode("C", CENTER, 100.0, 0.5)], []
    links.append(CommLink("F-C", "F", "C", 40.0, 1.0))
    nodes.append(terminal("T0", "S0"))
    links.append(CommLink("A0", "T0", "F", 10.0, 1.0))
    for k in range(1, n_loads + 1):
        buses.append(Bus(f"B{k}", p_load=load, q_load=load / 2))
        prev = "S0" if k == 1 else f"B{k - 1}"
        lines.append(Line(f"L{k}", prev, f"B{k}", 0.2, 0.1, 500.0, 500.0))
        nodes.append(terminal(f"T{k}", f"B{k}"))
        links.append(CommLink(f"A{k}", f"T{k}", "F", 10.0, 1.0))
    return CoupledNetwork.build(buses, lines, nodes, links)


def staged(seed):
    """Random radial feeder whose shared uplink admits two or three terminals at once.

    Every bus has a load and a terminal, so closing lines takes several
    rounds of communication and the cyclic planner usually needs more than
    one stage. Returns ``(net, sc, cfg)``.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 9))
    ids = [f"B{i}" for i in range(n)]
    second = ids[int(rng.integers(1, n))] if rng.random() < 0.3 else None
    buses = []
    for b in ids:
        src = b in ("B0", second)
        buses.append(Bus(b, float(rng.integers(1, 11) * 10), float(rng.integers(0, 6) * 10),
                         float(rng.choice([1.0, 2.0])), has_load_switch=bool(rng.random() < 0.8),
                         has_source=src, source_p_max=float(rng.integers(20, 80) * 10) if src
                         else None, source_q_max=400.0 if src else None))
    lines = []
    for i in range(1, n):
        mode = rng.random()
        ends = (True, True) if mode < 0.5 else (True, False) if mode < 0.75 else (False, True)
        lines.append(Line(f"L{i}", ids[int(rng.integers(0, i))], ids[i], 0.2, 0.1, 900.0,
                          900.0, *ends))
    nodes = [CommNode("F", FORWARDER, 100.0, 0.5), CommNode("C", CENTER, 100.0, 0.5)]
    links = [CommLink("F-C", "F", "C", float(2 * rng.integers(2, 4)), 1.0)]
    for b in ids:
        nodes.append(terminal(f"T{b}", b))
        links.append(CommLink(f"A{b}", f"T{b}", "F", 10.0, 1.0))
    net = CoupledNetwork.build(buses, lines, nodes, links)
    failed_lines = [f"L{int(rng.integers(1, n))}"] if rng.random() < 0.3 else []
    failed_nodes = [f"T{ids[int(rng.integers(1, n))]}"] if rng.random() < 0.2 else []
    sc = Scenario.build(net, failed_lines=failed_lines, failed_nodes=failed_nodes)
    cfg = FormulationConfig(enforce_load_switch_comm=bool(rng.random() < 0.3),
                            require_both_ends_observed_to_close=bool(rng.random() < 0.8))
    return net, sc, cfg


@pytest.fixture
def net2():
    return two_bus()


@pytest.fixture
def sc2(net2):
    return Scenario.intact(net2)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed and call.excinfo is not None:
        detail = (detail + "; " if detail else "") + call.excinfo.exconly().splitlines()[0][:200]
    ACCEPTANCE.append((marker.args[0], rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
