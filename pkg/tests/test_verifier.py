from dataclasses import replace

import pytest

from sdnrestore.formulation import FormulationConfig, Routing
from sdnrestore.netmodel import Bus, CoupledNetwork, Line, Scenario
from sdnrestore.verifier import (check_lcc, prefault_routes, prune_cycles, reachable,
                                 shortest_routes, verify_power, verify_routing,
                                 verify_terminal)

from conftest import chain, two_bus

GOOD = Routing(("C", "F", "TB"), ("F-C", "TB-F"))


def codes(violations):
    return {v.code for v in violations}


def test_valid_route(net2, sc2):
    verdict = verify_terminal(net2, sc2, "TB", GOOD)
    assert verdict.ok and verdict.path == ("TB", "F", "C")
    assert verdict.delay == pytest.approx(4.5)


@pytest.mark.parametrize("route,reason", [
    (Routing(("F", "TB"), ("TB-F",)), "eq26"),
    (Routing(("C", "F", "TA", "TB"), ("F-C", "TB-F")), "eq25"),
    (Routing(("C", "TB"), ("F-C", "TB-F")), "eq24"),
])
def test_broken_routes(net2, sc2, route, reason):
    assert verify_terminal(net2, sc2, "TB", route).reason == reason


def test_failed_elements_and_delay_cap(net2):
    sc = Scenario.build(net2, failed_links=["F-C"])
    assert verify_terminal(net2, sc, "TB", GOOD).reason == "eq21"
    sc = Scenario.build(net2, failed_nodes=["F"])
    assert verify_terminal(net2, sc, "TB", GOOD).reason == "eq22"
    slow = CoupledNetwork.build(
        net2.buses.values(), net2.lines.values(),
        [n if n.id != "TB" else replace(n, delay_cap=4.0)
         for n in net2.nodes.values()],
        net2.links.values())
    assert verify_terminal(slow, Scenario.intact(slow), "TB", GOOD).reason == "eq33"


def test_idle_terminal_with_support_is_a_stray_cycle(net2, sc2):
    verdict = verify_terminal(net2, sc2, "TB", GOOD, communicating=False)
    assert not verdict.ok and verdict.reason == "stray cycle"
    assert prune_cycles(net2, {"TB": Routing(("F",), ())}) == {"TB": Routing()}
    assert prune_cycles(net2, {"TB": GOOD}) == {"TB": GOOD}


def test_shared_bandwidth_is_summed():
    net = two_bus(line_bw=2.0)
    ra = {"TA": Routing(("C", "F", "TA"), ("F-C", "TA-F")), "TB": GOOD}
    verdict = verify_routing(net, Scenario.intact(net), ra, {"TA": 1, "TB": 1})
    assert codes(verdict.violations) == {"eq31"}
    assert verdict.link_load["F-C"] == 4.0
    assert verdict.node_load["F"] == 4.0


def test_power_on_two_bus(net2, sc2):
    verdict = verify_power(net2, sc2, {"L1": 1}, {"A": 1, "B": 1}, FormulationConfig())
    assert verdict.ok
    assert verdict.energized == {"A", "B"}
    assert verdict.pickup_kw == 50.0
    assert verdict.generation["A"] == (50.0, 25.0)
    line = net2.lines["L1"]
    drop = (line.r * 50 + line.x * 25) * 1e-3 / 12.66
    assert verdict.voltages["B"] == pytest.approx(12.66 - drop)


def test_power_violations(net2, sc2):
    assert codes(verify_power(net2, sc2, {"L1": 0}, {"A": 1, "B": 1}).violations) == {"eq17"}
    small = two_bus(pg_max=10.0)
    found = verify_power(small, Scenario.intact(small), {"L1": 1}, {"A": 1, "B": 1})
    assert codes(found.violations) == {"eq2", "eq3"}
    dead = Scenario.build(net2, failed_lines=["L1"])
    assert "eq1" in codes(verify_power(net2, dead, {"L1": 1}, {"A": 1}).violations)


def test_loop_and_two_sources_are_rejected():
    net = chain(2)
    loop = CoupledNetwork.build(
        net.buses.values(),
        list(net.lines.values()) + [Line("L9", "S0", "B2", 0.1, 0.1, 500, 500)],
        net.nodes.values(), net.links.values())
    found = verify_power(loop, Scenario.intact(loop), {"L1": 1, "L2": 1, "L9": 1}, {"S0": 1})
    assert "radiality" in codes(found.violations)
    buses = [b if b.id != "B2" else Bus("B2", has_source=True, source_p_max=10,
                                        source_q_max=10, has_load_switch=False)
             for b in net.buses.values()]
    twin = CoupledNetwork.build(buses, net.lines.values(), net.nodes.values(),
                                net.links.values())
    found = verify_power(twin, Scenario.intact(twin), {"L1": 1, "L2": 1}, {"S0": 1, "B2": 1})
    assert "one-DG rule" in codes(found.violations)


def test_closed_line_without_source():
    net = chain(2)
    sc = Scenario.build(net, failed_buses=["S0"])
    found = verify_power(net, sc, {"L1": 0, "L2": 1}, {})
    assert codes(found.violations) == {"eq20"}


def test_line_control_checks(net2):
    cfg = FormulationConfig()
    assert codes(check_lcc(net2, {"L1": 0}, {"L1": 1}, {"TA": 1, "TB": 0}, cfg)) == {"eq35"}
    assert check_lcc(net2, {"L1": 0}, {"L1": 1}, {"TA": 1, "TB": 1}, cfg) == []
    # opening needs only one communicating switch end
    assert check_lcc(net2, {"L1": 1}, {"L1": 0}, {"TA": 0, "TB": 1}, cfg) == []
    assert codes(check_lcc(net2, {"L1": 1}, {"L1": 0}, {"TA": 0, "TB": 0}, cfg)) == {"eq35"}
    fixed = two_bus(sw_from=False, sw_to=False)
    assert codes(check_lcc(fixed, {"L1": 1}, {"L1": 0}, {"TA": 1, "TB": 1}, cfg)) == {"eq35"}


def test_shortest_routes_and_reachability(net2, sc2):
    routes = shortest_routes(net2)
    assert set(routes["TB"].nodes) == {"TB", "F", "C"}
    assert routes["TB"].delay == pytest.approx(4.5)
    sc = Scenario.build(net2, failed_links=["TB-F"])
    assert reachable(net2, sc, prefault_routes(net2)) == {"TA": 1, "TB": 0}
    assert reachable(net2, sc2) == {"TA": 1, "TB": 1}
