import pytest

from sdnrestore.netmodel import (CENTER, Bus, CommNode, CoupledNetwork, Line, Scenario,
                                 effective_initial_lines, manual_isolation_lines, validate)

from conftest import chain, terminal, two_bus


def codes(violations):
    return {v.code for v in violations}


def rebuild(net, *, buses=None, lines=None, nodes=None, links=None):
    return CoupledNetwork.build(
        buses if buses is not None else net.buses.values(),
        lines if lines is not None else net.lines.values(),
        nodes if nodes is not None else net.nodes.values(),
        links if links is not None else net.links.values(),
    )


def test_well_formed_two_bus_is_clean(net2, sc2):
    assert validate(net2, sc2) == []


def test_duplicate_ids_rejected_at_build(net2):
    buses = list(net2.buses.values()) + [Bus("A")]
    with pytest.raises(ValueError, match="duplicate bus"):
        rebuild(net2, buses=buses)


def test_switched_bus_without_terminal():
    net = two_bus()
    nodes = [n for n in net.nodes.values() if n.id != "TB"]
    links = [l for l in net.links.values() if l.id != "TB-F"]
    found = validate(rebuild(net, nodes=nodes, links=links))
    assert "missing coupling" in codes(found)
    assert any(v.element == "B" for v in found)


def test_center_count():
    net = two_bus()
    no_center = rebuild(net, nodes=[n for n in net.nodes.values() if n.kind != CENTER],
                        links=[l for l in net.links.values() if l.id != "F-C"])
    assert "no operation center" in codes(validate(no_center))
    two = rebuild(net, nodes=list(net.nodes.values()) + [CommNode("C2", CENTER, 10.0)])
    assert "multiple operation centers" in codes(validate(two))


def test_dangling_and_coupling_errors():
    net = two_bus()
    lines = list(net.lines.values()) + [Line("L9", "A", "Z", 1, 1, 1, 1)]
    assert "dangling line" in codes(validate(rebuild(net, lines=lines)))
    nodes = list(net.nodes.values()) + [terminal("TX", "A")]
    assert "coupling not injective" in codes(validate(rebuild(net, nodes=nodes)))
    nodes = list(net.nodes.values()) + [terminal("TY", "nowhere")]
    assert "dangling coupling" in codes(validate(rebuild(net, nodes=nodes)))


def test_negative_values_reported():
    net = two_bus()
    buses = [Bus("A", has_source=True, source_p_max=-1, source_q_max=1, has_load_switch=False),
             net.buses["B"]]
    found = validate(rebuild(net, buses=buses))
    assert any("source_p_max" in v.message for v in found)


def test_scenario_maps_must_be_total_and_binary(net2):
    sc = Scenario.intact(net2)
    partial = Scenario({"A": 1}, sc.line_ok, sc.node_ok, sc.link_ok, sc.line_initial,
                       sc.load_initial)
    assert "scenario" in codes(validate(net2, partial))
    odd = sc.replace(line_initial={"L1": 2})
    assert any("non-binary" in v.message for v in validate(net2, odd))


def test_initial_state_with_two_sources_is_flagged():
    buses = [Bus("A", has_source=True, source_p_max=1, source_q_max=1, has_load_switch=False),
             Bus("B", has_source=True, source_p_max=1, source_q_max=1, has_load_switch=False)]
    net = two_bus()
    net = rebuild(net, buses=buses)
    sc = Scenario.build(net, line_initial={"L1": 1})
    assert "initial state not radial" in codes(validate(net, sc))


def test_damaged_closed_line_is_taken_as_open():
    net = chain(2)
    sc = Scenario.build(net, failed_lines=["L2"], line_initial={"L1": 1, "L2": 1})
    assert effective_initial_lines(net, sc) == {"L1": 1, "L2": 0}


def test_dead_closed_component_is_taken_as_open():
    net = chain(3)
    sc = Scenario.build(net, failed_lines=["L1"], line_initial={"L1": 1, "L2": 1, "L3": 1})
    assert effective_initial_lines(net, sc) == {"L1": 0, "L2": 0, "L3": 0}


def test_manual_isolation_for_unswitched_damaged_line():
    net = two_bus(sw_from=False, sw_to=False)
    sc = Scenario.build(net, failed_lines=["L1"], line_initial={"L1": 1})
    assert manual_isolation_lines(net, sc) == ["L1"]
    assert not net.lines["L1"].controllable


def test_incidence_signs_and_derived_sets(net2):
    (line, sign), = net2.incident_lines("A")
    assert (line.id, sign) == ("L1", 1)
    assert net2.incident_lines("B")[0][1] == -1
    assert net2.sources == ("A",)
    assert net2.center == "C"
    assert dict(net2.terminal_of_bus) == {"A": "TA", "B": "TB"}
    with pytest.raises(KeyError):
        net2.incident_lines("Q")


def test_line_operable_needs_both_buses(net2):
    sc = Scenario.build(net2, failed_buses=["B"])
    assert not sc.line_operable(net2, "L1")
    assert Scenario.intact(net2).line_operable(net2, "L1")
