import pytest

from sdnrestore import planner
from sdnrestore.netmodel import (CENTER, FORWARDER, Bus, CommLink, CommNode, CoupledNetwork,
                                 Line, Scenario)
from sdnrestore.planner import ICLR, OLR, SCLR, compare, run
from sdnrestore.verifier import verify_plan

from conftest import chain, terminal


def twin_islands():
    """Two DG islands whose switches share a center link wide enough for two terminals."""
    buses, lines, nodes, links = [], [], [], []
    for n in (1, 2):
        buses += [Bus(f"S{n}", has_source=True, source_p_max=500, source_q_max=500,
                      has_load_switch=False),
                  Bus(f"B{n}", p_load=100.0 * n, q_load=50.0)]
        lines.append(Line(f"L{n}", f"S{n}", f"B{n}", 0.1, 0.1, 500, 500))
        for bus in (f"S{n}", f"B{n}"):
            nodes.append(terminal(f"T{bus}", bus))
            links.append(CommLink(f"A{bus}", f"T{bus}", "F", 10.0, 1.0))
    nodes += [CommNode("F", FORWARDER, 40.0, 1.0), CommNode("C", CENTER, 100.0, 0.5)]
    links.append(CommLink("F-C", "F", "C", 4.0, 1.0))
    return CoupledNetwork.build(buses, lines, nodes, links)


def test_intact_chain_all_algorithms_agree():
    net = chain(3)
    sc = Scenario.intact(net)
    plans = compare(net, sc)
    assert [p.algorithm for p in plans] == [OLR, SCLR, ICLR]
    assert {p.total_pickup_kw for p in plans} == {120.0}
    assert len(plans[2].stages) == 1
    for plan in plans:
        assert verify_plan(net, sc, plan) == []


def test_bandwidth_forces_one_island_per_stage():
    net = twin_islands()
    sc = Scenario.intact(net)
    plan = run(ICLR, net, sc)
    assert [s.cumulative_pickup_kw for s in plan.stages] == [200.0, 300.0]
    assert plan.stages[0].line_ops == [("L2", "close")]
    assert plan.stages[1].line_ops == [("L1", "close")]
    assert all(s.communicating == 2 for s in plan.stages)
    assert verify_plan(net, sc, plan) == []

    capped = run(ICLR, net, sc, max_stages=1)
    assert capped.total_pickup_kw == 200.0 and len(capped.stages) == 1

    sclr = run(SCLR, net, sc)
    assert [s.kind for s in sclr.stages] == ["comm", "load"]
    # terminal count alone cannot tell useful terminals from idle ones
    assert sclr.stages[0].communicating == 2
    assert sclr.total_pickup_kw <= plan.total_pickup_kw
    assert verify_plan(net, sc, sclr) == []


def test_olr_keeps_only_surviving_routes():
    net = chain(2)
    sc = Scenario.build(net, failed_links=["A2"])
    states, routing = planner.olr_comm_states(net, sc)
    assert states == {"T0": 1, "T1": 1, "T2": 0}
    assert set(routing) == {"T0", "T1"}
    plan = run(OLR, net, sc)
    assert plan.total_pickup_kw == 40.0
    assert plan.stages[0].line_ops == [("L1", "close")]


def test_stage_records_are_consistent():
    net = twin_islands()
    sc = Scenario.intact(net)
    plan = run(ICLR, net, sc)
    first, second = plan.stages
    assert second.prev_line_state == first.line_state
    assert second.prev_load_state == first.load_state
    assert second.stage_pickup_kw == pytest.approx(100.0)
    assert first.energized_buses == {"S1", "S2", "B2"}
    assert plan.energized_count == 4
    assert plan.total_wall_time > 0
    for t, on in first.comm_states.items():
        assert (first.delays[t] > 0) == bool(on)


def test_failures_become_plan_errors():
    # a latched load larger than its source
    net = chain(1, pg_max=10.0)
    sc = Scenario.build(net, line_initial={"L1": 1}, load_initial={"B1": 1})
    with pytest.raises(planner.PlanningError):
        run(ICLR, net, sc)
    plans = compare(net, sc)
    assert all(p.error and not p.stages for p in plans)


def test_argument_checks():
    net = chain(1)
    sc = Scenario.intact(net)
    assert run("olr", net, sc).algorithm == OLR
    with pytest.raises(ValueError):
        run("greedy", net, sc)
    with pytest.raises(ValueError):
        run(ICLR, net, sc, max_stages=0)
