import json
from dataclasses import fields

import pytest

from sdnrestore.netmodel import TERMINAL, Scenario, validate
from sdnrestore.planner import RestorationPlan, RestorationStage, SolveStats, run_iclr
from sdnrestore.tooling.caseio import CaseError, emit_case, parse_case, read_case, write_case
from sdnrestore.tooling.feeders import gen_feeder33, gen_feeder123, gen_random
from sdnrestore.tooling.planio import PlanError, emit_plan, parse_plan
from sdnrestore.tooling.report import (STAGE_FIELDS, TOTAL_FIELDS, build_report, emit_report,
                                       load_report, render_text)

from conftest import chain

MINIMAL = """\
[case]
format = sdnrestore-case
version = 1
name = tiny

[buses]
bus id=A source=1 pg_max=100 qg_max=100 load_switch=0
bus id=B p=50 q=25

[lines]
line id=L1 from=A to=B r=0.5 x=0.4 p_max=500 q_max=500

[nodes]
node id=TA kind=terminal bw=10 bus=A
node id=TB kind=terminal bw=10 bus=B
node id=F kind=forwarder bw=20 fwd=1
node id=C kind=center bw=100 fwd=0.5

[links]
link id=TA-F a=TA b=F bw=10 delay=1
link id=TB-F a=TB b=F bw=10 delay=1
link id=F-C a=F b=C bw=10 delay=2
"""


def issue_text(exc):
    return str(exc.value)


def test_minimal_case_parses_with_defaults():
    case = parse_case(MINIMAL)
    assert case.name == "tiny"
    assert set(case.net.buses) == {"A", "B"}
    tb = case.net.nodes["TB"]
    assert tb.required_bandwidth == 2.0 and tb.delay_cap == 10.0
    assert case.sc.line_initial == {"L1": 0}


def test_defaults_can_be_overridden_per_file_and_per_terminal():
    text = MINIMAL.replace("name = tiny", "name = tiny\ndefault_bandwidth = 3")
    text = text.replace("bus=B\n", "bus=B tau=7\n")
    case = parse_case(text)
    assert case.net.nodes["TA"].required_bandwidth == 3.0
    assert case.net.nodes["TB"].delay_cap == 7.0


@pytest.mark.parametrize("make", [
    lambda: gen_feeder33(22, "severe"),
    lambda: gen_feeder33(5, "light"),
    lambda: gen_feeder123(0, "none"),
    lambda: gen_feeder123(3, "severe"),
    lambda: gen_random(7),
    lambda: parse_case(MINIMAL),
])
def test_case_round_trip(make):
    case = make()
    text = emit_case(case)
    again = parse_case(text)
    assert emit_case(again) == text
    assert again.net.buses == case.net.buses
    assert again.net.lines == case.net.lines
    assert again.net.nodes == case.net.nodes
    assert all(dict(getattr(again.sc, f.name)) == dict(getattr(case.sc, f.name))
               for f in fields(case.sc))
    assert again.cfg == case.cfg


def test_generators_are_deterministic():
    assert emit_case(gen_feeder33(22, "severe")) == emit_case(gen_feeder33(22, "severe"))
    assert emit_case(gen_feeder123(4, "light")) == emit_case(gen_feeder123(4, "light"))
    assert emit_case(gen_feeder33(1, "severe")) != emit_case(gen_feeder33(2, "severe"))


def test_unknown_field_reports_location():
    text = MINIMAL.replace("bus id=B p=50", "bus id=B colour=red p=50")
    with pytest.raises(CaseError) as exc:
        parse_case(text)
    line = text.splitlines().index("bus id=B colour=red p=50 q=25") + 1
    assert exc.value.issues[0].line == line
    assert "colour" in issue_text(exc)


def test_duplicate_bus_reports_location():
    text = MINIMAL.replace("bus id=B p=50 q=25", "bus id=B p=50 q=25\nbus id=B p=1 q=1")
    with pytest.raises(CaseError) as exc:
        parse_case(text)
    (issue,) = exc.value.issues
    assert "duplicate bus" in issue.message
    assert (issue.line, issue.col) == (text.splitlines().index("bus id=B p=1 q=1") + 1, 8)


def test_missing_coupling_is_an_invariant_error():
    text = MINIMAL.replace("node id=TB kind=terminal bw=10 bus=B\n", "")
    text = text.replace("link id=TB-F a=TB b=F bw=10 delay=1\n", "")
    with pytest.raises(CaseError) as exc:
        parse_case(text)
    assert "missing coupling" in issue_text(exc)
    line = text.splitlines().index("bus id=B p=50 q=25") + 1
    assert any(i.line == line for i in exc.value.issues)


def test_bad_header_and_numbers():
    with pytest.raises(CaseError, match="format"):
        parse_case(MINIMAL.replace("format = sdnrestore-case", "format = other"))
    with pytest.raises(CaseError) as exc:
        parse_case(MINIMAL.replace("r=0.5", "r=half"))
    assert exc.value.issues[0].line == 11


def test_write_and_read_case(tmp_path):
    case = gen_feeder33(22, "severe")
    path = tmp_path / "f33.case"
    write_case(case, path)
    assert emit_case(read_case(path)) == emit_case(case)
    assert [p.name for p in tmp_path.iterdir()] == ["f33.case"]


def test_feeder_sizes_and_dg_placement():
    f33 = gen_feeder33(0, "none")
    assert len(f33.net.buses) == 33 and len(f33.net.nodes) == 44
    assert sorted(f33.net.sources, key=int) == ["18", "21", "31"]
    assert f33.cfg.v_ref == 12.66
    f123 = gen_feeder123(0, "none")
    assert len(f123.net.buses) == 123 and len(f123.net.nodes) == 161
    assert sorted(f123.net.sources, key=int) == ["195", "251", "350", "451", "610"]
    assert f123.cfg.v_ref == 4.16
    for case in (f33, f123):
        terms = [n for n in case.net.nodes.values() if n.kind == TERMINAL]
        assert {(n.required_bandwidth, n.delay_cap) for n in terms} == {(2.0, 10.0)}


@pytest.mark.parametrize("profile", ["none", "light", "severe"])
def test_generated_cases_validate(profile):
    for seed in range(3):
        for case in (gen_feeder33(seed, profile), gen_feeder123(seed, profile)):
            assert validate(case.net, case.sc) == []
    intact = gen_feeder33(0, "none").sc
    assert all(intact.line_ok.values()) and all(intact.node_ok.values())


def test_plan_round_trip():
    net = chain(3)
    plan = run_iclr(net, Scenario.intact(net))
    text = emit_plan(plan, "chain")
    back, header = parse_plan(text)
    assert header["case"] == "chain"
    assert emit_plan(back, "chain") == text
    assert back.total_pickup_kw == plan.total_pickup_kw
    assert back.stages[0].routing == plan.stages[0].routing
    with pytest.raises(PlanError):
        parse_plan(text.replace("action=close", "action=close when=now", 1))


def test_empty_report_is_header_only():
    text, js = emit_report([], "none")
    title, header = text.splitlines()
    assert title == "restoration comparison: none"
    assert header.split() == list(STAGE_FIELDS)
    assert json.loads(js)["stages"] == []


def fake_stage(index, kw, before):
    return RestorationStage(index, "load", {}, {"T1": 1}, [], [], {"A", "B"}, kw - before, kw,
                            SolveStats(kw, 0.0, 0.25))


def test_three_stage_report_and_round_trip():
    plan = RestorationPlan("ICLR", [fake_stage(1, 100.0, 0.0), fake_stage(2, 150.0, 100.0),
                                    fake_stage(3, 175.0, 150.0)])
    text, js = emit_report([plan], "demo")
    lines = text.splitlines()
    assert lines[0] == "restoration comparison: demo"
    assert lines[1].split() == list(STAGE_FIELDS)
    assert len(lines) == 2 + 3 + 3
    assert lines[-1].startswith("ICLR") and "total_kw=175.0" in lines[-1]
    data = load_report(js)
    assert [tuple(row) for row in data["stages"]] == [STAGE_FIELDS] * 3
    assert tuple(data["totals"][0]) == TOTAL_FIELDS
    assert [row["stage_kw"] for row in data["stages"]] == [100.0, 50.0, 25.0]
    assert render_text(data) == text
    assert build_report([plan], "demo") == data
    with pytest.raises(ValueError):
        load_report(js.replace("sdnrestore-report", "other"))
