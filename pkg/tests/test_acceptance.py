"""Acceptance criteria, one test each; the terminal summary prints PASS/FAIL per criterion."""
import math
import time
from dataclasses import replace

import networkx as nx
import pytest

from sdnrestore import formulation as fm
from sdnrestore.formulation import FormulationConfig, StageState
from sdnrestore.milp import solve
from sdnrestore.netmodel import CoupledNetwork, Scenario
from sdnrestore.oracle import oracle_solve
from sdnrestore.planner import compare, run_iclr, run_olr
from sdnrestore.topology import closed_components
from sdnrestore.tooling.caseio import parse_case, read_case, write_case
from sdnrestore.tooling.feeders import (FEEDER33_SEVERE_SEED, gen_feeder33, gen_feeder123,
                                        gen_random)
from sdnrestore.tooling.report import emit_report, load_report, render_text
from sdnrestore.verifier import verify_plan, verify_power, verify_routing

from test_formulation import TABLE, lcc_bounds
from conftest import staged, two_bus

ORACLE_SEEDS = range(300)
FUZZ_SEEDS = range(500)
STAGED_SEEDS = range(200)
LOAD_TOL = 1e-6
MAX_STAGES = 4
STAGED_MAX_STAGES = 8


def weighted(net, loads):
    return sum(net.buses[b].p_load * net.buses[b].load_weight for b, on in loads.items() if on)


def milp_weighted(net, model, sol):
    return fm.load_value(net, model).value(sol.assignment)


@pytest.fixture(scope="module")
def iclr_runs():
    """(label, net, sc, cfg, max_stages, plan) for both random families."""
    runs = []
    for seed in FUZZ_SEEDS:
        case = gen_random(seed)
        runs.append((f"random-{seed}", case.net, case.sc, case.cfg, MAX_STAGES,
                     run_iclr(case.net, case.sc, case.cfg, MAX_STAGES)))
    for seed in STAGED_SEEDS:
        net, sc, cfg = staged(seed)
        runs.append((f"staged-{seed}", net, sc, cfg, STAGED_MAX_STAGES,
                     run_iclr(net, sc, cfg, STAGED_MAX_STAGES)))
    return runs


@pytest.mark.criterion("oracle equivalence")
def test_oracle_equivalence(record_property):
    start = time.perf_counter()
    checked, mismatches = 0, []
    for seed in ORACLE_SEEDS:
        case = gen_random(seed)
        net, sc, cfg = case.net, case.sc, case.cfg
        assert len(net.lines) <= 8 and len(net.terminals) <= 8
        stage = StageState.initial(net, sc)
        for _ in range(2):
            model = fm.build_integrated(net, sc, stage, cfg)
            sol = solve(model)
            ref = oracle_solve(net, sc, stage, cfg)
            checked += 1
            if sol.has_solution != ref.feasible:
                mismatches.append((seed, stage.stage_index, sol.status, ref.feasible))
                break
            if not ref.feasible:
                break
            got = milp_weighted(net, model, sol)
            if abs(got - ref.weighted_pickup) > LOAD_TOL:
                mismatches.append((seed, stage.stage_index, got, ref.weighted_pickup))
            decoded = fm.decode(net, model, sol)
            # second round from the state the first round leads to
            stage = stage.next(decoded.line_state, decoded.load_state)
    elapsed = time.perf_counter() - start
    record_property("detail", f"{checked} stage problems on {len(ORACLE_SEEDS)} instances, "
                              f"{len(mismatches)} mismatches, {elapsed:.1f}s")
    assert not mismatches, mismatches[:5]
    assert len(ORACLE_SEEDS) >= 200 and elapsed < 300


@pytest.mark.criterion("soundness fuzz")
def test_soundness_fuzz(iclr_runs, record_property):
    bad, stages = [], 0
    for seed, net, sc, cfg, _, plan in iclr_runs:
        for st in plan.stages:
            stages += 1
            found = verify_routing(net, sc, st.routing, st.comm_states).violations
            found += verify_power(net, sc, st.line_state, st.load_state, cfg).violations
            if found:
                bad.append((seed, st.stage_index, found[:2]))
        found = verify_plan(net, sc, plan, cfg)
        if found:
            bad.append((seed, "plan", found[:2]))
    multi = sum(len(run[-1].stages) > 1 for run in iclr_runs)
    record_property("detail", f"{len(iclr_runs)} ICLR runs ({multi} multi-stage), "
                              f"{stages} stages, {len(bad)} with violations")
    assert len(iclr_runs) >= 500
    assert not bad, bad[:5]


@pytest.mark.criterion("dominance")
def test_dominance(iclr_runs, record_property):
    bad, compared = [], 0
    for seed, net, sc, cfg, max_stages, plan in iclr_runs:
        olr = run_olr(net, sc, cfg)
        # OLR assumes the pre-disaster network still carries every surviving
        # route; where that overloads a link its plan is not a feasible point
        if not verify_plan(net, sc, olr, cfg):
            compared += 1
            if weighted(net, plan.stages[0].load_state) < \
                    weighted(net, olr.stages[0].load_state) - LOAD_TOL:
                bad.append((seed, "stage 1 below OLR"))
        totals = [st.cumulative_pickup_kw for st in plan.stages]
        if any(b < a - LOAD_TOL for a, b in zip(totals, totals[1:])):
            bad.append((seed, "cumulative pickup decreased"))
        if len(plan.stages) > max_stages:
            bad.append((seed, "too many stages"))
    longest = max(len(run[-1].stages) for run in iclr_runs)
    record_property("detail", f"stage 1 vs OLR on {compared} instances, monotone and bounded "
                              f"on {len(iclr_runs)} (longest {longest} stages), "
                              f"{len(bad)} failures")
    assert compared >= 500
    assert not bad, bad[:5]


@pytest.mark.criterion("LCC truth table")
def test_lcc_truth_table(record_property):
    cfg = FormulationConfig(require_both_ends_observed_to_close=False)
    rows = 0
    for prev, sw_from, sw_to, may_change in TABLE:
        net = two_bus(sw_from=sw_from, sw_to=sw_to)
        for si in (0, 1):
            for sj in (0, 1):
                expect = (0, 1) if may_change(si, sj) else (prev, prev)
                assert lcc_bounds(net, prev, si, sj, cfg) == expect, (prev, sw_from, sw_to, si, sj)
        rows += 1
    record_property("detail", f"{rows} rows x 4 communication states exact")
    assert rows == 6


def forest_problems(net, sc, lines):
    problems = []
    for comp in closed_components(net, lines):
        if not comp.lines:
            continue
        g = nx.MultiGraph()
        g.add_nodes_from(comp.buses)
        g.add_edges_from((net.lines[k].from_bus, net.lines[k].to_bus) for k in comp.lines)
        live = [b for b in comp.buses if net.buses[b].has_source and sc.bus_ok[b]]
        if not nx.is_tree(g) or len(live) != 1:
            problems.append(comp)
    return problems


@pytest.mark.criterion("radiality")
def test_radiality_and_census(record_property):
    solved, bad = 0, []
    cases = [gen_random(seed) for seed in range(300)]
    cases.append(gen_feeder33(FEEDER33_SEVERE_SEED, "severe"))
    for case in cases:
        net, sc, cfg = case.net, case.sc, case.cfg
        stage = StageState.initial(net, sc)
        for _ in range(MAX_STAGES):
            model = fm.build_integrated(net, sc, stage, cfg)
            sol = solve(model)
            if not sol.has_solution:
                break
            solved += 1
            a = sol.assignment
            lines = {k: int(a[fm.b_(k)]) for k in net.lines}
            if forest_problems(net, sc, lines):
                bad.append((case.name, stage.stage_index, "not a single-source forest"))
            fn = sum(a[fm.fn_(i)] for i in net.buses if not net.buses[i].has_source)
            if fn != sum(lines.values()):
                bad.append((case.name, stage.stage_index, f"census {fn} != {sum(lines.values())}"))
            decoded = fm.decode(net, model, sol)
            nxt = stage.next(decoded.line_state, decoded.load_state)
            if nxt.line_state == stage.line_state and nxt.load_state == stage.load_state:
                break
            stage = nxt
    record_property("detail", f"{solved} solved stage models, {len(bad)} failures")
    assert not bad, bad[:5]


@pytest.mark.criterion("delay/bandwidth recomputation")
def test_delay_and_bandwidth_recomputation(record_property):
    worst, solved = 0.0, 0
    cases = [gen_random(seed) for seed in range(300)]
    cases.append(gen_feeder33(FEEDER33_SEVERE_SEED, "severe"))
    for case in cases:
        net, sc = case.net, case.sc
        model = fm.build_integrated(net, sc, None, case.cfg)
        sol = solve(model)
        if not sol.has_solution:
            continue
        solved += 1
        decoded = fm.decode(net, model, sol)
        check = verify_routing(net, sc, decoded.routing, decoded.comm_states)
        assert check.ok, (case.name, check.violations[:3])
        for t in net.terminals:
            worst = max(worst, abs(decoded.delays[t] - check.delays[t]))
        for m in net.nodes:
            worst = max(worst, abs(decoded.node_load[m] - check.node_load[m]))
        for l in net.links:
            worst = max(worst, abs(decoded.link_load[l] - check.link_load[l]))
    defaults = parse_case(
        "[case]\nformat = sdnrestore-case\nversion = 1\n[buses]\n"
        "bus id=A source=1 pg_max=1 qg_max=1\n[nodes]\nnode id=T kind=terminal bw=5 bus=A\n"
        "node id=C kind=center bw=5\n[links]\nlink id=T-C a=T b=C bw=5\n").net.nodes["T"]
    generated = {(n.required_bandwidth, n.delay_cap)
                 for case in (gen_feeder33(0, "none"), gen_feeder123(0, "none"))
                 for n in case.net.nodes.values() if n.kind == "terminal"}
    record_property("detail", f"{solved} solutions, worst |solver - recomputed| {worst:.1e}; "
                              f"defaults {defaults.required_bandwidth:g} Mbps, "
                              f"{defaults.delay_cap:g} ms")
    assert worst <= 1e-9
    assert (defaults.required_bandwidth, defaults.delay_cap) == (2.0, 10.0)
    assert generated == {(2.0, 10.0)}


def pipeline(case, tmp_path):
    """Generate, store and reload, plan with all three algorithms, verify, report."""
    start = time.perf_counter()
    path = tmp_path / f"{case.name}-{case.meta['profile']}.case"
    write_case(case, path)
    loaded = read_case(path)
    plans = compare(loaded.net, loaded.sc, loaded.cfg)
    violations = {p.algorithm: verify_plan(loaded.net, loaded.sc, p, loaded.cfg) for p in plans}
    text, js = emit_report(plans, loaded.name)
    assert render_text(load_report(js)) == text
    return plans, violations, time.perf_counter() - start


@pytest.mark.criterion("qualitative reproduction")
def test_qualitative_reproduction(tmp_path, record_property):
    notes = []
    try:
        check_reproduction(tmp_path, notes)
    finally:
        record_property("detail", "; ".join(notes))


def check_reproduction(tmp_path, notes):
    f33 = gen_feeder33(FEEDER33_SEVERE_SEED, "severe")
    plans, violations, elapsed = pipeline(f33, tmp_path)
    olr, sclr, iclr = plans
    notes.append(f"33-bus seed {FEEDER33_SEVERE_SEED}: OLR {olr.total_pickup_kw:g} < "
                 f"SCLR {sclr.total_pickup_kw:g} < ICLR {iclr.total_pickup_kw:g} kW "
                 f"in {len(iclr.load_stages)} stages")
    assert not any(violations.values()), violations
    assert olr.total_pickup_kw < sclr.total_pickup_kw < iclr.total_pickup_kw
    assert len(iclr.load_stages) >= 2
    for profile in ("none", "light", "severe"):
        plans, violations, elapsed = pipeline(gen_feeder123(0, profile), tmp_path)
        notes.append(f"123-bus {profile} " + "/".join(
            f"{p.total_pickup_kw:g}" for p in plans) + f" kW in {elapsed:.1f}s")
        assert not any(p.error for p in plans), [p.error for p in plans]
        assert not any(violations.values()), violations
        assert elapsed < 60


def scaled(net, factor):
    buses = [replace(b, load_weight=b.load_weight * factor) for b in net.buses.values()]
    return CoupledNetwork.build(buses, net.lines.values(), net.nodes.values(), net.links.values())


@pytest.mark.criterion("scaling invariance")
def test_weight_scaling_keeps_the_argmax(record_property):
    checked, bad = 0, []
    for seed in range(150):
        case = gen_random(seed)
        net, sc, cfg = case.net, case.sc, replace(case.cfg, gap=0.0)
        big = scaled(net, 10.0)
        base_model = fm.build_integrated(net, sc, None, cfg)
        big_model = fm.build_integrated(big, sc, None, cfg)
        base_obj = {v.name: c for v, c in base_model.objective.terms.items()}
        big_obj = {v.name: c for v, c in big_model.objective.terms.items()}
        assert base_obj.keys() == big_obj.keys()
        assert all(math.isclose(big_obj[k], 10 * c, rel_tol=1e-12) for k, c in base_obj.items())
        base, top = solve(base_model, gap=0.0), solve(big_model, gap=0.0)
        assert base.status == top.status
        if not base.has_solution:
            continue
        checked += 1
        # each optimum is optimal for the other objective as well
        assert not big_model.violations(base.assignment)
        assert not base_model.violations(top.assignment)
        cross_top = big_model.objective.value(base.assignment)
        cross_base = base_model.objective.value(top.assignment)
        if not math.isclose(cross_top, top.objective_value, rel_tol=1e-9, abs_tol=1e-6) or \
                not math.isclose(cross_base, base.objective_value, rel_tol=1e-9, abs_tol=1e-6):
            bad.append(seed)
        ref, ref_big = oracle_solve(net, sc, None, cfg), oracle_solve(big, sc, None, cfg)
        if ref.load_state != ref_big.load_state or ref.line_state != ref_big.line_state:
            bad.append((seed, "oracle argmax moved"))
    record_property("detail", f"{checked} instances, phi x10, {len(bad)} argmax changes")
    assert not bad, bad[:5]
