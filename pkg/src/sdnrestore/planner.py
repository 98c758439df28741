"""Restoration algorithms: load-only (OLR), separated cyber-then-load (SCLR)
and the cyclic integrated scheme (ICLR)."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import formulation as fm
from .formulation import FormulationConfig, Routing, StageState
from .heuristic import stage_hint
from .milp import Solution, solve
from .netmodel import CoupledNetwork, Scenario
from .verifier import prefault_routes, reachable

log = logging.getLogger(__name__)

OLR, SCLR, ICLR = "OLR", "SCLR", "ICLR"
ALGORITHMS = (OLR, SCLR, ICLR)
DEFAULT_MAX_STAGES = 10
PICKUP_TOL = 1e-6


class PlanningError(RuntimeError):
    pass


@dataclass
class SolveStats:
    objective: float
    gap: float
    wall_time: float
    status: str = Solution.OPTIMAL


@dataclass
class RestorationStage:
    stage_index: int
    kind: str  # "load" or "comm"
    routing: dict[str, Routing]
    comm_states: dict[str, int]
    line_ops: list[tuple[str, str]]
    load_ops: list[tuple[str, str]]
    energized_buses: set[str]
    stage_pickup_kw: float
    cumulative_pickup_kw: float
    solve_stats: SolveStats
    line_state: dict[str, int] = field(default_factory=dict)
    load_state: dict[str, int] = field(default_factory=dict)
    prev_line_state: dict[str, int] = field(default_factory=dict)
    prev_load_state: dict[str, int] = field(default_factory=dict)
    delays: dict[str, float] = field(default_factory=dict)

    @property
    def communicating(self) -> int:
        return sum(self.comm_states.values())


@dataclass
class RestorationPlan:
    algorithm: str
    stages: list[RestorationStage]
    error: str = ""

    @property
    def load_stages(self) -> list[RestorationStage]:
        return [s for s in self.stages if s.kind == "load"]

    @property
    def total_pickup_kw(self) -> float:
        stages = self.load_stages
        return stages[-1].cumulative_pickup_kw if stages else 0.0

    @property
    def total_wall_time(self) -> float:
        return sum(s.solve_stats.wall_time for s in self.stages)

    @property
    def energized_count(self) -> int:
        stages = self.load_stages
        return len(stages[-1].energized_buses) if stages else 0


def _pickup_kw(net, loads) -> float:
    return float(sum(net.buses[b].p_load for b, on in loads.items() if on))


def _ops(before, after, on_word, off_word):
    out = []
    for k in sorted(after):
        if int(before.get(k, 0)) != int(after[k]):
            out.append((k, on_word if after[k] else off_word))
    return out


def _hint(net, sc, stage, cfg, comm_states=None):
    return stage_hint(net, sc, stage, cfg, comm_states) if cfg.warm_start else None


def _solve(model, cfg, hint=None) -> Solution:
    sol = solve(model, gap=cfg.gap, time_limit=cfg.time_limit, hint=hint)
    if not sol.has_solution:
        raise PlanningError(f"{model.name}: {sol.status}")
    return sol


def _load_stage(net, stage, decoded, sol, kind, index, comm_states, routing, previous_kw,
                started, delays=None) -> RestorationStage:
    # wall time covers model building and the greedy start, not just the solver
    wall = time.perf_counter() - started
    total = _pickup_kw(net, decoded.load_state)
    return RestorationStage(
        stage_index=index,
        kind=kind,
        routing=routing,
        comm_states=dict(comm_states),
        line_ops=_ops(stage.line_state, decoded.line_state, "close", "open"),
        load_ops=_ops(stage.load_state, decoded.load_state, "pickup", "drop"),
        energized_buses=set(decoded.energized),
        stage_pickup_kw=total - previous_kw,
        cumulative_pickup_kw=total,
        solve_stats=SolveStats(sol.objective_value, sol.gap or 0.0, wall, sol.status),
        line_state=dict(decoded.line_state),
        load_state=dict(decoded.load_state),
        prev_line_state=dict(stage.line_state),
        prev_load_state=dict(stage.load_state),
        delays=dict(delays or {}),
    )


def olr_comm_states(net: CoupledNetwork, sc: Scenario) -> tuple[dict[str, int], dict]:
    """Terminals whose pre-disaster route survived, and those routes."""
    routes = prefault_routes(net)
    states = reachable(net, sc, routes)
    routing = {t: routes[t].as_routing() for t, on in states.items() if on}
    return states, routing


def run_olr(net: CoupledNetwork, sc: Scenario, cfg: FormulationConfig | None = None
            ) -> RestorationPlan:
    """Load recovery with the communication network left as the disaster left it."""
    cfg = cfg or FormulationConfig()
    started = time.perf_counter()
    stage = StageState.initial(net, sc)
    states, routing = olr_comm_states(net, sc)
    model = fm.build_load_recovery(net, sc, stage, cfg, states)
    sol = _solve(model, cfg, _hint(net, sc, stage, cfg, states))
    decoded = fm.decode(net, model, sol)
    return RestorationPlan(OLR, [
        _load_stage(net, stage, decoded, sol, "load", 1, states, routing,
                    _pickup_kw(net, stage.load_state), started),
    ])


def run_sclr(net: CoupledNetwork, sc: Scenario, cfg: FormulationConfig | None = None
             ) -> RestorationPlan:
    """Maximise communicating terminals first, then recover load with them frozen."""
    cfg = cfg or FormulationConfig()
    started = time.perf_counter()
    stage = StageState.initial(net, sc)
    comm_model = fm.build_comm_recovery(net, sc, cfg)
    comm_sol = _solve(comm_model, cfg)
    comm = fm.decode(net, comm_model, comm_sol)
    start_kw = _pickup_kw(net, stage.load_state)
    comm_stage = RestorationStage(
        stage_index=1, kind="comm", routing=comm.routing, comm_states=comm.comm_states,
        line_ops=[], load_ops=[], energized_buses=set(), stage_pickup_kw=0.0,
        cumulative_pickup_kw=start_kw,
        solve_stats=SolveStats(comm_sol.objective_value, comm_sol.gap or 0.0,
                               time.perf_counter() - started, comm_sol.status),
        line_state=dict(stage.line_state), load_state=dict(stage.load_state),
        prev_line_state=dict(stage.line_state), prev_load_state=dict(stage.load_state),
        delays=comm.delays,
    )
    started = time.perf_counter()
    model = fm.build_load_recovery(net, sc, stage, cfg, comm.comm_states)
    sol = _solve(model, cfg, _hint(net, sc, stage, cfg, comm.comm_states))
    decoded = fm.decode(net, model, sol)
    load_stage = _load_stage(net, stage, decoded, sol, "load", 2, comm.comm_states,
                             comm.routing, start_kw, started, comm.delays)
    return RestorationPlan(SCLR, [comm_stage, load_stage])


def run_iclr(net: CoupledNetwork, sc: Scenario, cfg: FormulationConfig | None = None,
             max_stages: int = DEFAULT_MAX_STAGES) -> RestorationPlan:
    """Cyclic integrated restoration.

    Each round solves the integrated model from the current state, applies
    its switch operations, latches the picked-up loads and repeats while
    the restored load keeps growing.
    """
    if max_stages < 1:
        raise ValueError("max_stages must be >= 1")
    cfg = cfg or FormulationConfig()
    stage = StageState.initial(net, sc)
    cumulative = _pickup_kw(net, stage.load_state)
    stages: list[RestorationStage] = []
    while len(stages) < max_stages:
        started = time.perf_counter()
        model = fm.build_integrated(net, sc, stage, cfg)
        sol = solve(model, gap=cfg.gap, time_limit=cfg.time_limit,
                    hint=_hint(net, sc, stage, cfg))
        if not sol.has_solution:
            if not stages:
                raise PlanningError(f"{model.name}: {sol.status}")
            break
        decoded = fm.decode(net, model, sol)
        record = _load_stage(net, stage, decoded, sol, "load", stage.stage_index,
                             decoded.comm_states, decoded.routing, cumulative, started,
                             decoded.delays)
        if stages and record.stage_pickup_kw <= PICKUP_TOL:
            break
        stages.append(record)
        log.info("ICLR stage %d: +%.1f kW (total %.1f kW, %d terminals)", stage.stage_index,
                 record.stage_pickup_kw, record.cumulative_pickup_kw, record.communicating)
        cumulative = record.cumulative_pickup_kw
        if record.stage_pickup_kw <= PICKUP_TOL:
            break
        stage = stage.next(decoded.line_state, decoded.load_state)
    return RestorationPlan(ICLR, stages)


RUNNERS = {OLR: run_olr, SCLR: run_sclr, ICLR: run_iclr}


def run(algorithm: str, net, sc, cfg=None, max_stages: int = DEFAULT_MAX_STAGES):
    algorithm = algorithm.upper()
    if algorithm == ICLR:
        return run_iclr(net, sc, cfg, max_stages)
    if algorithm not in RUNNERS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return RUNNERS[algorithm](net, sc, cfg)


def compare(net: CoupledNetwork, sc: Scenario, cfg: FormulationConfig | None = None,
            max_stages: int = DEFAULT_MAX_STAGES, workers: int = 1) -> list[RestorationPlan]:
    """Run all three algorithms on the same inputs; failures become empty plans."""

    def one(name):
        start = time.perf_counter()
        try:
            return run(name, net, sc, cfg, max_stages)
        except Exception as exc:  # recorded, not raised
            log.warning("%s failed after %.2fs: %s", name, time.perf_counter() - start, exc)
            return RestorationPlan(name, [], error=str(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, ALGORITHMS))
    return [one(name) for name in ALGORITHMS]
