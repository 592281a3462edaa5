from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cellopt.generator import generate_instance, preset
from cellopt.graph import build_search_graph, enumerate_alternatives
from cellopt.heuristic import (HeuristicConfig, TabuList, Worker, WorkerState, default_phi_max, golden_section,
                               infeasibility_proof, optimize, subheur_change_locations, subheur_change_path,
                               subheur_power_mode, substitution_interval, substitution_optimum,
                               violation_seconds, worker_iterate)
from cellopt.io import instance_from_dict, serialize_solution
from cellopt.model import EnergyFunction, Trajectory
from cellopt.reduced import LP_INFEASIBLE, TupleEvaluation, evaluate_tuple
from cellopt.solution import check_solution
from cellopt.tuples import CellTuple, RobotPlan, plan_is_consistent


def idle_robot_cell() -> dict:
    """One robot resting 10 s at home each 12 s cycle; all other timing fixed."""
    flat = [0.0, 5.0, 0.0, 0.0, 0.0]
    modes = [{"id": "hold", "min_switch_time": 0.0}, {"id": "brake", "min_switch_time": 2.0}]

    def traj(tid, a, b):
        return {"id": tid, "from_loc": a, "to_loc": b, "d_min": 0.5, "d_max": 0.5, "energy_coeffs": flat}

    return {
        "format": "cellopt/1", "name": "idle", "cycle_time": 12.0,
        "robots": [{
            "id": "r", "home": "h", "modes": modes,
            "static_activities": [
                {"id": "w", "d_min": 1.0, "d_max": 1.0,
                 "locations": [{"id": "lw", "power": {"hold": 100.0, "brake": 20.0}}]},
                {"id": "h", "d_min": 10.0, "d_max": 10.0,
                 "locations": [{"id": "lh", "power": {"hold": 300.0, "brake": 50.0}}]},
            ],
            "dynamic_activities": [
                {"id": "go", "from": "h", "to": "w", "trajectories": [traj("go1", "lh", "lw")]},
                {"id": "back", "from": "w", "to": "h", "trajectories": [traj("back1", "lw", "lh")]},
            ],
        }],
    }


@pytest.fixture(scope="module")
def idle_cell():
    return instance_from_dict(idle_robot_cell())


def _hold_tuple():
    return CellTuple((RobotPlan("r", ("w", "h"), ("go", "back"), ("lw", "lh"), ("go1", "back1"),
                                ("hold", "hold")),))


def test_power_mode_switch_on_idle_robot(idle_cell):
    tup = _hold_tuple()
    ev = evaluate_tuple(idle_cell, tup)
    assert ev.feasible
    tabu = TabuList(3)
    applied = []
    new = subheur_power_mode(idle_cell, tup, ev.solution, tabu, applied)
    # the 1 s activity cannot host the 2 s brake switch, so only home qualifies
    assert applied == [("h", "brake")]
    after = evaluate_tuple(idle_cell, new)
    assert ev.solution.total_energy - after.solution.total_energy == pytest.approx((300.0 - 50.0) * 10.0)
    # reverting is tabu and nothing else is applicable
    assert tabu.blocked("h", "hold")
    assert subheur_power_mode(idle_cell, new, after.solution, tabu) is None


def test_tabu_expires():
    tabu = TabuList(2)
    tabu.add("v", "m")
    assert tabu.blocked("v", "m")
    tabu.tick()
    assert tabu.blocked("v", "m")
    tabu.tick()
    assert not tabu.blocked("v", "m")
    assert not TabuList(0).blocked("v", "m")


def test_local_optimum_leaves_after_phi_iterations(idle_cell):
    cfg = HeuristicConfig(phi_max=5, deterministic=True)
    worker = Worker(idle_cell, cfg, 0, lambda *a: None, lambda: False)
    tup = _hold_tuple()
    state = worker.process_tuple(tup)
    assert state.tuple.plans[0].modes == ("hold", "brake")
    assert state.iterations <= 3 * cfg.phi_max + 1
    # from the optimum every step is idle
    fresh = WorkerState(state.tuple, state.evaluation)
    while fresh.idle < cfg.phi_max:
        worker_iterate(worker, fresh)
    assert fresh.iterations == cfg.phi_max


def test_rollback_on_infeasible_candidate(idle_cell, monkeypatch):
    cfg = HeuristicConfig(deterministic=True)
    worker = Worker(idle_cell, cfg, 0, lambda *a: None, lambda: False)
    tup = _hold_tuple()
    state = WorkerState(tup, worker.evaluate(tup))
    other = CellTuple((RobotPlan("r", ("w", "h"), ("go", "back"), ("lw", "lh"), ("go1", "back1"),
                                 ("brake", "hold")),))
    monkeypatch.setattr(worker, "modify", lambda name, st: other)
    monkeypatch.setattr(worker, "evaluate", lambda t: TupleEvaluation(LP_INFEASIBLE))
    worker_iterate(worker, state)
    assert state.last_action == "rollback"
    assert state.tuple == tup and state.sub == 1 and state.idle == 1


def test_improvement_resets_idle_counter(idle_cell):
    cfg = HeuristicConfig(deterministic=True)
    worker = Worker(idle_cell, cfg, 0, lambda *a: None, lambda: False)
    tup = _hold_tuple()
    state = WorkerState(tup, worker.evaluate(tup), idle=4)
    worker_iterate(worker, state)
    assert state.last_action == "accept" and state.idle == 0
    assert state.sub == 0


def test_golden_section_symmetric_inverse_pair():
    # 1/d + 1/(2 - d) is minimal at d = 1
    x, fx = golden_section(lambda d: 1.0 / d + 1.0 / (2.0 - d), 0.2, 1.8)
    assert x == pytest.approx(1.0, abs=1e-5)
    assert fx == pytest.approx(2.0, abs=1e-9)


@given(st.floats(-5, 5), st.floats(0.01, 10), st.floats(-3, 3), st.floats(0.1, 4))
def test_golden_section_on_parabolas(a, w, c, scale):
    lo, hi = a, a + w
    x, _ = golden_section(lambda d: scale * (d - c) ** 2, lo, hi)
    assert x == pytest.approx(min(max(c, lo), hi), abs=1e-5)


def test_golden_section_degenerate_and_bad_interval():
    assert golden_section(lambda d: d * d, 1.0, 1.0) == (1.0, 1.0)
    with pytest.raises(ValueError):
        golden_section(lambda d: d, 2.0, 1.0)


def _random_traj(rng, tid):
    c = (rng.uniform(5, 40), rng.uniform(0, 60), rng.uniform(40, 400), rng.uniform(0, 60), rng.uniform(0, 10))
    lo = rng.uniform(0.5, 2.0)
    return Trajectory(tid, "a", "b", lo, lo * rng.uniform(1.5, 4.0), EnergyFunction(c))


@pytest.mark.parametrize("seed", range(50))
def test_substitution_optimum_matches_grid(seed):
    rng = random.Random(seed)
    t_in, t_out = _random_traj(rng, "in"), _random_traj(rng, "out")
    k = rng.uniform(t_in.d_min + t_out.d_min, t_in.d_max + t_out.d_max)
    lo, hi = substitution_interval(t_in, t_out, k)
    d, val = substitution_optimum(t_in, t_out, k)
    grid = np.linspace(lo, hi, 100_001)
    total = lambda x: t_in.pwl(10)(x) + t_out.pwl(10)(k - x)  # noqa: E731
    ref = np.min(total(grid))
    assert abs(val - ref) <= 1e-3 * ref
    # a convex piecewise-linear sum attains its minimum at a kink or an end
    kinks = np.concatenate([[lo, hi], t_in.pwl(10).breakpoints, k - t_out.pwl(10).breakpoints])
    kinks = kinks[(kinks >= lo) & (kinks <= hi)]
    exact = np.min(total(kinks))
    assert exact - 1e-9 <= val <= exact * (1 + 1e-6)
    assert lo - 1e-12 <= d <= hi + 1e-12


def test_substitution_interval_empty():
    rng = random.Random(1)
    t_in, t_out = _random_traj(rng, "in"), _random_traj(rng, "out")
    assert substitution_interval(t_in, t_out, t_in.d_min + t_out.d_min - 0.1) is None
    assert substitution_optimum(t_in, t_out, t_in.d_max + t_out.d_max + 1.0) is None


def _instance_tuples(kind, seeds):
    from cellopt.tuples import generate_tuple
    for seed in seeds:
        inst = generate_instance(preset(kind, seed))
        alts = {r.id: enumerate_alternatives(build_search_graph(r), inst.cycle_time)[0] for r in inst.robots}
        tup = generate_tuple(inst, alts, random.Random(seed))
        if tup is not None:
            yield inst, tup


def test_change_path_keeps_tuples_valid():
    rng = random.Random(0)
    changed = 0
    for inst, tup in _instance_tuples("small", range(10)):
        for _ in range(100):
            new = subheur_change_path(inst, tup, rng)
            if new is None:
                continue
            changed += 1
            for plan in new.plans:
                robot = inst.robot_map[plan.robot_id]
                assert plan_is_consistent(robot, plan)
            from cellopt.tuples import compat_violations
            assert compat_violations(inst, new) == 0
    assert changed > 100


def test_change_path_is_reproducible_and_noop_without_choices(idle_cell, small):
    seq = []
    for _ in range(2):
        rng = random.Random(42)
        seq.append([subheur_change_path(inst, tup, rng) for inst, tup in _instance_tuples("small", range(4))])
    assert seq[0] == seq[1]
    assert subheur_change_path(idle_cell, _hold_tuple(), random.Random(0)) is None


def test_change_locations_never_worsens_its_estimate():
    seen = 0
    for inst, tup in _instance_tuples("small", range(15)):
        ev = evaluate_tuple(inst, tup)
        if not ev.feasible:
            continue
        new = subheur_change_locations(inst, tup, ev.solution)
        if new is None:
            continue
        seen += 1
        for plan in new.plans:
            assert plan_is_consistent(inst.robot_map[plan.robot_id], plan)
    assert seen > 0


def test_violation_seconds_zero_for_feasible_schedule(example_cell):
    from cellopt.bounds import exhaustive_oracle
    from cellopt.tuples import generate_tuple
    sol = exhaustive_oracle(example_cell).solution
    alts = {r.id: enumerate_alternatives(build_search_graph(r), example_cell.cycle_time)[0]
            for r in example_cell.robots}
    tup = generate_tuple(example_cell, alts, random.Random(0))
    assert violation_seconds(example_cell, tup, sol.start, sol.duration) == pytest.approx(0.0, abs=1e-9)
    shifted = {a: s + (6.0 if a == "v5" else 0.0) for a, s in sol.start.items()}
    assert violation_seconds(example_cell, tup, shifted, sol.duration) >= 0.0


def test_deterministic_runs_are_identical(tiny):
    cfg = HeuristicConfig(deterministic=True, seed=3, eval_budget=3000)
    a = optimize(tiny, cfg)
    b = optimize(tiny, cfg)
    assert a.best is not None
    assert serialize_solution(a.best) == serialize_solution(b.best)
    assert a.lp_evaluations == b.lp_evaluations
    assert a.summary(timing=False) == b.summary(timing=False)


def test_reported_solutions_are_checker_feasible(small):
    rep = optimize(small, HeuristicConfig(deterministic=True, seed=1, eval_budget=2000))
    assert rep.best is not None and check_solution(small, rep.best).feasible
    energies = [e.energy for e in rep.progress]
    assert energies == sorted(energies, reverse=True)
    assert energies[-1] == rep.best.total_energy
    assert rep.checker_rejections == 0


def test_infeasible_instance_is_proven(load_fixture):
    inst = load_fixture("infeasible")
    rep = optimize(inst, HeuristicConfig(deterministic=True))
    assert infeasibility_proof(rep) and rep.best is None
    assert rep.evidence and "exhaustive enumeration" in rep.evidence[0]


def test_parallel_run_smoke(tiny):
    rep = optimize(tiny, HeuristicConfig(time_limit=3.0, worker_count=2, seed=5))
    assert rep.best is not None and check_solution(tiny, rep.best).feasible
    assert len(rep.lp_evaluations) == 2 and rep.total_evaluations > 0


def test_config_validation():
    with pytest.raises(ValueError):
        HeuristicConfig(deterministic=True, worker_count=2)
    with pytest.raises(ValueError):
        HeuristicConfig(time_limit=0)
    with pytest.raises(ValueError):
        HeuristicConfig(phi_max=0)
    assert [default_phi_max(n) for n in (2, 5, 8, 12)] == [100, 100, 600, 1000]
