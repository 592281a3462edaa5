"""Lower bounds and the exhaustive reference solver.

Without time lags, compatibility and collisions the problem decomposes by
robot, so the sum of per-robot optima bounds the cell optimum from below.
For a fixed circuit, location path, trajectories and modes the per-robot LP
has a single row (durations sum to the cycle time) and is solved exactly by
filling the cycle time with the cheapest duration increments first.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .constants import DEFAULT_SEGMENTS, FEAS_TOL
from .graph import build_search_graph, enumerate_alternatives
from .lp import OPTIMAL, warm_solve
from .model import Instance, Robot, energy_eval
from .reduced import active_collisions, build_reduced_lp, compute_gamma, crash_basis, make_solution
from .solution import Solution
from .tuples import CellTuple, RobotPlan

EXACT = "exact-enumeration"
RELAXED = "mode-relaxation"


class OracleBudgetExceeded(RuntimeError):
    """The instance is too large for exhaustive enumeration."""


def single_row_min(items, ct: float, const: float = 0.0) -> float:
    """``min const + sum c_i x_i`` with ``sum x_i = ct`` and ``x_i`` in ``[lo_i, hi_i]``.

    ``items`` are ``(lo, hi, c)``; returns ``inf`` when infeasible.
    """
    total_lo = sum(lo for lo, _, _ in items)
    total_hi = sum(hi for _, hi, _ in items)
    if total_lo > ct + 1e-9 or total_hi < ct - 1e-9:
        return math.inf
    value = const + sum(lo * c for lo, _, c in items)
    rest = ct - total_lo
    for lo, hi, c in sorted(items, key=lambda it: it[2]):
        if rest <= 0:
            break
        take = min(hi - lo, rest)
        value += take * c
        rest -= take
    return value


def _move_items(traj, segments: int):
    """Duration items and constant of a move's linearised energy."""
    const = energy_eval(traj.energy, traj.d_min)
    if traj.d_max <= traj.d_min:
        return [(traj.d_min, traj.d_min, 0.0)], const
    pwl = traj.pwl(segments)
    bp = pwl.breakpoints
    items = [(0.0, bp[k + 1] - bp[k], pwl.k[k]) for k in range(pwl.segments)]
    # the move's minimal duration itself
    items.append((traj.d_min, traj.d_min, 0.0))
    return items, const


def plan_lp_value(robot: Robot, plan: RobotPlan, ct: float, segments: int = DEFAULT_SEGMENTS) -> float:
    """Per-robot reduced LP optimum of a fixed plan (``inf`` when infeasible)."""
    items = []
    const = 0.0
    for i, v in enumerate(plan.circuit):
        act = robot.statics[v]
        lo = robot.min_static_duration(v, plan.modes[i])
        if lo > act.d_max:
            return math.inf
        items.append((lo, act.d_max, act.location_map[plan.locations[i]].power[plan.modes[i]]))
        t = robot.dynamics[plan.edges[i]].trajectory_map[plan.trajectories[i]]
        mi, c = _move_items(t, segments)
        items.extend(mi)
        const += c
    return single_row_min(items, ct, const)


def robot_alternatives(robot: Robot, ct: float):
    alts, exhausted = enumerate_alternatives(build_search_graph(robot), ct)
    return alts, exhausted


def _paths(robot: Robot, circuit, edges) -> Iterator[tuple[tuple, tuple]]:
    """Every (locations, trajectories) closed path through an operation order."""
    loc_sets = [[loc.id for loc in robot.statics[v].locations] for v in circuit]
    h = len(circuit)
    for locs in itertools.product(*loc_sets):
        choices = []
        for i in range(h):
            ts = robot.dynamics[edges[i]].connecting(locs[i - 1], locs[i])
            if not ts:
                break
            choices.append([t.id for t in ts])
        else:
            for trajs in itertools.product(*choices):
                yield locs, trajs


def _usable_modes(robot: Robot, v: str) -> list[str]:
    return [m.id for m in robot.power_modes if m.min_switch_time <= robot.statics[v].d_max]


def count_combinations(robot: Robot, alts) -> int:
    total = 0
    for a in alts:
        modes = math.prod(len(_usable_modes(robot, v)) for v in a.circuit)
        paths = sum(1 for _ in _paths(robot, a.circuit, a.edges))
        total += paths * modes
    return total


def robot_plans(robot: Robot, alts, ct: float, segments: int) -> list[tuple[float, RobotPlan]]:
    """All feasible plans of a robot with their per-robot LP values, best first."""
    out = []
    for a in alts:
        mode_sets = [_usable_modes(robot, v) for v in a.circuit]
        for locs, trajs in _paths(robot, a.circuit, a.edges):
            for modes in itertools.product(*mode_sets):
                plan = RobotPlan(robot.id, a.circuit, a.edges, tuple(locs), tuple(trajs), tuple(modes))
                val = plan_lp_value(robot, plan, ct, segments)
                if val < math.inf:
                    out.append((val, plan))
    out.sort(key=lambda vp: (vp[0], vp[1].circuit, vp[1].locations, vp[1].trajectories, vp[1].modes))
    return out


def _relaxed_value(robot: Robot, circuit, edges, locs, trajs, ct: float, segments: int) -> float:
    items = []
    const = 0.0
    for i, v in enumerate(circuit):
        act = robot.statics[v]
        p = min(act.location_map[locs[i]].power.values())
        items.append((act.d_min, act.d_max, p))
        t = robot.dynamics[edges[i]].trajectory_map[trajs[i]]
        mi, c = _move_items(t, segments)
        items.extend(mi)
        const += c
    return single_row_min(items, ct, const)


def _lagrangian_circuit(robot: Robot, circuit, edges, ct: float, segments: int) -> float:
    """Max over the multiplier of the dual of the relaxed per-robot problem.

    For multiplier ``lam`` on the cycle-time row every activity contributes
    ``min over its window of cost(d) - lam*d`` independently, and the best
    location path is found by dynamic programming over the closed path.
    Every ``lam`` gives a valid lower bound.
    """
    h = len(circuit)
    loc_sets = [[loc.id for loc in robot.statics[v].locations] for v in circuit]
    slopes = [0.0]
    for i, v in enumerate(circuit):
        act = robot.statics[v]
        for loc in act.locations:
            slopes.append(min(loc.power.values()))
        for t in robot.dynamics[edges[i]].trajectories:
            if t.d_max > t.d_min:
                slopes.extend(t.pwl(segments).k)

    def dual(lam: float) -> float:
        def static_cost(i, l):
            act = robot.statics[circuit[i]]
            p = min(act.location_map[l].power.values())
            return min((p - lam) * act.d_min, (p - lam) * act.d_max)

        def move_cost(i, t):
            if t.d_max <= t.d_min:
                return energy_eval(t.energy, t.d_min) - lam * t.d_min
            pwl = t.pwl(segments)
            bp = pwl.breakpoints
            return float(np.min(pwl(bp) - lam * bp))

        best = math.inf
        for l0 in loc_sets[0]:
            layer = {l0: static_cost(0, l0)}
            for i in range(1, h):
                nxt = {}
                for lp, val in layer.items():
                    for ln in loc_sets[i]:
                        ts = robot.dynamics[edges[i]].connecting(lp, ln)
                        if not ts:
                            continue
                        c = val + min(move_cost(i, t) for t in ts) + static_cost(i, ln)
                        if c < nxt.get(ln, math.inf):
                            nxt[ln] = c
                layer = nxt
            for ll, val in layer.items():
                ts = robot.dynamics[edges[0]].connecting(ll, l0)
                if ts:
                    best = min(best, val + min(move_cost(0, t) for t in ts))
        return best + lam * ct

    lo, hi = min(slopes) - 1.0, max(slopes) + 1.0
    best = max(dual(lo), dual(hi))
    gr = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - gr * (b - a), a + gr * (b - a)
    fc, fd = dual(c), dual(d)
    for _ in range(100):
        if b - a < 1e-9 * max(1.0, abs(a)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = dual(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = dual(d)
        best = max(best, fc, fd)
    return best


def robot_lower_bound(robot: Robot, ct: float, segments: int = DEFAULT_SEGMENTS, budget: int = 10 ** 5,
                      relax_budget: int = 10 ** 6) -> tuple[float, str]:
    """Per-robot minimum energy ignoring inter-robot constraints.

    Exact when the number of (circuit, path, modes) combinations is within
    ``budget``; otherwise every static uses its cheapest mode without the
    switch-time restriction.
    """
    alts, _ = robot_alternatives(robot, ct)
    if not alts:
        return math.inf, EXACT
    if count_combinations(robot, alts) <= budget:
        plans = robot_plans(robot, alts, ct, segments)
        return (plans[0][0] if plans else math.inf), EXACT
    best = math.inf
    for a in alts:
        n_paths = sum(1 for _ in _paths(robot, a.circuit, a.edges))
        if n_paths <= relax_budget:
            for locs, trajs in _paths(robot, a.circuit, a.edges):
                best = min(best, _relaxed_value(robot, a.circuit, a.edges, locs, trajs, ct, segments))
        else:
            best = min(best, _lagrangian_circuit(robot, a.circuit, a.edges, ct, segments))
    return best, RELAXED


@dataclass
class BoundReport:
    per_robot: dict[str, float]
    methods: dict[str, str]
    wall_time: float

    @property
    def total(self) -> float:
        return float(sum(self.per_robot.values()))


def instance_lower_bound(instance: Instance, segments: int = DEFAULT_SEGMENTS, budget: int = 10 ** 5) -> BoundReport:
    t0 = time.perf_counter()
    values, methods = {}, {}
    for robot in instance.robots:
        values[robot.id], methods[robot.id] = robot_lower_bound(robot, instance.cycle_time, segments, budget)
    return BoundReport(values, methods, time.perf_counter() - t0)


class _DepthExceeded(Exception):
    pass


def solve_tuple_exact(instance: Instance, tup: CellTuple, segments: int = DEFAULT_SEGMENTS,
                      cutoff: float = math.inf, max_depth: int = 20, stats: Optional[dict] = None):
    """Optimal timing of a tuple with exact branching over collision orderings.

    Returns ``(objective, solution)`` or ``(inf, None)`` when no collision-free
    timing beats ``cutoff``.  Raises OracleBudgetExceeded beyond ``max_depth``.
    """
    pairs = active_collisions(instance, tup)
    best = [cutoff, None]

    def node(d_ge, d_le, basis):
        model = build_reduced_lp(instance, tup, segments, d_ge, d_le)
        if model.lp is None:
            return
        if basis is None:
            basis = crash_basis(model.lp)
        res = warm_solve(model.lp, basis)
        if stats is not None:
            stats["lp_calls"] = stats.get("lp_calls", 0) + 1
        if res.status != OPTIMAL or res.objective >= best[0]:
            return
        s, d = model.timing(res.x)
        for a in s:
            if -1e-9 < s[a] < 0:
                s[a] = 0.0
        g = compute_gamma(instance, pairs, s, d)
        if g.triple is None or g.gamma <= FEAS_TOL:
            best[0] = res.objective
            best[1] = make_solution(instance, tup, s, d, segments)
            return
        if len(d_ge) + len(d_le) >= max_depth:
            raise _DepthExceeded
        node(d_ge + [g.triple], d_le, res.basis)
        node(d_ge, d_le + [g.triple], res.basis)

    try:
        node([], [], None)
    except _DepthExceeded:
        raise OracleBudgetExceeded(f"collision branching deeper than {max_depth}") from None
    if best[1] is None:
        return math.inf, None
    return best[0], best[1]


@dataclass
class OracleResult:
    solution: Optional[Solution]
    objective: float
    infeasible_reason: str = ""
    stats: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.solution is not None


def exhaustive_oracle(instance: Instance, segments: int = DEFAULT_SEGMENTS, budget: int = 10 ** 6,
                      max_depth: int = 20) -> OracleResult:
    """Global optimum over every tuple and mode map (small instances only).

    Robots' plans are enumerated with their per-robot LP values, which
    bound the joint LP from below; a depth-first search over robots prunes
    with these bounds and checks compatibility, and each complete tuple is
    solved with exact collision branching.
    """
    t0 = time.perf_counter()
    ct = instance.cycle_time
    stats = {"lp_calls": 0, "tuples": 0}
    per_robot = []
    size = 1
    for robot in instance.robots:
        alts, exhausted = robot_alternatives(robot, ct)
        if not alts:
            return OracleResult(None, math.inf, f"robot {robot.id} has no circuit within the cycle time", stats)
        size *= count_combinations(robot, alts)
        if size > budget:
            raise OracleBudgetExceeded(f"more than {budget} combinations")
        plans = robot_plans(robot, alts, ct, segments)
        if not plans:
            return OracleResult(None, math.inf, f"robot {robot.id} has no plan meeting the cycle time", stats)
        per_robot.append(plans)

    rest_min = [0.0] * (len(per_robot) + 1)
    for k in range(len(per_robot) - 1, -1, -1):
        rest_min[k] = rest_min[k + 1] + per_robot[k][0][0]

    owner = instance.owner
    robot_index = {r.id: k for k, r in enumerate(instance.robots)}
    checks = [[] for _ in per_robot]      # compat pairs decided once robot k is assigned
    for q in instance.compat_pairs:
        k = max(robot_index[owner[q.activity_1].id], robot_index[owner[q.activity_2].id])
        checks[k].append(q)

    best = [math.inf, None]
    chosen: list[RobotPlan] = []
    loc_of: dict[str, str] = {}

    def dfs(k: int, partial: float):
        if k == len(per_robot):
            stats["tuples"] += 1
            val, sol = solve_tuple_exact(instance, CellTuple(tuple(chosen)), segments, best[0], max_depth, stats)
            if sol is not None and val < best[0]:
                best[0], best[1] = val, sol
            return
        for val, plan in per_robot[k]:
            if partial + val + rest_min[k + 1] >= best[0]:
                break
            added = list(zip(plan.circuit, plan.locations))
            loc_of.update(added)
            if all(q.allows(loc_of[q.activity_1], loc_of[q.activity_2]) for q in checks[k]):
                chosen.append(plan)
                dfs(k + 1, partial + val)
                chosen.pop()
            for v, _ in added:
                del loc_of[v]

    dfs(0, 0.0)
    stats["wall_time"] = time.perf_counter() - t0
    if best[1] is None:
        return OracleResult(None, math.inf, "no tuple admits a feasible timing", stats)
    sol = best[1]
    sol.metadata.update({"solver": "exhaustive_oracle"})
    return OracleResult(sol, sol.total_energy, "", stats)
