"""Reduced LP of a tuple and the iterative collision resolution.

With all selections fixed by a tuple, only start times and durations remain.
The LP minimises linearised movement energy plus static energy subject to
the circuit timing chains, time lags and the collision resolution rows
added so far.  Collisions are resolved greedily: the pair with the largest
time intersection gets an ordering constraint and the LP is solved again.

Two equivalent formulations are available:

``epigraph``
    variables ``s_a``, ``d_a`` for every executed activity and one energy
    variable per move bounded below by every chord of its linearisation.
``compact`` (default)
    one start variable per robot, static durations, and per move one
    variable per chord segment (``d_e = d_min + sum of segment lengths``);
    convexity makes the LP fill cheaper segments first.  Start times are
    affine expressions of these, so the chain rows disappear.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import DEFAULT_SEGMENTS, FEAS_TOL
from .lp import EQ, GE, LE, OPTIMAL, Basis, LinearProgram, LpBuilder, warm_solve
from .model import Instance, energy_eval
from .solution import Solution, Step
from .tuples import CellTuple

FORMULATIONS = ("compact", "epigraph")

FEASIBLE = "feasible"
LP_INFEASIBLE = "lp_infeasible"
UNRESOLVABLE = "collision_unresolvable"


class Affine:
    """Sparse affine expression ``const + sum coef * column``."""

    __slots__ = ("coef", "const")

    def __init__(self, coef: Optional[dict] = None, const: float = 0.0):
        self.coef = dict(coef or {})
        self.const = float(const)

    def __add__(self, other: "Affine") -> "Affine":
        out = Affine(self.coef, self.const + other.const)
        for j, v in other.coef.items():
            out.coef[j] = out.coef.get(j, 0.0) + v
        return out

    def __sub__(self, other: "Affine") -> "Affine":
        return self + other.scaled(-1.0)

    def scaled(self, k: float) -> "Affine":
        return Affine({j: k * v for j, v in self.coef.items()}, k * self.const)

    def shifted(self, c: float) -> "Affine":
        return Affine(self.coef, self.const + c)

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[j] for j, v in self.coef.items())


@dataclass
class ReducedModel:
    """LP of a tuple with the affine maps from LP columns to timing."""

    lp: Optional[LinearProgram]
    start: dict[str, Affine]
    duration: dict[str, Affine]
    formulation: str
    conflict: Optional[str] = None     # duration window that cannot be met

    def timing(self, x: np.ndarray) -> tuple[dict[str, float], dict[str, float]]:
        s = {a: e.value(x) for a, e in self.start.items()}
        d = {a: e.value(x) for a, e in self.duration.items()}
        return s, d


def active_collisions(instance: Instance, tup: CellTuple) -> list[tuple[str, str]]:
    """Distinct activity pairs of collision quads whose both items are selected, sorted."""
    sel = tup.selected
    pairs = {(c.activity_1, c.activity_2) for c in instance.collisions
             if sel.get(c.activity_1) == c.item_1 and sel.get(c.activity_2) == c.item_2}
    return sorted(pairs)


def build_reduced_lp(instance: Instance, tup: CellTuple, segments: int = DEFAULT_SEGMENTS,
                     d_ge=(), d_le=(), formulation: str = "compact") -> ReducedModel:
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}")
    ct = instance.cycle_time
    b = LpBuilder()
    start: dict[str, Affine] = {}
    dur: dict[str, Affine] = {}
    conflict = None

    for plan in tup.plans:
        robot = instance.robot_map[plan.robot_id]
        chain = plan.chronological()
        if formulation == "compact":
            base = b.var(f"s:{robot.id}", 0.0, np.inf)
            cur = Affine({base: 1.0})
        for a, is_static, i in chain:
            if is_static:
                v = robot.statics[a]
                lo = robot.min_static_duration(a, plan.modes[i])
                hi = v.d_max
                if lo > hi:
                    conflict = conflict or a
                    hi = lo
                p = v.location_map[plan.locations[i]].power[plan.modes[i]]
                j = b.var(f"d:{a}", lo, hi, p)
                dur[a] = Affine({j: 1.0})
            else:
                t = robot.dynamics[a].trajectory_map[plan.trajectories[i]]
                pwl = t.pwl(segments)
                if formulation == "compact":
                    expr = Affine(const=t.d_min)
                    b.offset += energy_eval(t.energy, t.d_min)
                    if t.d_max > t.d_min:
                        bp = pwl.breakpoints
                        for k in range(pwl.segments):
                            j = b.var(f"g:{a}:{k}", 0.0, bp[k + 1] - bp[k], pwl.k[k])
                            expr.coef[j] = 1.0
                    dur[a] = expr
                else:
                    jd = b.var(f"d:{a}", t.d_min, t.d_max)
                    jw = b.var(f"w:{a}", -np.inf, np.inf, 1.0)
                    dur[a] = Affine({jd: 1.0})
                    for k in range(pwl.segments):
                        b.row(f"epi:{a}:{k}", {jd: pwl.k[k], jw: -1.0}, LE, -pwl.q[k])
            if formulation == "compact":
                start[a] = cur
                cur = cur + dur[a]
            else:
                start[a] = Affine({b.var(f"s:{a}", 0.0, np.inf): 1.0})
        if formulation == "compact":
            total = Affine()
            for a, _, _ in chain:
                total = total + dur[a]
            b.row(f"close:{robot.id}", total.coef, EQ, ct - total.const)
        else:
            for (a1, _, _), (a2, _, _) in zip(chain, chain[1:]):
                row = start[a2] - start[a1] - dur[a1]
                b.row(f"chain:{a2}", row.coef, EQ, -row.const)
            first, home = chain[0][0], chain[-1][0]
            row = start[first] - start[home] - dur[home]
            b.row(f"close:{first}", row.coef, EQ, -ct - row.const)

    for i, lag in enumerate(instance.time_lags):
        a1, a2 = lag.from_activity, lag.to_activity
        if a1 not in start or a2 not in start:
            continue
        row = start[a2] - start[a1]
        b.row(f"lag:{i}", row.coef, GE, lag.length - ct * lag.height - row.const)

    for a1, a2, n in d_ge:
        row = start[a2] - start[a1] - dur[a1]           # s2 + nCT >= s1 + d1
        b.row(f"colres_ge:{a1}:{a2}:{n}", row.coef, GE, -n * ct - row.const)
    for a1, a2, n in d_le:
        row = start[a2] + dur[a2] - start[a1]           # s2 + d2 + nCT <= s1
        b.row(f"colres_le:{a1}:{a2}:{n}", row.coef, LE, -n * ct - row.const)

    lp = None if conflict else b.build()
    return ReducedModel(lp, start, dur, formulation, conflict)


@dataclass(frozen=True)
class GammaResult:
    gamma: float
    triple: Optional[tuple[str, str, int]]
    upsilon: float
    mu: float


def compute_gamma(instance: Instance, pairs, start: dict, duration: dict) -> GammaResult:
    """Largest time intersection over active collision pairs and cycle shifts.

    ``pairs`` are (a_i, a_j) activity pairs (see :func:`active_collisions`).
    Among equal maxima the lexicographically smallest (a_i, a_j, n) wins.
    """
    ct = instance.cycle_time
    nr = len(instance.robots)
    best = GammaResult(-np.inf, None, np.nan, np.nan)
    for ai, aj in sorted(pairs):
        si, di, sj, dj = start[ai], duration[ai], start[aj], duration[aj]
        for n in range(-nr, nr + 1):
            ups = si + di - sj - n * ct
            mu = sj + dj + n * ct - si
            val = min(ups, mu)
            if val > best.gamma:
                best = GammaResult(val, (ai, aj, n), ups, mu)
    return best


def resolve_worst_collision(d_ge: list, d_le: list, g: GammaResult) -> str:
    """Add the worst collision's ordering constraint; returns the set it went to."""
    if g.triple is None or not g.gamma > 0:
        raise ValueError("there is no active collision to resolve")
    if g.upsilon <= g.mu:
        d_ge.append(g.triple)
        return "ge"
    d_le.append(g.triple)
    return "le"


@dataclass
class TupleEvaluation:
    status: str
    solution: Optional[Solution] = None
    lp_calls: int = 0
    added_constraints: int = 0
    objective: float = np.inf
    d_ge: list = field(default_factory=list)
    d_le: list = field(default_factory=list)
    objectives: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


def make_solution(instance: Instance, tup: CellTuple, start: dict, duration: dict, segments: int,
                  metadata: Optional[dict] = None) -> Solution:
    steps: dict[str, list[Step]] = {}
    energy: dict[str, float] = {}
    crit = 0.0
    for plan in tup.plans:
        robot = instance.robot_map[plan.robot_id]
        lst = []
        for a, is_static, i in plan.chronological():
            d = duration[a]
            if is_static:
                lst.append(Step(a, location=plan.locations[i], mode=plan.modes[i]))
                w = robot.statics[a].location_map[plan.locations[i]].power[plan.modes[i]] * d
                energy[a] = w
                crit += w
            else:
                lst.append(Step(a, trajectory=plan.trajectories[i]))
                t = robot.dynamics[a].trajectory_map[plan.trajectories[i]]
                dc = min(max(d, t.d_min), t.d_max)
                energy[a] = energy_eval(t.energy, dc)
                crit += t.pwl(segments)(dc)
        steps[robot.id] = lst
    return Solution(steps, dict(start), dict(duration), energy, float(crit), segments,
                    metadata=dict(metadata or {}))


def crash_basis(lp: LinearProgram) -> Basis:
    """Starting basis at the per-robot optimum of the compact formulation.

    Each ``close`` row alone is a continuous knapsack: filling the cycle
    time with the cheapest duration increments first is optimal.  The
    column that ends up partially filled becomes basic for that row; all
    other rows start with their slack basic.
    """
    basic, upper = [], set()
    for i, name in enumerate(lp.row_names):
        if not name.startswith("close:"):
            basic.append(f"row:{name}")
            continue
        cols = np.flatnonzero(lp.A[i])
        order = sorted(cols, key=lambda j: (lp.c[j], j))
        rest = lp.b[i] - float(lp.lb[cols].sum())
        pick = order[-1] if rest > 0 else order[0]
        for j in order:
            if rest <= 0:
                break
            width = lp.ub[j] - lp.lb[j]
            if width < rest:
                upper.add(lp.col_names[j])
                rest -= width
            else:
                pick = j
                break
        upper.discard(lp.col_names[pick])
        basic.append(lp.col_names[pick])
    return Basis(tuple(basic), frozenset(upper), frozenset(f"row:{r}" for r in lp.row_names))


def _clean_timing(model: ReducedModel, x: np.ndarray):
    s, d = model.timing(x)
    # remove tiny negative noise so exported solutions stay within bounds
    for a, v in s.items():
        if -1e-9 < v < 0:
            s[a] = 0.0
    return s, d


def evaluate_tuple(instance: Instance, tup: CellTuple, segments: int = DEFAULT_SEGMENTS,
                   formulation: str = "compact", debug_dir: Optional[str] = None,
                   tol: float = FEAS_TOL) -> TupleEvaluation:
    """Solve the reduced LP, resolving the worst collision until none remains."""
    pairs = active_collisions(instance, tup)
    cap = len(pairs) * (2 * len(instance.robots) + 1)
    ev = TupleEvaluation(LP_INFEASIBLE)
    basis = None
    while True:
        model = build_reduced_lp(instance, tup, segments, ev.d_ge, ev.d_le, formulation)
        if model.lp is None:
            ev.status = LP_INFEASIBLE
            return ev
        if debug_dir:
            _dump_lp(debug_dir, model.lp, ev.lp_calls)
        if basis is None and formulation == "compact":
            basis = crash_basis(model.lp)
        res = warm_solve(model.lp, basis)
        ev.lp_calls += 1
        if res.status != OPTIMAL:
            ev.status = LP_INFEASIBLE
            return ev
        basis = res.basis
        ev.objectives.append(res.objective)
        s, d = _clean_timing(model, res.x)
        g = compute_gamma(instance, pairs, s, d)
        if g.triple is None or g.gamma <= tol:
            ev.status = FEASIBLE
            ev.objective = res.objective
            ev.solution = make_solution(instance, tup, s, d, segments)
            return ev
        if ev.added_constraints >= cap or g.triple in ev.d_ge or g.triple in ev.d_le:
            ev.status = UNRESOLVABLE
            return ev
        resolve_worst_collision(ev.d_ge, ev.d_le, g)
        ev.added_constraints += 1


def _dump_lp(directory: str, lp: LinearProgram, index: int) -> None:
    from .milp import write_lp_text
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, f"reduced_{index:04d}.lp"), "wb") as fh:
        fh.write(write_lp_text(lp).encode())
