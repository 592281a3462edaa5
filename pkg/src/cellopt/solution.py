"""Solutions of the energy optimisation problem and their feasibility check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .constants import FEAS_TOL
from .model import Instance, energy_eval


@dataclass(frozen=True)
class Step:
    """One executed activity of a robot cycle.

    Static steps carry ``location`` and ``mode``; dynamic steps carry
    ``trajectory``.
    """

    activity: str
    location: Optional[str] = None
    mode: Optional[str] = None
    trajectory: Optional[str] = None

    @property
    def is_static(self) -> bool:
        return self.trajectory is None


@dataclass
class Solution:
    """Selections and timing of every robot.

    ``steps`` lists each robot's cycle chronologically: the move out of the
    home activity first and the home activity last.  ``energy`` holds the
    exact per-activity consumption, ``total_energy`` the optimised criterion
    (linearised movement energy plus static energy).
    """

    steps: dict[str, list[Step]]
    start: dict[str, float]
    duration: dict[str, float]
    energy: dict[str, float]
    total_energy: float
    segments: int
    status: str = "feasible"
    metadata: dict = field(default_factory=dict)

    @property
    def exact_total_energy(self) -> float:
        return float(sum(self.energy.values()))

    def selection_key(self) -> tuple:
        """Fingerprint of all chosen circuits, locations, trajectories and modes."""
        return tuple(
            (rid, tuple((s.activity, s.location, s.mode, s.trajectory) for s in steps))
            for rid, steps in sorted(self.steps.items())
        )


@dataclass(frozen=True)
class CheckItem:
    rule: str
    entity: str
    message: str
    slack: float = 0.0

    def __str__(self):
        return f"[{self.rule}] {self.entity}: {self.message} (slack {self.slack:.6g})"


@dataclass
class FeasibilityReport:
    violations: list[CheckItem]

    @property
    def feasible(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.feasible:
            return "feasible"
        return "\n".join(str(v) for v in self.violations)


def _rel_close(a: float, b: float, rel: float = 1e-6) -> bool:
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def check_solution(instance: Instance, solution: Solution, tol: float = FEAS_TOL) -> FeasibilityReport:
    """Verify a solution against the problem definition.

    Checks circuits, duration windows, cycle time, timing chain, time lags,
    spatial compatibility, collisions (for every cycle shift
    ``n in [-|R|, |R|]``) and reported energies.
    """
    bad: list[CheckItem] = []

    def fail(rule, entity, message, slack=0.0):
        bad.append(CheckItem(rule, entity, message, float(slack)))

    ct = instance.cycle_time
    chosen: dict[str, str] = {}     # activity -> location or trajectory
    executed: set = set()

    for robot in instance.robots:
        steps = solution.steps.get(robot.id)
        if not steps:
            fail("circuit", robot.id, "robot has no selection")
            continue
        statics = [s for s in steps if s.is_static]
        dynamics = [s for s in steps if not s.is_static]
        ok = True
        if len(steps) != 2 * len(statics) or any(
                steps[2 * i].is_static or not steps[2 * i + 1].is_static for i in range(len(statics))):
            fail("circuit", robot.id, "steps must alternate move, static, ..., ending at home")
            ok = False
        visited = [s.activity for s in statics]
        if sorted(visited) != sorted(robot.statics) or len(set(visited)) != len(visited):
            fail("circuit", robot.id, "circuit must visit every static activity exactly once")
            ok = False
        if statics and statics[-1].activity != robot.home:
            fail("circuit", robot.id, "circuit must end at the home activity")
            ok = False
        if not ok:
            continue
        for i, st in enumerate(statics):
            v = robot.statics[st.activity]
            if st.location not in v.location_map:
                fail("selection", st.activity, f"unknown location {st.location}")
                ok = False
            if st.mode not in robot.modes:
                fail("selection", st.activity, f"unknown mode {st.mode}")
                ok = False
        for i, mv in enumerate(dynamics):
            prev = statics[i - 1]
            nxt = statics[i]
            e = robot.dynamics.get(mv.activity)
            if e is None or e.from_activity != prev.activity or e.to_activity != nxt.activity:
                fail("circuit", mv.activity, f"no dynamic activity {prev.activity}->{nxt.activity} with this id")
                ok = False
                continue
            t = e.trajectory_map.get(mv.trajectory)
            if t is None:
                fail("selection", mv.activity, f"unknown trajectory {mv.trajectory}")
                ok = False
                continue
            if t.from_location != prev.location or t.to_location != nxt.location:
                fail("selection", mv.activity,
                     f"trajectory {t.id} connects {t.from_location}->{t.to_location}, "
                     f"selected locations are {prev.location}->{nxt.location}")
                ok = False
        if not ok:
            continue

        for st in steps:
            a = st.activity
            executed.add(a)
            chosen[a] = st.location if st.is_static else st.trajectory
            if a not in solution.start or a not in solution.duration:
                fail("timing", a, "missing start or duration")
                ok = False
        if not ok:
            continue

        # duration windows and energies
        total_d = 0.0
        for st in steps:
            a = st.activity
            d = solution.duration[a]
            total_d += d
            if st.is_static:
                v = robot.statics[a]
                lo = robot.min_static_duration(a, st.mode)
                hi = v.d_max
                p = v.location_map[st.location].power[st.mode]
                expect = p * d
            else:
                t = robot.dynamics[a].trajectory_map[st.trajectory]
                lo, hi = t.d_min, t.d_max
                expect = energy_eval(t.energy, d) if d > 0 else float("inf")
            if d < lo - tol:
                fail("duration", a, f"duration {d:.9g} below minimum {lo:.9g}", d - lo)
            if d > hi + tol:
                fail("duration", a, f"duration {d:.9g} above maximum {hi:.9g}", hi - d)
            w = solution.energy.get(a)
            if w is None or not _rel_close(w, expect):
                fail("energy", a, f"reported energy {w} differs from {expect:.12g}")
            if solution.start[a] < -tol:
                fail("timing", a, "negative start time", solution.start[a])
        if abs(total_d - ct) > tol:
            fail("cycle_time", robot.id, f"circuit duration {total_d:.9g} != cycle time {ct:.9g}", ct - total_d)

        # timing chain; the move out of home starts CT before the home activity ends
        home = steps[-1].activity
        first = steps[0].activity
        gap = solution.start[first] - (solution.start[home] + solution.duration[home] - ct)
        if abs(gap) > tol:
            fail("timing", first, "closing move does not start when the home activity ends (minus CT)", -abs(gap))
        for a_step, b_step in zip(steps, steps[1:]):
            a, b = a_step.activity, b_step.activity
            gap = solution.start[b] - (solution.start[a] + solution.duration[a])
            if abs(gap) > tol:
                fail("timing", b, f"does not start when {a} ends", -abs(gap))

    if bad and any(v.rule in ("circuit", "selection") for v in bad):
        return FeasibilityReport(bad)

    s, d = solution.start, solution.duration
    for i, lag in enumerate(instance.time_lags):
        a1, a2 = lag.from_activity, lag.to_activity
        if a1 not in executed or a2 not in executed:
            continue
        slack = s[a2] - s[a1] - lag.length + ct * lag.height
        if slack < -tol:
            fail("time_lag", f"{a1}->{a2}", "time lag violated", slack)

    for q in instance.compat_pairs:
        l1, l2 = chosen.get(q.activity_1), chosen.get(q.activity_2)
        if l1 is None or l2 is None:
            continue
        if not q.allows(l1, l2):
            fail("compat", f"{q.activity_1}/{q.activity_2}", f"locations ({l1}, {l2}) are not compatible")

    nr = len(instance.robots)
    for c in instance.collisions:
        if chosen.get(c.activity_1) != c.item_1 or chosen.get(c.activity_2) != c.item_2:
            continue
        a1, a2 = c.activity_1, c.activity_2
        for n in range(-nr, nr + 1):
            overlap = min(s[a1] + d[a1] - s[a2] - n * ct, s[a2] + d[a2] + n * ct - s[a1])
            if overlap > tol:
                fail("collision", f"{a1}/{a2}", f"intervals overlap by {overlap:.9g} s for shift n={n}", -overlap)

    # optimised criterion: linearised movement energy plus static energy
    crit = 0.0
    for robot in instance.robots:
        for st in solution.steps.get(robot.id, []):
            a = st.activity
            if st.is_static:
                crit += robot.statics[a].location_map[st.location].power[st.mode] * d[a]
            else:
                t = robot.dynamics[a].trajectory_map[st.trajectory]
                pwl = t.pwl(solution.segments)
                crit += pwl(min(max(d[a], t.d_min), t.d_max))
    if not _rel_close(solution.total_energy, crit):
        fail("energy", "total", f"total_energy {solution.total_energy:.12g} differs from criterion {crit:.12g}")
    return FeasibilityReport(bad)
