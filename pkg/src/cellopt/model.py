"""Robotic cell domain types, energy functions and instance validation.

A cell consists of robots whose static activities (stationary phases at a
chosen location and power mode) are connected by dynamic activities
(movements realised by one of several trajectories).  Every robot repeats a
Hamiltonian circuit over its static activities within the cycle time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from .constants import NUM_TOL


@dataclass(frozen=True)
class EnergyFunction:
    """Movement energy ``f(d) = C1*d + C2 + C3/d + C4/d**2 + C5/d**3``."""

    coeffs: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.coeffs) != 5:
            raise ValueError("an energy function needs exactly 5 coefficients")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def __call__(self, d):
        return energy_eval(self, d)


def energy_eval(f: EnergyFunction, d):
    """Energy in joules of a movement lasting ``d`` seconds."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise ValueError(f"movement duration must be positive, got {d}")
    c1, c2, c3, c4, c5 = f.coeffs
    inv = 1.0 / d_arr
    val = c1 * d_arr + c2 + inv * (c3 + inv * (c4 + inv * c5))
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class PwlApprox:
    """Chord linearisation of a convex function on ``[d_min, d_max]``.

    The value at ``d`` is ``max_b(k[b]*d + q[b])``.
    """

    k: tuple[float, ...]
    q: tuple[float, ...]
    d_min: float
    d_max: float

    @property
    def breakpoints(self) -> np.ndarray:
        if len(self.k) == 1 and self.d_min == self.d_max:
            return np.array([self.d_min])
        return np.linspace(self.d_min, self.d_max, len(self.k) + 1)

    @property
    def segments(self) -> int:
        return len(self.k)

    def __call__(self, d):
        d_arr = np.asarray(d, dtype=float)
        k = np.asarray(self.k)
        q = np.asarray(self.q)
        val = np.max(np.multiply.outer(d_arr, k) + q, axis=-1)
        return float(val) if np.ndim(val) == 0 else val


@lru_cache(maxsize=65536)
def _pwl_cached(coeffs, d_min, d_max, segments):
    f = EnergyFunction(coeffs)
    problems = convexity_violations(f, d_min, d_max)
    if problems:
        raise ValueError(problems[0])
    if d_max <= d_min:
        return PwlApprox((0.0,), (energy_eval(f, d_min),), d_min, d_min)
    xs = np.linspace(d_min, d_max, segments + 1)
    ys = energy_eval(f, xs)
    k = np.diff(ys) / np.diff(xs)
    q = ys[:-1] - k * xs[:-1]
    return PwlApprox(tuple(k.tolist()), tuple(q.tolist()), float(d_min), float(d_max))


def pwl_approximate(f: EnergyFunction, d_min: float, d_max: float, segments: int) -> PwlApprox:
    """Chords through ``segments + 1`` uniform breakpoints of a convex ``f``."""
    if segments < 1:
        raise ValueError("at least one segment is required")
    if d_min <= 0 or d_max < d_min:
        raise ValueError(f"invalid domain [{d_min}, {d_max}]")
    return _pwl_cached(f.coeffs, float(d_min), float(d_max), int(segments))


def convexity_violations(f: EnergyFunction, d_min: float, d_max: float, samples: int = 64) -> list[str]:
    """Numerical convexity and nonnegativity check on a uniform grid."""
    if d_min <= 0 or d_max <= d_min:
        if d_min > 0 and d_max == d_min and energy_eval(f, d_min) < -NUM_TOL:
            return [f"energy is negative at d={d_min}"]
        return []
    xs = np.linspace(d_min, d_max, samples)
    ys = energy_eval(f, xs)
    out = []
    second = ys[:-2] - 2 * ys[1:-1] + ys[2:]
    if np.any(second < -NUM_TOL):
        i = int(np.argmin(second))
        out.append(f"energy function is not convex near d={xs[i + 1]:.6g} (second difference {second[i]:.3g})")
    if np.any(ys < -NUM_TOL):
        i = int(np.argmin(ys))
        out.append(f"energy is negative at d={xs[i]:.6g}")
    return out


@dataclass(frozen=True)
class PowerMode:
    id: str
    min_switch_time: float


@dataclass(frozen=True)
class Location:
    id: str
    power: Mapping[str, float]


@dataclass(frozen=True)
class StaticActivity:
    id: str
    d_min: float
    d_max: float
    locations: tuple[Location, ...]

    @cached_property
    def location_map(self) -> dict[str, Location]:
        return {loc.id: loc for loc in self.locations}


@dataclass(frozen=True)
class Trajectory:
    id: str
    from_location: str
    to_location: str
    d_min: float
    d_max: float
    energy: EnergyFunction

    def pwl(self, segments: int) -> PwlApprox:
        return pwl_approximate(self.energy, self.d_min, self.d_max, segments)


@dataclass(frozen=True)
class DynamicActivity:
    id: str
    from_activity: str
    to_activity: str
    trajectories: tuple[Trajectory, ...]
    optional: bool = False

    @cached_property
    def trajectory_map(self) -> dict[str, Trajectory]:
        return {t.id: t for t in self.trajectories}

    def connecting(self, from_location: str, to_location: str) -> list[Trajectory]:
        return [t for t in self.trajectories
                if t.from_location == from_location and t.to_location == to_location]


@dataclass(frozen=True)
class Robot:
    id: str
    static_activities: tuple[StaticActivity, ...]
    dynamic_activities: tuple[DynamicActivity, ...]
    power_modes: tuple[PowerMode, ...]
    home: str

    @cached_property
    def statics(self) -> dict[str, StaticActivity]:
        return {v.id: v for v in self.static_activities}

    @cached_property
    def dynamics(self) -> dict[str, DynamicActivity]:
        return {e.id: e for e in self.dynamic_activities}

    @cached_property
    def modes(self) -> dict[str, PowerMode]:
        return {m.id: m for m in self.power_modes}

    @cached_property
    def edge_between(self) -> dict[tuple[str, str], DynamicActivity]:
        return {(e.from_activity, e.to_activity): e for e in self.dynamic_activities}

    @cached_property
    def outgoing(self) -> dict[str, list[DynamicActivity]]:
        out = {v.id: [] for v in self.static_activities}
        for e in self.dynamic_activities:
            out.setdefault(e.from_activity, []).append(e)
        return out

    @cached_property
    def incoming(self) -> dict[str, list[DynamicActivity]]:
        inc = {v.id: [] for v in self.static_activities}
        for e in self.dynamic_activities:
            inc.setdefault(e.to_activity, []).append(e)
        return inc

    @cached_property
    def fastest_mode(self) -> PowerMode:
        """Mode with the smallest switch-on time (first one on ties)."""
        return min(self.power_modes, key=lambda m: m.min_switch_time)

    def min_static_duration(self, v: str, mode: Optional[str] = None) -> float:
        act = self.statics[v]
        sw = self.fastest_mode.min_switch_time if mode is None else self.modes[mode].min_switch_time
        return max(act.d_min, sw)

    def is_optional_target(self, v: str) -> bool:
        return any(e.optional for e in self.incoming.get(v, ()))


@dataclass(frozen=True)
class TimeLag:
    from_activity: str
    to_activity: str
    length: float
    height: int


@dataclass(frozen=True)
class SpatialCompatPair:
    activity_1: str
    activity_2: str
    pairs: tuple[tuple[str, str], ...]

    @cached_property
    def partners(self) -> tuple[dict[str, set], dict[str, set]]:
        first: dict[str, set] = {}
        second: dict[str, set] = {}
        for l1, l2 in self.pairs:
            first.setdefault(l1, set()).add(l2)
            second.setdefault(l2, set()).add(l1)
        return first, second

    def allows(self, loc_1: str, loc_2: str) -> bool:
        """Pairwise compatibility with the partner-set semantics of the MILP.

        A location without any listed partner is unrestricted.
        """
        first, second = self.partners
        if loc_1 in first and loc_2 not in first[loc_1]:
            return False
        if loc_2 in second and loc_1 not in second[loc_2]:
            return False
        return True


@dataclass(frozen=True)
class CollisionQuad:
    activity_1: str
    item_1: str
    activity_2: str
    item_2: str


@dataclass(frozen=True)
class Instance:
    cycle_time: float
    robots: tuple[Robot, ...]
    time_lags: tuple[TimeLag, ...] = ()
    compat_pairs: tuple[SpatialCompatPair, ...] = ()
    collisions: tuple[CollisionQuad, ...] = ()
    name: str = field(default="", compare=False)

    @cached_property
    def robot_map(self) -> dict[str, Robot]:
        return {r.id: r for r in self.robots}

    @cached_property
    def owner(self) -> dict[str, Robot]:
        """Robot owning each activity id."""
        out = {}
        for r in self.robots:
            for v in r.static_activities:
                out[v.id] = r
            for e in r.dynamic_activities:
                out[e.id] = r
        return out

    def is_static(self, activity: str) -> bool:
        return activity in self.owner[activity].statics

    def static(self, v: str) -> StaticActivity:
        return self.owner[v].statics[v]

    def dynamic(self, e: str) -> DynamicActivity:
        return self.owner[e].dynamics[e]

    @property
    def activity_count(self) -> int:
        return len(self.owner)


@dataclass(frozen=True)
class Violation:
    entity: str
    rule: str
    detail: str = ""

    def __str__(self):
        return f"{self.entity}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def _robot_violations(r: Robot, seen_ids: set) -> list[Violation]:
    out = []
    rid = f"robot {r.id}"
    if not r.power_modes:
        out.append(Violation(rid, "no power modes"))
    elif not any(m.min_switch_time == 0 for m in r.power_modes):
        out.append(Violation(rid, "no mode with zero switch time (motor hold)"))
    for m in r.power_modes:
        if m.min_switch_time < 0:
            out.append(Violation(f"mode {m.id}", "negative min_switch_time"))
    if len(set(r.modes)) != len(r.power_modes):
        out.append(Violation(rid, "duplicate mode ids"))
    if r.home not in r.statics:
        out.append(Violation(rid, "home activity is not a static activity of the robot", r.home))

    for a in list(r.static_activities) + list(r.dynamic_activities):
        if a.id in seen_ids:
            out.append(Violation(f"activity {a.id}", "duplicate activity id"))
        seen_ids.add(a.id)

    for v in r.static_activities:
        ent = f"static {v.id}"
        if not (0 <= v.d_min <= v.d_max):
            out.append(Violation(ent, "requires 0 <= d_min <= d_max", f"[{v.d_min}, {v.d_max}]"))
        if not v.locations:
            out.append(Violation(ent, "no locations"))
        if len(v.location_map) != len(v.locations):
            out.append(Violation(ent, "duplicate location ids"))
        for loc in v.locations:
            for m in r.power_modes:
                p = loc.power.get(m.id)
                if p is None:
                    out.append(Violation(f"location {v.id}/{loc.id}", "input power missing for mode", m.id))
                elif p < 0:
                    out.append(Violation(f"location {v.id}/{loc.id}", "negative input power", m.id))
            for mid in loc.power:
                if mid not in r.modes:
                    out.append(Violation(f"location {v.id}/{loc.id}", "power given for unknown mode", mid))
        if not r.incoming.get(v.id):
            out.append(Violation(ent, "no incoming dynamic activity"))
        if not r.outgoing.get(v.id):
            out.append(Violation(ent, "no outgoing dynamic activity"))

    pairs = set()
    for e in r.dynamic_activities:
        ent = f"dynamic {e.id}"
        if e.from_activity not in r.statics or e.to_activity not in r.statics:
            out.append(Violation(ent, "endpoints must be static activities of the same robot"))
            continue
        if (e.from_activity, e.to_activity) in pairs:
            out.append(Violation(ent, "parallel dynamic activity between the same static activities"))
        pairs.add((e.from_activity, e.to_activity))
        should_be_optional = len(r.outgoing[e.from_activity]) > 1
        if e.optional != should_be_optional:
            out.append(Violation(ent, "optional flag must equal (out-degree of source > 1)"))
        if not e.trajectories:
            out.append(Violation(ent, "no trajectories"))
        if len(e.trajectory_map) != len(e.trajectories):
            out.append(Violation(ent, "duplicate trajectory ids"))
        src = r.statics[e.from_activity].location_map
        dst = r.statics[e.to_activity].location_map
        for t in e.trajectories:
            tent = f"trajectory {e.id}/{t.id}"
            if t.from_location not in src:
                out.append(Violation(tent, "from_location not a location of the source activity", t.from_location))
            if t.to_location not in dst:
                out.append(Violation(tent, "to_location not a location of the target activity", t.to_location))
            if not (0 < t.d_min <= t.d_max):
                out.append(Violation(tent, "requires 0 < d_min <= d_max", f"[{t.d_min}, {t.d_max}]"))
                continue
            for msg in convexity_violations(t.energy, t.d_min, t.d_max):
                out.append(Violation(tent, msg))

    # weak connectivity of the activity graph
    if r.static_activities and r.home in r.statics:
        adj = {v: set() for v in r.statics}
        for e in r.dynamic_activities:
            if e.from_activity in adj and e.to_activity in adj:
                adj[e.from_activity].add(e.to_activity)
                adj[e.to_activity].add(e.from_activity)
        stack, seen = [r.home], {r.home}
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != len(adj):
            out.append(Violation(rid, "activity graph is not connected"))
    return out


def validate_instance(instance: Instance) -> list[Violation]:
    """Return every violated structural rule; an empty list means valid."""
    out: list[Violation] = []
    if not instance.cycle_time > 0:
        out.append(Violation("instance", "cycle_time must be positive", str(instance.cycle_time)))
    if not instance.robots:
        out.append(Violation("instance", "no robots"))
    if len({r.id for r in instance.robots}) != len(instance.robots):
        out.append(Violation("instance", "duplicate robot ids"))
    seen: set = set()
    for r in instance.robots:
        out.extend(_robot_violations(r, seen))
    if out:
        return out

    owner = instance.owner
    for i, lag in enumerate(instance.time_lags):
        for a in (lag.from_activity, lag.to_activity):
            if a not in owner:
                out.append(Violation(f"time lag {i}", "unknown activity", a))
        if int(lag.height) != lag.height:
            out.append(Violation(f"time lag {i}", "height must be an integer"))

    for i, q in enumerate(instance.compat_pairs):
        ent = f"compat pair {i}"
        ok = True
        for a in (q.activity_1, q.activity_2):
            if a not in owner or not instance.is_static(a):
                out.append(Violation(ent, "activity is not a known static activity", a))
                ok = False
        if not q.pairs:
            out.append(Violation(ent, "no location pairs"))
        if not ok:
            continue
        l1s = instance.static(q.activity_1).location_map
        l2s = instance.static(q.activity_2).location_map
        for l1, l2 in q.pairs:
            if l1 not in l1s or l2 not in l2s:
                out.append(Violation(ent, "unknown location in pair", f"{l1},{l2}"))

    for i, c in enumerate(instance.collisions):
        ent = f"collision {i}"
        if c.activity_1 not in owner or c.activity_2 not in owner:
            out.append(Violation(ent, "unknown activity"))
            continue
        if owner[c.activity_1].id == owner[c.activity_2].id:
            out.append(Violation(ent, "colliding activities belong to the same robot"))
        for a, item in ((c.activity_1, c.item_1), (c.activity_2, c.item_2)):
            if instance.is_static(a):
                if item not in instance.static(a).location_map:
                    out.append(Violation(ent, "item is not a location of the static activity", f"{a}/{item}"))
            elif item not in instance.dynamic(a).trajectory_map:
                out.append(Violation(ent, "item is not a trajectory of the dynamic activity", f"{a}/{item}"))
    return out


class InstanceError(ValueError):
    """Raised when an instance fails validation."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations[:20])
        super().__init__(f"invalid instance ({len(self.violations)} violations):\n{lines}")
