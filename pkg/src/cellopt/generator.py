"""Seeded random robotic-cell instances.

Each robot gets a base circuit over its static activities (home last) and
optional swaps of neighbouring activities, which create alternative orders.
The cycle time is the slowest robot's fastest base-circuit duration times a
slack factor, so every robot can always run its base circuit.  Robots are
chained by handover time lags (one lag each way) with a compatibility pair
matching their handover locations; collisions are drawn between activities
whose reference schedules overlap.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .graph import fastest_location_sequence
from .model import (CollisionQuad, DynamicActivity, EnergyFunction, Instance, Location, PowerMode, Robot,
                    SpatialCompatPair, StaticActivity, TimeLag, Trajectory)

Range = tuple[float, float]


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    robot_count: int = 2
    activities_per_robot: tuple[int, int] = (3, 4)
    locations_per_activity: tuple[int, int] = (1, 2)
    trajectories_per_edge: tuple[int, int] = (1, 2)
    optional_edge_probability: float = 0.5
    modes_per_robot: tuple[int, int] = (1, 2)
    time_lag_count: int = 2
    compat_pair_count: int = 1
    collision_count: int = 1
    cycle_time_slack_factor: float = 1.2
    energy_coeff_ranges: tuple[Range, Range, Range, Range, Range] = (
        (5.0, 40.0), (0.0, 60.0), (40.0, 400.0), (0.0, 60.0), (0.0, 10.0))
    static_duration: Range = (0.5, 4.0)
    static_window: Range = (2.0, 10.0)
    trajectory_duration: Range = (0.5, 3.0)
    trajectory_stretch: Range = (1.5, 4.0)
    hold_power: Range = (150.0, 600.0)
    switch_time: Range = (0.3, 4.0)
    saving_factor: Range = (0.05, 0.7)
    name: str = ""

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.robot_count < 1:
            raise ValueError("robot_count must be positive")
        for f in ("activities_per_robot", "locations_per_activity", "trajectories_per_edge", "modes_per_robot"):
            lo, hi = getattr(self, f)
            if not 1 <= lo <= hi:
                raise ValueError(f"{f} must be a nonempty range of positive integers")
        if self.activities_per_robot[0] < 1:
            raise ValueError("robots need at least one static activity")
        for f in ("static_duration", "static_window", "trajectory_duration", "trajectory_stretch",
                  "hold_power", "switch_time", "saving_factor"):
            lo, hi = getattr(self, f)
            if not 0 <= lo <= hi:
                raise ValueError(f"{f} must be a nonempty nonnegative range")
        if self.trajectory_duration[0] <= 0 or self.trajectory_stretch[0] < 1:
            raise ValueError("trajectory durations must be positive and stretch at least 1")
        if len(self.energy_coeff_ranges) != 5 or any(lo > hi for lo, hi in self.energy_coeff_ranges):
            raise ValueError("energy_coeff_ranges needs 5 nonempty ranges")
        if any(lo < 0 for lo, _ in self.energy_coeff_ranges):
            raise ValueError("energy coefficients must be nonnegative to guarantee convexity")
        if self.cycle_time_slack_factor < 1.0:
            raise ValueError("cycle_time_slack_factor must be at least 1")
        if not 0 <= self.optional_edge_probability <= 1:
            raise ValueError("optional_edge_probability must lie in [0, 1]")
        if min(self.time_lag_count, self.compat_pair_count, self.collision_count) < 0:
            raise ValueError("counts must be nonnegative")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


PRESETS: dict[str, GeneratorConfig] = {
    "tiny": GeneratorConfig(robot_count=2, activities_per_robot=(3, 4), locations_per_activity=(1, 2),
                            trajectories_per_edge=(1, 2), modes_per_robot=(1, 2), time_lag_count=2,
                            compat_pair_count=1, collision_count=1, cycle_time_slack_factor=1.3),
    "small": GeneratorConfig(robot_count=3, activities_per_robot=(3, 5), locations_per_activity=(1, 2),
                             trajectories_per_edge=(1, 2), modes_per_robot=(1, 3), time_lag_count=4,
                             compat_pair_count=2, collision_count=2, cycle_time_slack_factor=1.2),
    "s5": GeneratorConfig(robot_count=5, activities_per_robot=(4, 6), locations_per_activity=(1, 3),
                          trajectories_per_edge=(1, 2), modes_per_robot=(2, 3), time_lag_count=8,
                          compat_pair_count=4, collision_count=5, cycle_time_slack_factor=1.2),
    "m8": GeneratorConfig(robot_count=8, activities_per_robot=(4, 7), locations_per_activity=(1, 3),
                          trajectories_per_edge=(1, 2), modes_per_robot=(2, 3), time_lag_count=14,
                          compat_pair_count=7, collision_count=8, cycle_time_slack_factor=1.2),
    "l12": GeneratorConfig(robot_count=12, activities_per_robot=(5, 8), locations_per_activity=(1, 3),
                           trajectories_per_edge=(1, 2), modes_per_robot=(2, 3), time_lag_count=22,
                           compat_pair_count=11, collision_count=12, cycle_time_slack_factor=1.2),
}


def preset(kind: str, seed: int = 0, **overrides) -> GeneratorConfig:
    if kind not in PRESETS:
        raise ValueError(f"unknown preset {kind!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[kind], seed=seed, name=overrides.pop("name", f"{kind}_{seed}"), **overrides)


def _r3(x: float) -> float:
    return round(float(x), 3)


class _Rng:
    def __init__(self, seed: int):
        self.g = np.random.Generator(np.random.Philox(seed))

    def int(self, lo_hi) -> int:
        lo, hi = lo_hi
        return int(self.g.integers(lo, hi + 1))

    def uni(self, lo_hi) -> float:
        lo, hi = lo_hi
        return float(self.g.uniform(lo, hi)) if hi > lo else float(lo)

    def pick(self, seq):
        return seq[int(self.g.integers(0, len(seq)))]

    def chance(self, p: float) -> bool:
        return bool(self.g.random() < p)

    def sample(self, seq, k):
        idx = self.g.permutation(len(seq))[:k]
        return [seq[i] for i in sorted(idx)]


def _make_robot(cfg: GeneratorConfig, rng: _Rng, idx: int):
    rid = f"r{idx + 1}"
    n_act = rng.int(cfg.activities_per_robot)
    n_modes = rng.int(cfg.modes_per_robot)

    switch = sorted(_r3(rng.uni(cfg.switch_time)) for _ in range(n_modes - 1))
    factors = sorted((rng.uni(cfg.saving_factor) for _ in range(n_modes - 1)), reverse=True)
    modes = [PowerMode(f"{rid}_m1", 0.0)] + [PowerMode(f"{rid}_m{k + 2}", s) for k, s in enumerate(switch)]

    names = [f"{rid}_v{k + 1}" for k in range(n_act)]
    locs: dict[str, list[Location]] = {}
    windows = {}
    for v in names:
        ls = []
        for j in range(rng.int(cfg.locations_per_activity)):
            hold = rng.uni(cfg.hold_power)
            power = {modes[0].id: round(hold, 1)}
            for m, f in zip(modes[1:], factors):
                power[m.id] = round(hold * f, 1)
            ls.append(Location(f"{v}_l{j + 1}", power))
        locs[v] = ls
        d_min = _r3(rng.uni(cfg.static_duration))
        windows[v] = (d_min, _r3(d_min + rng.uni(cfg.static_window)))

    # base circuit v1 -> v2 -> ... -> vn (home) -> v1, plus swaps x->b->a->y of neighbours a, b
    arcs = [(names[k], names[(k + 1) % n_act]) for k in range(n_act)]
    j = 0
    while n_act >= 3 and j + 1 < n_act - 1:
        if rng.chance(cfg.optional_edge_probability):
            x, a, b, y = names[j - 1], names[j], names[j + 1], names[(j + 2) % n_act]
            for arc in ((x, b), (b, a), (a, y)):
                if arc not in arcs:
                    arcs.append(arc)
            j += 3
        else:
            j += 1

    def traj_list(u, w):
        lu, lw = locs[u], locs[w]
        pairs = [(p, q) for p in range(len(lu)) for q in range(len(lw))]
        count = min(rng.int(cfg.trajectories_per_edge), len(pairs))
        chosen = [(0, 0)] + rng.sample(pairs[1:], count - 1)
        out = []
        for k, (p, q) in enumerate(chosen):
            d_min = _r3(rng.uni(cfg.trajectory_duration))
            d_max = _r3(d_min * rng.uni(cfg.trajectory_stretch))
            coeffs = tuple(float(f"{rng.uni(r):.4g}") for r in cfg.energy_coeff_ranges)
            out.append((lu[p].id, lw[q].id, d_min, max(d_max, d_min), coeffs))
        return out

    raw_edges = []
    for u, w in arcs:
        eid = f"{rid}_e{u.rsplit('_v', 1)[1]}_{w.rsplit('_v', 1)[1]}"
        raw_edges.append((eid, u, w, traj_list(u, w)))
    return rid, names, modes, locs, windows, raw_edges


def _assemble_robot(rid, names, modes, locs, windows, raw_edges, home_d_max: Optional[float]) -> Robot:
    home = names[-1]
    statics = []
    for v in names:
        lo, hi = windows[v]
        if v == home and home_d_max is not None:
            hi = max(hi, home_d_max)
        statics.append(StaticActivity(v, lo, hi, tuple(locs[v])))
    outdeg: dict[str, int] = {}
    for _, u, _, _ in raw_edges:
        outdeg[u] = outdeg.get(u, 0) + 1
    dyn = []
    for eid, u, w, trajs in raw_edges:
        ts = tuple(Trajectory(f"{eid}_t{k + 1}", a, b, dmin, dmax, EnergyFunction(c))
                   for k, (a, b, dmin, dmax, c) in enumerate(trajs))
        dyn.append(DynamicActivity(eid, u, w, ts, outdeg[u] > 1))
    return Robot(rid, tuple(statics), tuple(dyn), tuple(modes), home)


def base_circuit(robot: Robot) -> tuple[str, ...]:
    return tuple(v.id for v in robot.static_activities)


def _reference_intervals(robot: Robot, ct: float, choice) -> dict[str, tuple[float, float, str]]:
    """Base circuit at fastest speed stretched uniformly to the cycle time."""
    circ = base_circuit(robot)
    scale = ct / choice.duration if choice.duration > 0 else 1.0
    out = {}
    t = 0.0
    for i, v in enumerate(circ):
        e = robot.edge_between[(circ[i - 1], v)]
        traj = e.trajectory_map[choice.trajectories[i]]
        d = traj.d_min * scale
        out[e.id] = (t, d, traj.id)
        t += d
        d = robot.min_static_duration(v) * scale
        out[v] = (t, d, choice.locations[i])
        t += d
    return out


def _overlaps(a, b, ct: float) -> bool:
    (s1, d1, _), (s2, d2, _) = a, b
    for n in (-1, 0, 1):
        if min(s1 + d1 - s2 - n * ct, s2 + d2 + n * ct - s1) > 0:
            return True
    return False


def generate_instance(cfg: GeneratorConfig) -> Instance:
    rng = _Rng(cfg.seed)
    parts = [_make_robot(cfg, rng, i) for i in range(cfg.robot_count)]

    fastest = []
    for p in parts:
        robot = _assemble_robot(*p, home_d_max=None)
        choice = fastest_location_sequence(robot, base_circuit(robot))
        fastest.append(choice)
    ct = max(c.duration for c in fastest) * cfg.cycle_time_slack_factor
    robots = [_assemble_robot(*p, home_d_max=ct) for p in parts]

    lags, compat = [], []
    handovers = []
    n_hand = min(cfg.time_lag_count // 2, max(cfg.robot_count - 1, 0))
    for k in range(n_hand):
        r1, r2 = robots[k], robots[k + 1]
        a = rng.pick([v.id for v in r1.static_activities[:-1]] or [r1.home])
        b = rng.pick([v.id for v in r2.static_activities[:-1]] or [r2.home])
        fwd = _r3(rng.uni((0.0, 0.3 * ct)))
        back = _r3(rng.uni((0.0, 0.3 * ct)))
        lags.append(TimeLag(a, b, fwd, 0))
        lags.append(TimeLag(b, a, back, 1))
        handovers.append((r1, a, r2, b))
    for r1, a, r2, b in handovers[:cfg.compat_pair_count]:
        la = [loc.id for loc in r1.statics[a].locations]
        lb = [loc.id for loc in r2.statics[b].locations]
        pairs = [(l1, lb[i % len(lb)]) for i, l1 in enumerate(la)]
        pairs += [(la[i % len(la)], l2) for i, l2 in enumerate(lb) if i >= len(la)]
        compat.append(SpatialCompatPair(a, b, tuple(pairs)))

    collisions = []
    if cfg.robot_count >= 2:
        refs = [_reference_intervals(r, ct, c) for r, c in zip(robots, fastest)]
        seen = set()
        for _ in range(cfg.collision_count):
            cand = None
            for _attempt in range(50):
                i, j = rng.sample(list(range(cfg.robot_count)), 2)
                a1 = rng.pick(sorted(refs[i]))
                a2 = rng.pick(sorted(refs[j]))
                cand = (a1, refs[i][a1][2], a2, refs[j][a2][2])
                if cand not in seen and _overlaps(refs[i][a1], refs[j][a2], ct):
                    break
            if cand is not None and cand not in seen:
                seen.add(cand)
                collisions.append(CollisionQuad(*cand))

    return Instance(ct, tuple(robots), tuple(lags), tuple(compat), tuple(collisions), cfg.name)
