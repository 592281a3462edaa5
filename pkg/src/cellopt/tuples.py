"""Tuples (partially fixed problems), their generation and the elite pool.

A tuple fixes, per robot, an operation order, the go-through locations with
connecting trajectories, and a power mode per static activity.  Only the
timing is left to the reduced LP.
"""
from __future__ import annotations

import random
import threading
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

from .graph import Alternative, fastest_location_sequence
from .model import Instance, Robot

SCORE_EPS = 1e-6


@dataclass(frozen=True)
class RobotPlan:
    """Fixed selections of one robot.

    ``circuit`` lists statics in visiting order with home last; ``edges[i]``
    and ``trajectories[i]`` realise the move entering ``circuit[i]``.
    """

    robot_id: str
    circuit: tuple[str, ...]
    edges: tuple[str, ...]
    locations: tuple[str, ...]
    trajectories: tuple[str, ...]
    modes: tuple[str, ...]

    def location_of(self, v: str) -> str:
        return self.locations[self.circuit.index(v)]

    def chronological(self) -> list[tuple[str, bool, int]]:
        """(activity, is_static, circuit index) from the move out of home to home."""
        out = []
        for i in range(len(self.circuit)):
            out.append((self.edges[i], False, i))
            out.append((self.circuit[i], True, i))
        return out


@dataclass(frozen=True)
class CellTuple:
    plans: tuple[RobotPlan, ...]

    def plan(self, robot_id: str) -> RobotPlan:
        for p in self.plans:
            if p.robot_id == robot_id:
                return p
        raise KeyError(robot_id)

    def with_plan(self, plan: RobotPlan) -> "CellTuple":
        return CellTuple(tuple(plan if p.robot_id == plan.robot_id else p for p in self.plans))

    @property
    def mode_map(self) -> dict[str, str]:
        return {v: m for p in self.plans for v, m in zip(p.circuit, p.modes)}

    @property
    def selected(self) -> dict[str, str]:
        """Chosen location of every static and trajectory of every executed move."""
        out = {}
        for p in self.plans:
            out.update(zip(p.circuit, p.locations))
            out.update(zip(p.edges, p.trajectories))
        return out

    def fingerprint(self) -> tuple:
        return tuple((p.robot_id, p.circuit, p.locations, p.trajectories, p.modes) for p in self.plans)


def plan_min_duration(robot: Robot, plan: RobotPlan) -> float:
    total = 0.0
    for i, v in enumerate(plan.circuit):
        total += robot.min_static_duration(v, plan.modes[i])
        total += robot.dynamics[plan.edges[i]].trajectory_map[plan.trajectories[i]].d_min
    return total


def plan_is_consistent(robot: Robot, plan: RobotPlan) -> bool:
    """Circuit, locations, trajectories and modes fit together."""
    h = len(plan.circuit)
    if sorted(plan.circuit) != sorted(robot.statics) or plan.circuit[-1] != robot.home:
        return False
    if not (len(plan.edges) == len(plan.locations) == len(plan.trajectories) == len(plan.modes) == h):
        return False
    for i in range(h):
        e = robot.edge_between.get((plan.circuit[i - 1], plan.circuit[i]))
        if e is None or e.id != plan.edges[i]:
            return False
        t = e.trajectory_map.get(plan.trajectories[i])
        if t is None or t.from_location != plan.locations[i - 1] or t.to_location != plan.locations[i]:
            return False
        if plan.modes[i] not in robot.modes:
            return False
    return True


def plan_from_alternative(robot: Robot, alt: Alternative, mode: Optional[str] = None) -> RobotPlan:
    m = mode or robot.fastest_mode.id
    return RobotPlan(robot.id, alt.circuit, alt.edges, alt.fastest_locations, alt.fastest_trajectories,
                     (m,) * len(alt.circuit))


def fastest_trajectory(robot: Robot, edge: str, l_from: str, l_to: str):
    ts = robot.dynamics[edge].connecting(l_from, l_to)
    return min(ts, key=lambda t: (t.d_min, t.id)) if ts else None


def _relocate(robot: Robot, plan: RobotPlan, v: str, loc: str, ct: float,
              pinned: Mapping[str, set]) -> Optional[RobotPlan]:
    """Move ``v`` to ``loc``: local reconnection first, else a pinned fastest path."""
    i = plan.circuit.index(v)
    if plan.locations[i] == loc:
        return plan
    h = len(plan.circuit)
    j = (i + 1) % h
    locs = list(plan.locations)
    trajs = list(plan.trajectories)
    locs[i] = loc
    if h == 1:
        t_in = fastest_trajectory(robot, plan.edges[0], loc, loc)
        if t_in is not None:
            trajs[0] = t_in.id
            return replace(plan, locations=tuple(locs), trajectories=tuple(trajs))
    else:
        t_in = fastest_trajectory(robot, plan.edges[i], locs[i - 1], loc)
        t_out = fastest_trajectory(robot, plan.edges[j], loc, locs[j])
        if t_in is not None and t_out is not None:
            trajs[i], trajs[j] = t_in.id, t_out.id
            cand = replace(plan, locations=tuple(locs), trajectories=tuple(trajs))
            if plan_min_duration(robot, cand) <= ct + 1e-9:
                return cand
    pins = {a: set(s) for a, s in pinned.items() if a in robot.statics}
    pins[v] = {loc}
    choice = fastest_location_sequence(robot, plan.circuit, ct, pins)
    if choice is None:
        return None
    return replace(plan, locations=choice.locations, trajectories=choice.trajectories)


def fix_spatial_compatibility(instance: Instance, tup: CellTuple, max_passes: int = 3) -> Optional[CellTuple]:
    """Repair violated compatibility pairs; ``None`` when no repair exists.

    For each violated pair the compatible location pair with the smallest
    score ``sum_r dDur_r / max(CT - dur_r, eps)`` is applied, where ``dur_r``
    is the fastest duration of robot ``r``'s current closed path.  Locations
    of processed pairs are pinned so later repairs keep them.
    """
    if not instance.compat_pairs:
        return tup
    ct = instance.cycle_time
    plans = {p.robot_id: p for p in tup.plans}
    owner = instance.owner
    for _ in range(max_passes):
        pinned: dict[str, set] = {}
        changed = False
        for q in instance.compat_pairs:
            r1, r2 = owner[q.activity_1], owner[q.activity_2]
            cur1 = plans[r1.id].location_of(q.activity_1)
            cur2 = plans[r2.id].location_of(q.activity_2)
            if q.allows(cur1, cur2) and _pins_ok(pinned, q, cur1, cur2):
                _narrow(pinned, q.activity_1, cur1)
                _narrow(pinned, q.activity_2, cur2)
                continue
            best = None
            for l1 in instance.static(q.activity_1).location_map:
                for l2 in instance.static(q.activity_2).location_map:
                    if not q.allows(l1, l2) or not _pins_ok(pinned, q, l1, l2):
                        continue
                    new = dict(plans)
                    p1 = _relocate(r1, new[r1.id], q.activity_1, l1, ct, pinned)
                    if p1 is None:
                        continue
                    new[r1.id] = p1
                    p2 = _relocate(r2, new[r2.id], q.activity_2, l2, ct, pinned)
                    if p2 is None:
                        continue
                    new[r2.id] = p2
                    if r1.id == r2.id and p2.location_of(q.activity_1) != l1:
                        continue
                    score = 0.0
                    for rid in sorted({r1.id, r2.id}):
                        robot = instance.robot_map[rid]
                        before = plan_min_duration(robot, plans[rid])
                        after = plan_min_duration(robot, new[rid])
                        score += (after - before) / max(ct - before, SCORE_EPS)
                    if best is None or score < best[0] - 1e-12:
                        best = (score, new, l1, l2)
            if best is None:
                return None
            plans = best[1]
            changed = True
            for a, l in ((q.activity_1, best[2]), (q.activity_2, best[3])):
                _narrow(pinned, a, l)
        if not changed:
            break
    result = CellTuple(tuple(plans[p.robot_id] for p in tup.plans))
    return result if compat_violations(instance, result) == 0 else None


def _pins_ok(pinned, q, l1, l2) -> bool:
    return (q.activity_1 not in pinned or l1 in pinned[q.activity_1]) and \
        (q.activity_2 not in pinned or l2 in pinned[q.activity_2])


def _narrow(pinned, a, loc):
    pinned[a] = {loc}


def compat_violations(instance: Instance, tup: CellTuple) -> int:
    sel = tup.selected
    return sum(not q.allows(sel[q.activity_1], sel[q.activity_2]) for q in instance.compat_pairs)


def generate_tuple(instance: Instance, alternatives: Mapping[str, Sequence[Alternative]],
                   rng: random.Random) -> Optional[CellTuple]:
    """Random alternative with its fastest closed path per robot, fastest modes, repaired compatibility."""
    plans = []
    for robot in instance.robots:
        alts = alternatives.get(robot.id)
        if not alts:
            return None
        plans.append(plan_from_alternative(robot, rng.choice(list(alts))))
    return fix_spatial_compatibility(instance, CellTuple(tuple(plans)))


class ElitePool:
    """The ``capacity`` best distinct feasible solutions, by total energy.

    With ``locked`` the operations are serialised by a mutex; a single
    context can skip it.
    """

    def __init__(self, capacity: int = 10, locked: bool = True):
        if capacity < 1:
            raise ValueError("elite capacity must be at least 1")
        self.capacity = capacity
        self._lock = threading.Lock() if locked else None
        self._entries: list = []     # (energy, seq, key, solution, tuple)
        self._seq = 0

    def __len__(self):
        return len(self._entries)

    def _guard(self):
        return self._lock if self._lock is not None else _NullLock()

    def offer(self, solution, tup: CellTuple) -> bool:
        energy = float(solution.total_energy)
        key = solution.selection_key()
        with self._guard():
            for i, ent in enumerate(self._entries):
                if ent[2] == key:
                    if energy < ent[0]:
                        self._entries[i] = (energy, ent[1], key, solution, tup)
                        self._entries.sort(key=lambda e: (e[0], e[1]))
                        return True
                    return False
            if len(self._entries) >= self.capacity:
                if energy >= self._entries[-1][0]:
                    return False
                self._entries.pop()
            self._seq += 1
            self._entries.append((energy, self._seq, key, solution, tup))
            self._entries.sort(key=lambda e: (e[0], e[1]))
            return True

    def entries(self) -> list:
        """(solution, tuple) pairs, best first."""
        with self._guard():
            return [(e[3], e[4]) for e in self._entries]

    def best(self):
        with self._guard():
            return self._entries[0][3] if self._entries else None

    def energies(self) -> list[float]:
        with self._guard():
            return [e[0] for e in self._entries]


class _NullLock:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def elite_offer(pool: ElitePool, solution, tup: CellTuple) -> bool:
    return pool.offer(solution, tup)


def elite_circuits(tuples: Iterable[CellTuple]) -> dict[str, list[tuple[str, ...]]]:
    """Distinct circuits per robot in first-seen order."""
    out: dict[str, list] = {}
    for tup in tuples:
        for p in tup.plans:
            lst = out.setdefault(p.robot_id, [])
            if p.circuit not in lst:
                lst.append(p.circuit)
    return out


def combine_elites(instance: Instance, elite_tuples: Sequence[CellTuple], rng: random.Random,
                   alternatives: Optional[Mapping[str, Sequence[Alternative]]] = None) -> Optional[CellTuple]:
    """Draw each robot's circuit uniformly from those used by elite solutions."""
    if not elite_tuples:
        raise ValueError("the elite pool is empty")
    circuits = elite_circuits(elite_tuples)
    by_circuit = {}
    for rid, alts in (alternatives or {}).items():
        for a in alts:
            by_circuit[(rid, a.circuit)] = a
    chosen = {}
    for robot in instance.robots:
        circ = rng.choice(circuits[robot.id])
        alt = by_circuit.get((robot.id, circ))
        if alt is None:
            alt = _alternative_for(robot, circ, instance.cycle_time)
            if alt is None:
                return None
        chosen[robot.id] = [alt]
    return generate_tuple(instance, chosen, rng)


def _alternative_for(robot: Robot, circuit: tuple[str, ...], ct: float) -> Optional[Alternative]:
    choice = fastest_location_sequence(robot, circuit, ct)
    if choice is None:
        return None
    edges = tuple(robot.edge_between[(circuit[i - 1], circuit[i])].id for i in range(len(circuit)))
    return Alternative(robot.id, tuple(circuit), edges, choice.duration, choice.locations, choice.trajectories)
