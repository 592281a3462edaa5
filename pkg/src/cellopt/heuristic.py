"""Parallel hybrid heuristic.

A control context enumerates alternatives, keeps a list of tuples to
process and the elite pool; workers take tuples and improve them by
alternating reduced-LP evaluations with three sub-heuristics (power modes,
location substitution, random path change) in round-robin order.

With one worker and ``deterministic`` set everything runs in-process and
the wall-clock limit is replaced by a budget of LP solves, so runs are
reproducible bit for bit.
"""
from __future__ import annotations

import math
import multiprocessing as mp
import queue
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .constants import DEFAULT_SEGMENTS, FEAS_TOL
from .graph import build_search_graph, enumerate_alternatives
from .model import Instance
from .reduced import TupleEvaluation, active_collisions, evaluate_tuple
from .solution import Solution, check_solution
from .tuples import (CellTuple, ElitePool, RobotPlan, combine_elites, fastest_trajectory,
                     fix_spatial_compatibility, generate_tuple, plan_min_duration)

SUB_HEURISTICS = ("power_mode", "change_locations", "change_path")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def default_phi_max(robot_count: int) -> int:
    if robot_count <= 5:
        return 100
    if robot_count <= 8:
        return 600
    return 1000


@dataclass
class HeuristicConfig:
    time_limit: float = 60.0
    phi_max: Optional[int] = None
    worker_count: int = 1
    segments: int = DEFAULT_SEGMENTS
    elite_capacity: int = 10
    alternatives_limit: int = 50
    rho: float = 1e-3
    tabu_tenure: int = 7
    seed: int = 0
    deterministic: bool = False
    eval_budget: int = 50_000
    stall_limit: int = 2_000
    formulation: str = "compact"

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if self.phi_max is not None and self.phi_max < 1:
            raise ValueError("phi_max must be at least 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")
        if self.segments < 1 or self.elite_capacity < 1 or self.alternatives_limit < 1:
            raise ValueError("segments, elite_capacity and alternatives_limit must be positive")
        if self.deterministic and self.worker_count != 1:
            raise ValueError("deterministic runs use exactly one worker")
        if self.eval_budget < 1 or self.stall_limit < 1 or self.tabu_tenure < 0 or self.rho < 0:
            raise ValueError("invalid budget, stall limit, tabu tenure or threshold")

    def phi_for(self, instance: Instance) -> int:
        return self.phi_max if self.phi_max is not None else default_phi_max(len(instance.robots))


@dataclass
class ProgressEvent:
    time_s: float
    energy: float
    worker_id: int
    evaluations: int


@dataclass
class RunReport:
    best: Optional[Solution]
    lp_evaluations: list[int]
    cache_hits: list[int]
    tuples_processed: int
    wall_time: float
    infeasibility_proof: bool = False
    evidence: list[str] = field(default_factory=list)
    progress: list[ProgressEvent] = field(default_factory=list)
    stop_reason: str = ""
    checker_rejections: int = 0

    @property
    def total_evaluations(self) -> int:
        return int(sum(self.lp_evaluations))

    @property
    def lp_evaluations_per_second(self) -> float:
        return self.total_evaluations / self.wall_time if self.wall_time > 0 else 0.0

    def summary(self, timing: bool = True) -> dict:
        out = {
            "best_energy": None if self.best is None else self.best.total_energy,
            "lp_evaluations": list(self.lp_evaluations),
            "cache_hits": list(self.cache_hits),
            "tuples_processed": self.tuples_processed,
            "infeasibility_proof": self.infeasibility_proof,
            "evidence": list(self.evidence),
            "stop_reason": self.stop_reason,
            "checker_rejections": self.checker_rejections,
            "progress": [[e.energy, e.worker_id, e.evaluations] + ([e.time_s] if timing else [])
                         for e in self.progress],
        }
        if timing:
            out["wall_time"] = self.wall_time
            out["lp_evaluations_per_second"] = self.lp_evaluations_per_second
        return out


# ------------------------------------------------------------ 1-D search

def golden_section(fun: Callable[[float], float], a: float, b: float, tol: float = 1e-6,
                   max_iter: int = 200) -> tuple[float, float]:
    """Minimum of a unimodal function on ``[a, b]``; returns ``(x, f(x))``."""
    if b < a:
        raise ValueError("empty interval")
    if b - a <= tol:
        x = 0.5 * (a + b)
        return x, fun(x)
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    x, fx = (c, fc) if fc <= fd else (d, fd)
    for end in (a, b):
        fe = fun(end)
        if fe < fx:
            x, fx = end, fe
    return x, fx


def substitution_interval(t_in, t_out, k: float) -> Optional[tuple[float, float]]:
    """Feasible durations of the incoming move when both moves share ``k`` seconds."""
    lo = max(t_in.d_min, k - t_out.d_max)
    hi = min(t_in.d_max, k - t_out.d_min)
    if lo > hi + 1e-12:
        return None
    return lo, max(lo, hi)


def substitution_optimum(t_in, t_out, k: float, segments: int = DEFAULT_SEGMENTS,
                         tol: float = 1e-6) -> Optional[tuple[float, float]]:
    """Best split of ``k`` seconds between two consecutive moves; ``(d_in, energy)``."""
    iv = substitution_interval(t_in, t_out, k)
    if iv is None:
        return None
    f_in, f_out = t_in.pwl(segments), t_out.pwl(segments)
    return golden_section(lambda d: f_in(d) + f_out(k - d), iv[0], iv[1], tol)


# -------------------------------------------------------- sub-heuristics

class TabuList:
    def __init__(self, tenure: int):
        self.tenure = tenure
        self.clock = 0
        self._until: dict[tuple[str, str], int] = {}

    def tick(self) -> None:
        self.clock += 1

    def add(self, v: str, mode: str) -> None:
        self._until[(v, mode)] = self.clock + self.tenure

    def blocked(self, v: str, mode: str) -> bool:
        return self._until.get((v, mode), -1) > self.clock


def _spread(durations: dict, members: list, delta: float, lows: dict) -> float:
    """Take ``delta`` seconds uniformly from ``members`` without going below ``lows``.

    Returns the part that could not be absorbed.
    """
    free = [a for a in members if durations[a] > lows[a] + 1e-12]
    while delta > 1e-12 and free:
        share = delta / len(free)
        nxt = []
        for a in free:
            take = min(share, durations[a] - lows[a])
            durations[a] -= take
            delta -= take
            if durations[a] > lows[a] + 1e-12:
                nxt.append(a)
        free = nxt
    return max(delta, 0.0)


def violation_seconds(instance: Instance, tup: CellTuple, start: dict, duration: dict,
                      robot_id: Optional[str] = None) -> float:
    """Total violation of time lags and collisions (optionally only those touching one robot)."""
    ct = instance.cycle_time
    owner = instance.owner
    total = 0.0
    for lag in instance.time_lags:
        a1, a2 = lag.from_activity, lag.to_activity
        if a1 not in start or a2 not in start:
            continue
        if robot_id is not None and robot_id not in (owner[a1].id, owner[a2].id):
            continue
        total += max(0.0, lag.length - ct * lag.height - (start[a2] - start[a1]))
    nr = len(instance.robots)
    for ai, aj in active_collisions(instance, tup):
        if robot_id is not None and robot_id not in (owner[ai].id, owner[aj].id):
            continue
        for n in range(-nr, nr + 1):
            v = min(start[ai] + duration[ai] - start[aj] - n * ct, start[aj] + duration[aj] + n * ct - start[ai])
            total += max(0.0, v)
    return total


def _robot_starts(plan: RobotPlan, first_start: float, duration: dict) -> dict:
    out = {}
    t = first_start
    for a, _, _ in plan.chronological():
        out[a] = t
        t += duration[a]
    return out


def subheur_power_mode(instance: Instance, tup: CellTuple, solution: Solution,
                       tabu: TabuList, applied: Optional[list] = None) -> Optional[CellTuple]:
    """Switch the power mode of one static activity.

    Each candidate is scored by its estimated energy change after the other
    static activities of the robot are uniformly shortened to keep the cycle
    time, plus a penalty for the seconds of broken time lags and collisions
    weighted by the robot's mean power.
    """
    ct = instance.cycle_time
    best = None
    for plan in tup.plans:
        robot = instance.robot_map[plan.robot_id]
        chain = plan.chronological()
        mean_power = sum(solution.energy[a] for a, _, _ in chain) / ct
        lows = {v: robot.min_static_duration(v, plan.modes[i]) for i, v in enumerate(plan.circuit)}
        for i, v in enumerate(plan.circuit):
            act = robot.statics[v]
            loc = act.location_map[plan.locations[i]]
            old = plan.modes[i]
            for mode in robot.power_modes:
                if mode.id == old or tabu.blocked(v, mode.id):
                    continue
                lo = robot.min_static_duration(v, mode.id)
                if lo > act.d_max:
                    continue
                dur = dict(solution.duration)
                d_old = dur[v]
                dur[v] = max(d_old, lo)
                others = [u for u in plan.circuit if u != v]
                missing = _spread(dur, others, dur[v] - d_old, lows)
                d_energy = loc.power[mode.id] * dur[v] - loc.power[old] * d_old
                for j, u in enumerate(plan.circuit):
                    if u != v:
                        p = robot.statics[u].location_map[plan.locations[j]].power[plan.modes[j]]
                        d_energy += p * (dur[u] - solution.duration[u])
                start = dict(solution.start)
                start.update(_robot_starts(plan, solution.start[chain[0][0]], dur))
                broken = missing + violation_seconds(instance, tup, start, dur, robot.id)
                score = d_energy + broken * mean_power
                if best is None or score < best[0]:
                    best = (score, plan, i, mode.id)
    if best is None:
        return None
    _, plan, i, mode = best
    tabu.add(plan.circuit[i], plan.modes[i])
    if applied is not None:
        applied.append((plan.circuit[i], mode))
    modes = list(plan.modes)
    modes[i] = mode
    return tup.with_plan(RobotPlan(plan.robot_id, plan.circuit, plan.edges, plan.locations,
                                   plan.trajectories, tuple(modes)))


def _compat_ok(instance: Instance, selected: dict, v: str, loc: str) -> bool:
    for q in instance.compat_pairs:
        if q.activity_1 == v and not q.allows(loc, selected[q.activity_2]):
            return False
        if q.activity_2 == v and not q.allows(selected[q.activity_1], loc):
            return False
    return True


def subheur_change_locations(instance: Instance, tup: CellTuple, solution: Solution,
                             segments: int = DEFAULT_SEGMENTS) -> Optional[CellTuple]:
    """Substitute one go-through location per robot by the most energy-friendly one.

    The durations of the surrounding moves share their current total, the
    static duration stays as in the LP, and the split is found by golden
    section search.
    """
    cur = tup
    changed = False
    dur = solution.duration
    for plan in tup.plans:
        robot = instance.robot_map[plan.robot_id]
        h = len(plan.circuit)
        if h < 2:
            continue
        best = None
        selected = cur.selected
        for i, v in enumerate(plan.circuit):
            act = robot.statics[v]
            if len(act.locations) < 2:
                continue
            j = (i + 1) % h
            e_in, e_out = robot.dynamics[plan.edges[i]], robot.dynamics[plan.edges[j]]
            t_in = e_in.trajectory_map[plan.trajectories[i]]
            t_out = e_out.trajectory_map[plan.trajectories[j]]
            k = dur[plan.edges[i]] + dur[plan.edges[j]]
            dv = dur[v]
            mode = plan.modes[i]
            now = (t_in.pwl(segments)(dur[plan.edges[i]]) + t_out.pwl(segments)(dur[plan.edges[j]])
                   + act.location_map[plan.locations[i]].power[mode] * dv)
            for loc in act.locations:
                if loc.id == plan.locations[i] or not _compat_ok(instance, selected, v, loc.id):
                    continue
                for ta in e_in.connecting(plan.locations[i - 1], loc.id):
                    for tb in e_out.connecting(loc.id, plan.locations[j]):
                        opt = substitution_optimum(ta, tb, k, segments)
                        if opt is None:
                            continue
                        val = opt[1] + loc.power[mode] * dv
                        if val < now - 1e-9 and (best is None or val - now < best[0]):
                            best = (val - now, i, loc.id, ta.id, tb.id)
        if best is None:
            continue
        _, i, loc, ta, tb = best
        j = (i + 1) % h
        locs, trajs = list(plan.locations), list(plan.trajectories)
        locs[i], trajs[i], trajs[j] = loc, ta, tb
        cur = cur.with_plan(RobotPlan(plan.robot_id, plan.circuit, plan.edges, tuple(locs),
                                      tuple(trajs), plan.modes))
        changed = True
    return cur if changed else None


def subheur_change_path(instance: Instance, tup: CellTuple, rng: random.Random) -> Optional[CellTuple]:
    """Redraw some go-through locations of a random robot, then repair compatibility."""
    robot = rng.choice(instance.robots)
    plan = tup.plan(robot.id)
    multi = [i for i, v in enumerate(plan.circuit) if len(robot.statics[v].locations) > 1]
    if not multi:
        return None
    picked = rng.sample(multi, rng.randint(1, len(multi)))
    locs = list(plan.locations)
    for i in sorted(picked):
        locs[i] = rng.choice(robot.statics[plan.circuit[i]].locations).id
    trajs = []
    for i in range(len(plan.circuit)):
        t = fastest_trajectory(robot, plan.edges[i], locs[i - 1], locs[i])
        if t is None:
            return None
        trajs.append(t.id)
    new = RobotPlan(plan.robot_id, plan.circuit, plan.edges, tuple(locs), tuple(trajs), plan.modes)
    if plan_min_duration(robot, new) > instance.cycle_time + 1e-9:
        return None
    return fix_spatial_compatibility(instance, tup.with_plan(new))


# --------------------------------------------------------------- worker

class BudgetExhausted(Exception):
    pass


@dataclass
class WorkerState:
    """Search state of the tuple a worker is improving."""

    tuple: CellTuple
    evaluation: TupleEvaluation
    sub: int = 0
    idle: int = 0
    iterations: int = 0
    last_action: str = ""
    best_energy: float = math.inf

    def __post_init__(self):
        if self.evaluation.solution is not None and self.best_energy == math.inf:
            self.best_energy = self.evaluation.solution.total_energy

    @property
    def energy(self) -> float:
        return self.evaluation.solution.total_energy


class Worker:
    def __init__(self, instance: Instance, config: HeuristicConfig, worker_id: int,
                 offer: Callable[[Solution, CellTuple, int], None],
                 should_stop: Callable[[], bool]):
        self.instance = instance
        self.config = config
        self.worker_id = worker_id
        self.offer = offer
        self.should_stop = should_stop
        self.rng = random.Random(config.seed * 1_000_003 + worker_id)
        self.tabu = TabuList(config.tabu_tenure)
        self.cache: dict = {}
        self.lp_evaluations = 0
        self.cache_hits = 0
        self.consecutive_hits = 0
        self.tuples_processed = 0
        self.phi = config.phi_for(instance)
        self.last_switch: list = []

    def evaluate(self, tup: CellTuple) -> TupleEvaluation:
        if self.should_stop():
            raise BudgetExhausted
        key = tup.fingerprint()
        hit = self.cache.get(key)
        if hit is not None:
            self.cache_hits += 1
            self.consecutive_hits += 1
            return hit
        ev = evaluate_tuple(self.instance, tup, self.config.segments, self.config.formulation)
        self.lp_evaluations += ev.lp_calls
        self.consecutive_hits = 0
        if len(self.cache) < 200_000:
            self.cache[key] = ev
        if ev.feasible:
            ev.solution.metadata["solver"] = "heuristic"
            self.offer(ev.solution, tup, self.worker_id)
        return ev

    def modify(self, name: str, state: WorkerState) -> Optional[CellTuple]:
        sol = state.evaluation.solution
        self.tabu.tick()
        self.last_switch = []
        if name == "power_mode":
            return subheur_power_mode(self.instance, state.tuple, sol, self.tabu, self.last_switch)
        if name == "change_locations":
            return subheur_change_locations(self.instance, state.tuple, sol, self.config.segments)
        return subheur_change_path(self.instance, state.tuple, self.rng)

    def process_tuple(self, tup: CellTuple) -> Optional[WorkerState]:
        self.tuples_processed += 1
        ev = self.evaluate(tup)
        if not ev.feasible:
            return None
        state = WorkerState(tup, ev)
        while state.idle < self.phi:
            worker_iterate(self, state)
        return state


def _forbid_switch(worker: Worker) -> None:
    # a rejected mode switch is not proposed again while it is tabu
    for v, mode in worker.last_switch:
        worker.tabu.add(v, mode)


def worker_iterate(worker: Worker, state: WorkerState) -> WorkerState:
    """One modification of the current tuple followed by its evaluation.

    Failed or non-improving steps keep the last feasible tuple and move to
    the next sub-heuristic; an improvement above ``rho`` over the best
    energy seen on the tuple resets the idle counter.  Random path changes are accepted even when worse.
    """
    name = SUB_HEURISTICS[state.sub]
    state.iterations += 1
    cand = worker.modify(name, state)
    if cand is None or cand.fingerprint() == state.tuple.fingerprint():
        state.last_action = "noop"
        state.sub = (state.sub + 1) % len(SUB_HEURISTICS)
        state.idle += 1
        return state
    ev = worker.evaluate(cand)
    if not ev.feasible:
        state.last_action = "rollback"
        _forbid_switch(worker)
        state.sub = (state.sub + 1) % len(SUB_HEURISTICS)
        state.idle += 1
        return state
    old = state.energy
    new = ev.solution.total_energy
    # significance is measured against the best energy seen on this tuple so
    # that accepted diversification moves cannot reset the counter in a cycle
    gain = (state.best_energy - new) / max(abs(state.best_energy), 1e-12)
    state.best_energy = min(state.best_energy, new)
    if new < old or name == "change_path":
        state.tuple, state.evaluation = cand, ev
        state.last_action = "accept"
    else:
        state.last_action = "reject"
        _forbid_switch(worker)
    if gain > worker.config.rho:
        state.idle = 0
    else:
        state.idle += 1
        state.sub = (state.sub + 1) % len(SUB_HEURISTICS)
    return state


# -------------------------------------------------------------- control

def _alternatives_for_robot(args):
    robot, ct, seed, limit = args
    g = build_search_graph(robot)
    alts, exhausted = enumerate_alternatives(g, ct, random.Random(seed), limit)
    if not alts:
        alts, exhausted = enumerate_alternatives(g, ct, None, None)
    return robot.id, alts, exhausted


class _Control:
    def __init__(self, instance: Instance, config: HeuristicConfig, t0: float, progress_cb=None):
        self.instance = instance
        self.config = config
        self.t0 = t0
        self.rng = random.Random(config.seed)
        self.pool = ElitePool(config.elite_capacity, locked=config.worker_count > 1)
        self.best_energy = math.inf
        self.progress: list[ProgressEvent] = []
        self.progress_cb = progress_cb
        self.tuples: list[CellTuple] = []
        self.alternatives: dict = {}
        self.rejections = 0
        self.failed_generations = 0
        self.evaluations = lambda: 0

    def offer(self, solution: Solution, tup: CellTuple, worker_id: int) -> None:
        energy = solution.total_energy
        worst = self.pool.energies()
        if len(worst) >= self.pool.capacity and energy >= worst[-1] and energy >= self.best_energy:
            return
        if not check_solution(self.instance, solution).feasible:
            self.rejections += 1
            return
        self.pool.offer(solution, tup)
        if energy < self.best_energy:
            self.best_energy = energy
            ev = ProgressEvent(time.perf_counter() - self.t0, energy, worker_id, self.evaluations())
            self.progress.append(ev)
            if self.progress_cb is not None:
                self.progress_cb(ev)

    def refill(self, n: int) -> list[CellTuple]:
        elite = [t for _, t in self.pool.entries()]
        out = []
        for i in range(n):
            if elite and i % 2 == 1:
                tup = combine_elites(self.instance, elite, self.rng, self.alternatives)
            else:
                tup = generate_tuple(self.instance, self.alternatives, self.rng)
            if tup is None:
                self.failed_generations += 1
            else:
                out.append(tup)
        return out


def optimize(instance: Instance, config: Optional[HeuristicConfig] = None,
             progress: Optional[Callable[[ProgressEvent], None]] = None) -> RunReport:
    """Search for the minimum-energy schedule of a cell."""
    config = config or HeuristicConfig()
    t0 = time.perf_counter()
    ctl = _Control(instance, config, t0, progress)
    jobs = [(r, instance.cycle_time, config.seed * 7919 + k, config.alternatives_limit)
            for k, r in enumerate(instance.robots)]
    if config.worker_count > 1:
        with mp.get_context("fork").Pool(min(config.worker_count, len(jobs))) as pool:
            found = pool.map(_alternatives_for_robot, jobs)
    else:
        found = [_alternatives_for_robot(j) for j in jobs]
    evidence = []
    for rid, alts, exhausted in found:
        ctl.alternatives[rid] = alts
        if not alts and exhausted:
            evidence.append(f"robot {rid}: exhaustive enumeration found no operation order "
                            f"fitting the cycle time {instance.cycle_time:g}")
    if evidence:
        return RunReport(None, [0] * config.worker_count, [0] * config.worker_count, 0,
                         time.perf_counter() - t0, True, evidence, [], "proven infeasible")
    if config.worker_count == 1:
        return _run_inline(instance, config, ctl, t0)
    return _run_parallel(instance, config, ctl, t0)


def _run_inline(instance: Instance, config: HeuristicConfig, ctl: _Control, t0: float) -> RunReport:
    deadline = t0 + config.time_limit
    reason = [""]
    worker: Worker

    def should_stop() -> bool:
        if config.deterministic:
            if worker.lp_evaluations >= config.eval_budget:
                reason[0] = "evaluation budget"
                return True
        elif time.perf_counter() >= deadline:
            reason[0] = "time limit"
            return True
        if worker.consecutive_hits >= config.stall_limit or ctl.failed_generations >= config.stall_limit:
            reason[0] = "search space exhausted"
            return True
        return False

    worker = Worker(instance, config, 0, ctl.offer, should_stop)
    ctl.evaluations = lambda: worker.lp_evaluations
    batch = 2 * config.worker_count
    try:
        while not should_stop():
            if not ctl.tuples:
                ctl.tuples = ctl.refill(batch)
                if not ctl.tuples:
                    continue
            worker.process_tuple(ctl.tuples.pop(0))
    except BudgetExhausted:
        pass
    return RunReport(ctl.pool.best(), [worker.lp_evaluations], [worker.cache_hits], worker.tuples_processed,
                     time.perf_counter() - t0, False, [], ctl.progress, reason[0], ctl.rejections)


def _worker_main(instance, config, wid, tasks, results, stop, deadline):
    def offer(sol, tup, w):
        results.put(("sol", w, sol, tup, worker.lp_evaluations))

    def should_stop():
        return stop.is_set() or time.perf_counter() >= deadline

    worker = Worker(instance, config, wid, offer, should_stop)
    try:
        while not should_stop():
            try:
                tup = tasks.get(timeout=0.05)
            except queue.Empty:
                continue
            results.put(("took", wid))
            worker.process_tuple(tup)
    except BudgetExhausted:
        pass
    results.put(("stats", wid, worker.lp_evaluations, worker.cache_hits, worker.tuples_processed))


def _run_parallel(instance: Instance, config: HeuristicConfig, ctl: _Control, t0: float) -> RunReport:
    ctx = mp.get_context("fork")
    tasks, results, stop = ctx.Queue(), ctx.Queue(), ctx.Event()
    deadline = t0 + config.time_limit
    nw = config.worker_count
    evals = [0] * nw
    ctl.evaluations = lambda: sum(evals)
    procs = [ctx.Process(target=_worker_main, args=(instance, config, w, tasks, results, stop, deadline),
                         daemon=True) for w in range(nw)]
    for p in procs:
        p.start()
    queued = 0
    stats: dict[int, tuple] = {}
    while time.perf_counter() < deadline:
        if queued < nw:
            for tup in ctl.refill(2 * nw):
                tasks.put(tup)
                queued += 1
        try:
            msg = results.get(timeout=0.02)
        except queue.Empty:
            continue
        if msg[0] == "took":
            queued -= 1
        elif msg[0] == "sol":
            evals[msg[1]] = msg[4]
            ctl.offer(msg[2], msg[3], msg[1])
        elif msg[0] == "stats":
            stats[msg[1]] = msg[2:]
    stop.set()
    end = time.perf_counter() + 10.0
    while len(stats) < nw and time.perf_counter() < end:
        try:
            msg = results.get(timeout=0.1)
        except queue.Empty:
            continue
        if msg[0] == "sol":
            ctl.offer(msg[2], msg[3], msg[1])
        elif msg[0] == "stats":
            stats[msg[1]] = msg[2:]
    wall = time.perf_counter() - t0
    for p in procs:
        p.join(timeout=1.0)
        if p.is_alive():
            p.terminate()
    lp_evals = [stats.get(w, (evals[w], 0, 0))[0] for w in range(nw)]
    hits = [stats.get(w, (0, 0, 0))[1] for w in range(nw)]
    tuples = sum(stats.get(w, (0, 0, 0))[2] for w in range(nw))
    return RunReport(ctl.pool.best(), lp_evals, hits, tuples, wall, False, [], ctl.progress,
                     "time limit", ctl.rejections)


def infeasibility_proof(report: RunReport) -> bool:
    return report.infeasibility_proof
