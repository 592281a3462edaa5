"""Alternative operation orders of a robot.

A robot's Hamiltonian circuits are found as Hamiltonian paths in a graph
where the home activity is split into a start node (its outgoing moves) and
an end node (its incoming moves).  Nodes and arcs are weighted by their
minimal durations.  A path's length counts every traversed arc and every
node except the start node, so it equals the fastest possible circuit
duration over the chosen order.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import Robot

START = "<start>"
END = "<end>"


@dataclass(frozen=True)
class SearchGraph:
    robot: Robot
    nodes: tuple[str, ...]                       # START first, END last
    node_weight: tuple[float, ...]
    arcs: dict                                   # (i, j) -> (weight, dynamic activity id)

    @property
    def start(self) -> int:
        return 0

    @property
    def end(self) -> int:
        return len(self.nodes) - 1

    def successors(self, i: int) -> list[int]:
        return self._succ[i]

    @property
    def _succ(self) -> list[list[int]]:
        cached = self.__dict__.get("_succ_cache")
        if cached is None:
            cached = [[] for _ in self.nodes]
            for (i, j) in sorted(self.arcs):
                cached[i].append(j)
            self.__dict__["_succ_cache"] = cached
        return cached


@dataclass(frozen=True)
class PathChoice:
    """Locations per circuit static and trajectories per entering move."""

    locations: tuple[str, ...]
    trajectories: tuple[str, ...]
    duration: float


@dataclass(frozen=True)
class Alternative:
    """An operation order: statics in visiting order, home last.

    ``edges[i]`` is the dynamic activity entering ``circuit[i]``; the first
    one leaves the home activity.
    """

    robot_id: str
    circuit: tuple[str, ...]
    edges: tuple[str, ...]
    fastest_duration: float
    fastest_locations: tuple[str, ...]
    fastest_trajectories: tuple[str, ...]


def build_search_graph(robot: Robot) -> SearchGraph:
    others = [v.id for v in robot.static_activities if v.id != robot.home]
    nodes = (START, *others, END)
    index = {v: i + 1 for i, v in enumerate(others)}
    weights = [0.0] + [robot.min_static_duration(v) for v in others] + [robot.min_static_duration(robot.home)]
    arcs = {}
    for e in robot.dynamic_activities:
        i = 0 if e.from_activity == robot.home else index[e.from_activity]
        j = len(nodes) - 1 if e.to_activity == robot.home else index[e.to_activity]
        arcs[(i, j)] = (min(t.d_min for t in e.trajectories), e.id)
    return SearchGraph(robot, nodes, tuple(weights), arcs)


def all_pairs_min_duration(g: SearchGraph) -> np.ndarray:
    """Floyd-Warshall over arc weights plus destination node weights."""
    n = len(g.nodes)
    u = np.full((n, n), np.inf)
    np.fill_diagonal(u, 0.0)
    for (i, j), (w, _) in g.arcs.items():
        if i != j:
            u[i, j] = min(u[i, j], w + g.node_weight[j])
    for k in range(n):
        u = np.minimum(u, u[:, k:k + 1] + u[k:k + 1, :])
    return u


def fastest_location_sequence(robot: Robot, circuit: Sequence[str], ct: Optional[float] = None,
                              pinned: Optional[dict] = None) -> Optional[PathChoice]:
    """Fastest closed path through the locations of an operation order.

    Dynamic programming over the layered location graph, repeated for every
    location of the first activity so the closing move is exact.  ``pinned``
    restricts activities to given location sets.  Returns ``None`` when no
    closed path exists or its duration exceeds ``ct``.
    """
    h = len(circuit)
    edges = []
    for i in range(h):
        e = robot.edge_between.get((circuit[i - 1], circuit[i]))
        if e is None:
            return None
        edges.append(e)
    node_w = [robot.min_static_duration(v) for v in circuit]
    cand = []
    for v in circuit:
        locs = [loc.id for loc in robot.statics[v].locations]
        if pinned and v in pinned:
            locs = [l for l in locs if l in pinned[v]]
        cand.append(locs)

    # fastest trajectory per (edge, from_loc, to_loc)
    fast = []
    for e in edges:
        best = {}
        for t in e.trajectories:
            key = (t.from_location, t.to_location)
            if key not in best or t.d_min < best[key].d_min:
                best[key] = t
        fast.append(best)

    best_total, best_choice = np.inf, None
    last = circuit[-1]
    for l0 in cand[0]:
        # dist[loc] = (duration, back pointer) after reaching circuit[i] at loc
        layers = [{l0: (node_w[0], None, None)}]
        for i in range(1, h):
            cur = {}
            for lp, (dp, _, _) in layers[-1].items():
                for ln in cand[i]:
                    t = fast[i].get((lp, ln))
                    if t is None:
                        continue
                    val = dp + t.d_min + node_w[i]
                    if ln not in cur or val < cur[ln][0]:
                        cur[ln] = (val, lp, t.id)
            layers.append(cur)
            if not cur:
                break
        if len(layers) < h or not layers[-1]:
            continue
        # close from the last activity back to l0 via edges[0]
        for ll, (dl, _, _) in layers[-1].items():
            if h == 1:
                t = fast[0].get((l0, l0))
                if t is None:
                    continue
                total = node_w[0] + t.d_min
            else:
                t = fast[0].get((ll, l0))
                if t is None:
                    continue
                total = dl + t.d_min
            if total < best_total - 1e-12:
                locs = [None] * h
                trajs = [None] * h
                locs[h - 1] = ll
                trajs[0] = t.id
                for i in range(h - 1, 0, -1):
                    _, lp, tid = layers[i][locs[i]]
                    trajs[i] = tid
                    locs[i - 1] = lp
                best_total, best_choice = total, (tuple(locs), tuple(trajs))
    if best_choice is None:
        return None
    if ct is not None and best_total > ct + 1e-9:
        return None
    return PathChoice(best_choice[0], best_choice[1], float(best_total))


def path_to_circuit(g: SearchGraph, path: Sequence[int]) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Convert a START..END node path to (circuit, entering edges)."""
    robot = g.robot
    circuit = tuple(g.nodes[i] for i in path[1:-1]) + (robot.home,)
    edges = tuple(g.arcs[(a, b)][1] for a, b in zip(path, path[1:]))
    return circuit, edges


def enumerate_alternatives(g: SearchGraph, ct: float, rng: Optional[random.Random] = None,
                           limit: Optional[int] = None) -> tuple[list[Alternative], bool]:
    """Randomised depth-first search for circuits that fit the cycle time.

    A partial path is pruned when some unvisited node is unreachable or
    cannot be visited and the end still reached within ``ct``.  Returns the
    alternatives found and whether the search space was exhausted (with an
    empty result this proves no feasible order exists).
    """
    u = all_pairs_min_duration(g)
    n = len(g.nodes)
    end = n - 1
    robot = g.robot
    full = (1 << n) - 1
    found: list[Alternative] = []
    dead: dict[tuple[int, int], float] = {}
    tol = 1e-9

    def feasible_bound(node: int, visited: int, length: float) -> bool:
        for w in range(1, end):
            if not visited >> w & 1:
                if length + u[node, w] + u[w, end] > ct + tol:
                    return False
        return length + u[node, end] <= ct + tol

    stopped = False

    def dfs(node: int, visited: int, length: float, path: list[int]) -> tuple[bool, bool]:
        """Returns (found a circuit, some completion was rejected by its locations).

        Location feasibility depends on the whole circuit, so subtrees with
        such rejections are never memoised as dead.
        """
        nonlocal stopped
        key = (node, visited)
        if key in dead and length >= dead[key] - tol:
            return False, False
        if not feasible_bound(node, visited, length):
            dead[key] = min(dead.get(key, np.inf), length)
            return False, False
        children = list(g.successors(node))
        if rng is not None:
            rng.shuffle(children)
        any_found = tainted = False
        for nxt in children:
            if stopped:
                return True, tainted
            if visited >> nxt & 1:
                continue
            w = g.arcs[(node, nxt)][0] + g.node_weight[nxt]
            if nxt == end:
                if visited | (1 << end) != full or length + w > ct + tol:
                    continue
                circuit, edges = path_to_circuit(g, path + [end])
                choice = fastest_location_sequence(robot, circuit, ct)
                if choice is None:
                    tainted = True
                    continue
                found.append(Alternative(robot.id, circuit, edges, choice.duration,
                                         choice.locations, choice.trajectories))
                any_found = True
                if limit is not None and len(found) >= limit:
                    stopped = True
                    return True, tainted
                continue
            path.append(nxt)
            f, t = dfs(nxt, visited | (1 << nxt), length + w, path)
            any_found |= f
            tainted |= t
            path.pop()
        if not any_found and not tainted and not stopped:
            dead[key] = min(dead.get(key, np.inf), length)
        return any_found, tainted

    dfs(0, 1, 0.0, [0])
    return found, not stopped
