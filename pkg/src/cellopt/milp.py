"""Complete mixed-integer model of a cell and its LP-format export.

Constraint tags name the family each row belongs to (``eq2`` ... ``eq19``).
Variables get short index-based names so the exported text is valid for
any LP-format reader; ``MilpModel`` keeps the mapping back to the instance.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .constants import DEFAULT_SEGMENTS, FEAS_TOL
from .lp import EQ, GE, LE, LinearProgram
from .model import Instance, energy_eval
from .solution import Solution
from .tuples import CellTuple, RobotPlan

CONTINUOUS, BINARY = "continuous", "binary"
TAGS = tuple(f"eq{i}" for i in range(2, 20))


class MilpAssignmentError(ValueError):
    """A variable assignment that does not describe a consistent cell schedule."""


@dataclass
class MilpRow:
    name: str
    tag: str
    coeffs: dict[int, float]
    sense: str
    rhs: float


@dataclass
class MilpModel:
    var_names: list[str] = field(default_factory=list)
    var_kinds: list[str] = field(default_factory=list)
    rows: list[MilpRow] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    big_w: float = 0.0
    big_c: float = 0.0
    segments: int = DEFAULT_SEGMENTS
    # (kind, instance keys...) -> variable index
    keys: dict[tuple, int] = field(default_factory=dict)

    def add_var(self, key: tuple, name: str, kind: str) -> int:
        j = len(self.var_names)
        self.var_names.append(name)
        self.var_kinds.append(kind)
        self.keys[key] = j
        return j

    def add_row(self, tag: str, coeffs: dict[int, float], sense: str, rhs: float) -> None:
        merged: dict[int, float] = {}
        for j, v in coeffs.items():
            merged[j] = merged.get(j, 0.0) + v
        merged = {j: v for j, v in merged.items() if v != 0.0}
        self.rows.append(MilpRow(f"{tag}_{len(self.rows)}", tag, merged, sense, float(rhs)))

    def count(self, kind: str) -> int:
        return sum(1 for k in self.keys if k[0] == kind)

    def tag_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.tag] = out.get(r.tag, 0) + 1
        return out

    def index(self, *key) -> int:
        return self.keys[key]


def upper_bound_energy(instance: Instance, segments: int = DEFAULT_SEGMENTS) -> float:
    """Single big-M for the energy rows.

    Covers the static consumption over a whole cycle, every linearised move
    energy over its edge's duration range, and the intercepts an unexecuted
    optional move sees at zero duration.
    """
    ct = instance.cycle_time
    best = 0.0
    for r in instance.robots:
        for v in r.static_activities:
            for loc in v.locations:
                best = max(best, max(loc.power.values()) * ct)
        for e in r.dynamic_activities:
            lo = min(t.d_min for t in e.trajectories)
            hi = max(t.d_max for t in e.trajectories)
            for t in e.trajectories:
                pwl = t.pwl(segments)
                k, q = np.asarray(pwl.k), np.asarray(pwl.q)
                vals = [k * lo + q, k * hi + q]
                if e.optional:
                    vals.append(q)
                best = max(best, float(np.max(vals)))
    return best if best > 0 else 1.0


def _nname(n: int) -> str:
    return f"m{-n}" if n < 0 else f"p{n}"


def build_milp(instance: Instance, segments: int = DEFAULT_SEGMENTS) -> MilpModel:
    ct = instance.cycle_time
    n_rob = len(instance.robots)
    m = MilpModel(segments=segments)
    m.big_w = upper_bound_energy(instance, segments)
    m.big_c = 2 * n_rob * ct

    acts: list[str] = []
    for r in instance.robots:
        acts.extend(v.id for v in r.static_activities)
        acts.extend(e.id for e in r.dynamic_activities)
    aidx = {a: i for i, a in enumerate(acts)}
    for kind in ("W", "s", "d"):
        for a in acts:
            m.add_var((kind, a), f"{kind}_a{aidx[a]}", CONTINUOUS)
    for r in instance.robots:
        for v in r.static_activities:
            for j, loc in enumerate(v.locations):
                m.add_var(("x", v.id, loc.id), f"x_a{aidx[v.id]}_l{j}", BINARY)
        for v in r.static_activities:
            for j, mode in enumerate(r.power_modes):
                m.add_var(("z", v.id, mode.id), f"z_a{aidx[v.id]}_m{j}", BINARY)
        for e in r.dynamic_activities:
            for j, t in enumerate(e.trajectories):
                m.add_var(("y", e.id, t.id), f"y_a{aidx[e.id]}_t{j}", BINARY)
        for e in r.dynamic_activities:
            if e.optional:
                m.add_var(("w", e.id, e.to_activity), f"w_a{aidx[e.id]}", BINARY)
    for o in range(len(instance.collisions)):
        for n in range(-n_rob, n_rob + 1):
            m.add_var(("c", o, n), f"c_o{o}_n{_nname(n)}", BINARY)

    W = lambda a: m.index("W", a)  # noqa: E731
    S = lambda a: m.index("s", a)  # noqa: E731
    D = lambda a: m.index("d", a)  # noqa: E731
    for a in acts:
        m.objective[W(a)] = 1.0

    bw = m.big_w
    for r in instance.robots:
        # energy of static activities
        for v in r.static_activities:
            for loc in v.locations:
                for mode in r.power_modes:
                    p = loc.power[mode.id]
                    m.add_row("eq2", {D(v.id): p, W(v.id): -1.0, m.index("z", v.id, mode.id): bw,
                                      m.index("x", v.id, loc.id): bw}, LE, 2 * bw)
        # energy of moves
        for e in r.dynamic_activities:
            for t in e.trajectories:
                pwl = t.pwl(segments)
                y = m.index("y", e.id, t.id)
                for k, q in zip(pwl.k, pwl.q):
                    m.add_row("eq3", {D(e.id): k, W(e.id): -1.0, y: bw}, LE, bw - q)
        for v in r.static_activities:
            m.add_row("eq4", {m.index("x", v.id, loc.id): 1.0 for loc in v.locations}, EQ, 1.0)
        for v in r.static_activities:
            m.add_row("eq5", {m.index("z", v.id, mode.id): 1.0 for mode in r.power_modes}, EQ, 1.0)
        for e in r.dynamic_activities:
            if not e.optional:
                m.add_row("eq6", {m.index("y", e.id, t.id): 1.0 for t in e.trajectories}, EQ, 1.0)
        for flow_tag, adj, end in (("eq7", r.incoming, "to_location"), ("eq8", r.outgoing, "from_location")):
            for v in r.static_activities:
                for loc in v.locations:
                    row = {m.index("x", v.id, loc.id): -1.0}
                    for e in adj.get(v.id, ()):
                        for t in e.trajectories:
                            if getattr(t, end) == loc.id:
                                row[m.index("y", e.id, t.id)] = 1.0
                    m.add_row(flow_tag, row, EQ, 0.0)
        # mandatory precedences
        for v in r.static_activities:
            if v.id == r.home:
                continue
            for e in r.outgoing.get(v.id, ()):
                m.add_row("eq9", {S(e.id): 1.0, S(v.id): -1.0, D(v.id): -1.0}, EQ, 0.0)
        for e in r.dynamic_activities:
            if not e.optional:
                m.add_row("eq9", {S(e.to_activity): 1.0, S(e.id): -1.0, D(e.id): -1.0}, EQ, 0.0)
        for e in r.outgoing.get(r.home, ()):
            m.add_row("eq10", {S(e.id): 1.0, S(r.home): -1.0, D(r.home): -1.0}, EQ, -ct)
        # optional precedences
        for e in r.dynamic_activities:
            if e.optional:
                w = m.index("w", e.id, e.to_activity)
                row = {m.index("y", e.id, t.id): 1.0 for t in e.trajectories}
                row[w] = -1.0
                m.add_row("eq11", row, EQ, 0.0)
        for tag, sign in (("eq12", 1.0), ("eq13", -1.0)):
            for e in r.dynamic_activities:
                if not e.optional:
                    continue
                w = m.index("w", e.id, e.to_activity)
                v = e.to_activity
                # eq12: s_v - s_e - d_e - CT w >= -CT ; eq13: s_v - s_e - d_e + CT w <= CT
                m.add_row(tag, {S(v): 1.0, S(e.id): -1.0, D(e.id): -1.0, w: -sign * ct},
                          GE if sign > 0 else LE, -sign * ct)
        for v in r.static_activities:
            for mode in r.power_modes:
                lo = max(v.d_min, mode.min_switch_time)
                m.add_row("eq14", {D(v.id): 1.0, m.index("z", v.id, mode.id): -lo}, GE, 0.0)
            m.add_row("eq14", {D(v.id): 1.0}, LE, v.d_max)
        for e in r.dynamic_activities:
            for t in e.trajectories:
                y = m.index("y", e.id, t.id)
                m.add_row("eq15", {D(e.id): 1.0, y: -t.d_min}, GE, 0.0)
                m.add_row("eq15", {D(e.id): 1.0, y: ct}, LE, t.d_max + ct)

    for lag in instance.time_lags:
        m.add_row("eq16", {S(lag.to_activity): 1.0, S(lag.from_activity): -1.0}, GE,
                  lag.length - ct * lag.height)
    for q in instance.compat_pairs:
        first, second = q.partners
        for (va, vb, table) in ((q.activity_1, q.activity_2, first), (q.activity_2, q.activity_1, second)):
            for la in sorted(table):
                row = {m.index("x", va, la): 1.0}
                for lb in sorted(table[la]):
                    row[m.index("x", vb, lb)] = -1.0
                m.add_row("eq17", row, LE, 0.0)

    def u(a, item):
        return m.index("x", a, item) if instance.is_static(a) else m.index("y", a, item)

    big = m.big_c
    for o, col in enumerate(instance.collisions):
        a1, a2 = col.activity_1, col.activity_2
        u1, u2 = u(a1, col.item_1), u(a2, col.item_2)
        for n in range(-n_rob, n_rob + 1):
            c = m.index("c", o, n)
            # s2 + nCT + M(3 - c - u1 - u2) >= s1 + d1
            m.add_row("eq18", {S(a2): 1.0, S(a1): -1.0, D(a1): -1.0, c: -big, u1: -big, u2: -big},
                      GE, -n * ct - 3 * big)
            # s1 + M(2 + c - u1 - u2) >= s2 + d2 + nCT
            m.add_row("eq19", {S(a1): 1.0, S(a2): -1.0, D(a2): -1.0, c: big, u1: -big, u2: -big},
                      GE, n * ct - 2 * big)
    return m


# ---------------------------------------------------------------- LP text

def _num(x: float) -> str:
    return format(float(x), ".17g")


def _linear(terms, names) -> str:
    parts = []
    for j, v in terms:
        if v == 0.0:
            continue
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        coef = "" if mag == 1.0 else _num(mag) + " "
        parts.append(f"{sign} {coef}{names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _wrap(prefix: str, body: str, width: int = 200) -> list[str]:
    out, line = [], prefix
    for tok in body.split(" "):
        if len(line) + len(tok) + 1 > width and line.strip():
            out.append(line)
            line = "   "
        line = f"{line} {tok}" if line.strip() else f"{line}{tok}"
    out.append(line)
    return out


_SENSE = {LE: "<=", GE: ">=", EQ: "="}


def export_lp_file(model: MilpModel) -> bytes:
    """CPLEX LP text of the model, deterministic."""
    names = model.var_names
    lines = ["\\ cellopt cell model", "Minimize"]
    lines += _wrap(" obj:", _linear(sorted(model.objective.items()), names))
    lines.append("Subject To")
    for r in model.rows:
        lines += _wrap(f" {r.name}:", f"{_linear(sorted(r.coeffs.items()), names)} {_SENSE[r.sense]} {_num(r.rhs)}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        if model.var_kinds[j] == CONTINUOUS:
            lines.append(f" {name} >= 0")
    lines.append("Binary")
    for j, name in enumerate(names):
        if model.var_kinds[j] == BINARY:
            lines.append(f" {name}")
    lines.append("End")
    return ("\n".join(lines) + "\n").encode()


_BAD = re.compile(r"[^A-Za-z0-9_.]")


def _safe_names(raw, prefix: str) -> list[str]:
    out, seen = [], set()
    for i, n in enumerate(raw):
        s = _BAD.sub("_", n) if n else f"{prefix}{i}"
        if not s[0].isalpha():
            s = prefix + s
        while s in seen:
            s += "_"
        seen.add(s)
        out.append(s)
    return out


def write_lp_text(lp: LinearProgram) -> str:
    """LP-format text of a plain linear program (for inspecting reduced LPs)."""
    m, n = lp.shape
    cols = _safe_names(lp.col_names or [f"x{j}" for j in range(n)], "x")
    rows = _safe_names(lp.row_names or [f"r{i}" for i in range(m)], "r")
    lines = ["Minimize"]
    if lp.offset:
        lines.insert(0, f"\\ objective offset {_num(lp.offset)}")
    lines += _wrap(" obj:", _linear(list(enumerate(lp.c)), cols))
    lines.append("Subject To")
    for i in range(m):
        terms = [(j, lp.A[i, j]) for j in np.flatnonzero(lp.A[i])]
        lines += _wrap(f" {rows[i]}:", f"{_linear(terms, cols)} {_SENSE[lp.senses[i]]} {_num(lp.b[i])}")
    lines.append("Bounds")
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isinf(lo) and np.isinf(hi):
            lines.append(f" {cols[j]} free")
        else:
            lo_s = "-inf" if np.isinf(lo) else _num(lo)
            hi_s = "+inf" if np.isinf(hi) else _num(hi)
            lines.append(f" {lo_s} <= {cols[j]} <= {hi_s}")
    lines.append("End")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------- assignments

def evaluate_rows(model: MilpModel, values: Mapping[str, float], tol: float = FEAS_TOL) -> list[tuple[str, float]]:
    """Rows violated by an assignment with their violation amount."""
    x = np.array([float(values.get(n, 0.0)) for n in model.var_names])
    bad = []
    for r in model.rows:
        lhs = sum(v * x[j] for j, v in r.coeffs.items())
        scale = tol * max(1.0, abs(r.rhs))
        if r.sense == LE and lhs > r.rhs + scale:
            bad.append((r.name, lhs - r.rhs))
        elif r.sense == GE and lhs < r.rhs - scale:
            bad.append((r.name, r.rhs - lhs))
        elif r.sense == EQ and abs(lhs - r.rhs) > scale:
            bad.append((r.name, abs(lhs - r.rhs)))
    for j, n in enumerate(model.var_names):
        if x[j] < -tol:
            bad.append((f"bound:{n}", -x[j]))
        if model.var_kinds[j] == BINARY and min(abs(x[j]), abs(x[j] - 1)) > tol:
            bad.append((f"integrality:{n}", min(abs(x[j]), abs(x[j] - 1))))
    return bad


def row_slacks(model: MilpModel, values: Mapping[str, float], tags=("eq2", "eq3", "eq18", "eq19")) -> dict[str, float]:
    """Slack of every row with the given tags (nonnegative means satisfied)."""
    x = np.array([float(values.get(n, 0.0)) for n in model.var_names])
    out = {}
    for r in model.rows:
        if r.tag not in tags:
            continue
        lhs = sum(v * x[j] for j, v in r.coeffs.items())
        out[r.name] = r.rhs - lhs if r.sense == LE else lhs - r.rhs
    return out


def solution_to_assignment(instance: Instance, solution: Solution, model: MilpModel) -> dict[str, float]:
    """Variable values realising a solution in the model."""
    ct = instance.cycle_time
    names = model.var_names
    val = {n: 0.0 for n in names}

    def put(key, v):
        val[names[model.keys[key]]] = float(v)

    executed: dict[str, str] = {}
    for rid, steps in solution.steps.items():
        for st in steps:
            if st.is_static:
                put(("x", st.activity, st.location), 1)
                put(("z", st.activity, st.mode), 1)
            else:
                put(("y", st.activity, st.trajectory), 1)
                executed[st.activity] = st.trajectory
    segs = model.segments
    for r in instance.robots:
        for v in r.static_activities:
            put(("s", v.id), solution.start[v.id])
            put(("d", v.id), solution.duration[v.id])
            loc = next(s.location for s in solution.steps[r.id] if s.activity == v.id)
            mode = next(s.mode for s in solution.steps[r.id] if s.activity == v.id)
            put(("W", v.id), v.location_map[loc].power[mode] * solution.duration[v.id])
        for e in r.dynamic_activities:
            if e.id in executed:
                d = solution.duration[e.id]
                put(("s", e.id), solution.start[e.id])
                put(("d", e.id), d)
                t = e.trajectory_map[executed[e.id]]
                put(("W", e.id), t.pwl(segs)(min(max(d, t.d_min), t.d_max)))
                if e.optional:
                    put(("w", e.id, e.to_activity), 1)
            else:
                src = e.from_activity
                s = solution.start[src] + solution.duration[src] - (ct if src == r.home else 0.0)
                put(("s", e.id), s)
    sel = {}
    for steps in solution.steps.values():
        for st in steps:
            sel[st.activity] = st.location if st.is_static else st.trajectory
    for o, col in enumerate(instance.collisions):
        both = sel.get(col.activity_1) == col.item_1 and sel.get(col.activity_2) == col.item_2
        for n in range(-len(instance.robots), len(instance.robots) + 1):
            c = 0.0
            if both:
                a1, a2 = col.activity_1, col.activity_2
                ge = solution.start[a2] + n * ct - solution.start[a1] - solution.duration[a1]
                c = 1.0 if ge >= -FEAS_TOL else 0.0
            put(("c", o, n), c)
    return val


def lift_milp_solution(instance: Instance, values: Mapping[str, float], model: MilpModel,
                       segments: Optional[int] = None) -> Solution:
    """Solution described by a (for example externally solved) assignment."""
    segs = segments or model.segments

    def get(*key):
        return float(values.get(model.var_names[model.keys[key]], 0.0))

    def on(*key):
        return get(*key) > 0.5

    plans = []
    start, dur = {}, {}
    for r in instance.robots:
        loc_of, mode_of = {}, {}
        for v in r.static_activities:
            locs = [loc.id for loc in v.locations if on("x", v.id, loc.id)]
            if len(locs) != 1:
                raise MilpAssignmentError(f"{v.id}: {len(locs)} locations selected")
            modes = [mm.id for mm in r.power_modes if on("z", v.id, mm.id)]
            if len(modes) != 1:
                raise MilpAssignmentError(f"{v.id}: {len(modes)} power modes selected")
            loc_of[v.id], mode_of[v.id] = locs[0], modes[0]
        traj_of = {}
        for e in r.dynamic_activities:
            ts = [t.id for t in e.trajectories if on("y", e.id, t.id)]
            if len(ts) > 1 or (not ts and not e.optional):
                raise MilpAssignmentError(f"{e.id}: {len(ts)} trajectories selected")
            if ts:
                traj_of[e.id] = ts[0]
        circuit, edges = [], []
        cur = r.home
        for _ in range(len(r.static_activities)):
            out = [e for e in r.outgoing.get(cur, ()) if e.id in traj_of]
            if len(out) != 1:
                raise MilpAssignmentError(f"{cur}: {len(out)} executed outgoing moves")
            edges.append(out[0].id)
            cur = out[0].to_activity
            circuit.append(cur)
        if cur != r.home or sorted(circuit) != sorted(r.statics) or len(traj_of) != len(circuit):
            raise MilpAssignmentError(f"robot {r.id}: executed moves do not form a circuit")
        plans.append(RobotPlan(r.id, tuple(circuit), tuple(edges), tuple(loc_of[v] for v in circuit),
                               tuple(traj_of[e] for e in edges), tuple(mode_of[v] for v in circuit)))
        for a in (*circuit, *edges):
            start[a] = get("s", a)
            dur[a] = get("d", a)
    from .reduced import make_solution
    return make_solution(instance, CellTuple(tuple(plans)), start, dur, segs, {"solver": "milp"})


def milp_to_linear_program(model: MilpModel, fixed: Optional[Mapping[str, float]] = None) -> LinearProgram:
    """LP relaxation of the model, optionally with some variables fixed."""
    n = len(model.var_names)
    A = np.zeros((len(model.rows), n))
    for i, r in enumerate(model.rows):
        for j, v in r.coeffs.items():
            A[i, j] = v
    c = np.zeros(n)
    for j, v in model.objective.items():
        c[j] = v
    lb = np.zeros(n)
    ub = np.array([1.0 if k == BINARY else np.inf for k in model.var_kinds])
    for name, v in (fixed or {}).items():
        j = model.var_names.index(name)
        lb[j] = ub[j] = v
    return LinearProgram(c, A, [r.sense for r in model.rows], np.array([r.rhs for r in model.rows]), lb, ub,
                         col_names=list(model.var_names), row_names=[r.name for r in model.rows])
