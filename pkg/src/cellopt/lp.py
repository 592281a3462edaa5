"""Embedded LP solver: bounded-variable primal simplex on a dense tableau.

Each row ``a.x (<=|>=|=) b`` gets a slack ``s = b - a.x`` whose bounds encode
the relation.  Phase 1 minimises the sum of bound infeasibilities of the
basic variables starting from any basis, which makes warm starts after
added rows or tightened bounds straightforward.  Pricing is Dantzig's rule
with a permanent switch to Bland's rule after a long run of degenerate
pivots.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LE, GE, EQ = "<=", ">=", "="

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
STALLED = "stalled"

_PRIMAL_TOL = 1e-9
_DUAL_TOL = 1e-9
_PIVOT_TOL = 1e-9
_DEGENERATE_SWITCH = 1000
_REFACTOR_EVERY = 100

_BASIC, _LOWER, _UPPER, _FREE, _FIXED = 0, 1, 2, 3, 4


@dataclass
class LinearProgram:
    """``min c.x + offset`` subject to rows and variable bounds."""

    c: np.ndarray
    A: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    col_names: tuple[str, ...] = ()
    row_names: tuple[str, ...] = ()
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.asarray(self.A, dtype=float).reshape(len(self.senses), len(self.c))
        self.b = np.asarray(self.b, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        m, n = self.A.shape
        if not self.col_names:
            self.col_names = tuple(f"x{j}" for j in range(n))
        if not self.row_names:
            self.row_names = tuple(f"r{i}" for i in range(m))
        if len(self.col_names) != n or len(self.row_names) != m:
            raise ValueError("name lists do not match the matrix shape")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("coefficients must be finite")
        if np.any(self.lb > self.ub):
            j = int(np.argmax(self.lb > self.ub))
            raise ValueError(f"inconsistent bounds for {self.col_names[j]}")
        for s in self.senses:
            if s not in (LE, GE, EQ):
                raise ValueError(f"unknown row sense {s!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass(frozen=True)
class Basis:
    """Basic columns and nonbasic-at-upper columns, keyed by name.

    Slack columns are named ``row:<row name>``.
    """

    basic: tuple[str, ...]
    at_upper: frozenset = frozenset()
    rows: frozenset = frozenset()


@dataclass
class LpResult:
    status: str
    objective: float = float("nan")
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    farkas: Optional[np.ndarray] = None
    iterations: int = 0
    wall_time: float = 0.0
    basis: Optional[Basis] = None
    warm_started: bool = False
    info: dict = field(default_factory=dict)


class _Tableau:
    def __init__(self, lp: LinearProgram):
        m, n = lp.A.shape
        self.m, self.n = m, n
        self.M = np.hstack([lp.A, np.eye(m)])
        lo_s = np.empty(m)
        hi_s = np.empty(m)
        for i, s in enumerate(lp.senses):
            lo_s[i], hi_s[i] = {LE: (0.0, np.inf), GE: (-np.inf, 0.0), EQ: (0.0, 0.0)}[s]
        self.lo = np.concatenate([lp.lb, lo_s])
        self.hi = np.concatenate([lp.ub, hi_s])
        self.cost = np.concatenate([lp.c, np.zeros(m)])
        self.b = lp.b
        self.names = list(lp.col_names) + [f"row:{r}" for r in lp.row_names]


def _initial_state(tab: _Tableau, basis: Optional[Basis], cost: np.ndarray):
    m, n = tab.m, tab.n
    N = n + m
    basic = None
    at_upper = set()
    if basis is not None:
        pos = {name: j for j, name in enumerate(tab.names)}
        cols = [pos[nm] for nm in basis.basic if nm in pos]
        # rows added since the basis was taken get their slack basic
        have = set(cols)
        for i in range(m):
            j = n + i
            if j not in have and tab.names[j] not in basis.rows:
                cols.append(j)
                have.add(j)
        if len(cols) == m and len(have) == m:
            if np.linalg.matrix_rank(tab.M[:, cols]) == m:
                basic = cols
                at_upper = {pos[nm] for nm in basis.at_upper if nm in pos}
    warm = basic is not None
    if basic is None:
        basic = list(range(n, n + m))
        # boxed columns start at their cheaper bound
        at_upper = {j for j in range(n) if cost[j] < 0 and np.isfinite(tab.hi[j])}
    x = np.zeros(N)
    state = np.full(N, _LOWER, dtype=np.int8)
    state[basic] = _BASIC
    for j in np.flatnonzero(state != _BASIC):
        lo, hi = tab.lo[j], tab.hi[j]
        if lo == hi:
            state[j], x[j] = _FIXED, lo
        elif j in at_upper and np.isfinite(hi):
            state[j], x[j] = _UPPER, hi
        elif np.isfinite(lo):
            state[j], x[j] = _LOWER, lo
        elif np.isfinite(hi):
            state[j], x[j] = _UPPER, hi
        else:
            state[j], x[j] = _FREE, 0.0
    return basic, x, state, warm


def _solve(lp: LinearProgram, basis: Optional[Basis] = None, max_iter: int = 10 ** 6) -> LpResult:
    t0 = time.perf_counter()
    tab = _Tableau(lp)
    m, n = tab.m, tab.n
    N = n + m
    if m == 0:
        return _finish_empty(lp, tab, t0)
    basic, x, state, warm = _initial_state(tab, basis, tab.cost)
    basic = np.asarray(basic)
    lo, hi = tab.lo, tab.hi
    width = hi - lo

    def refactor():
        Binv = np.linalg.inv(tab.M[:, basic])
        T = Binv @ tab.M
        nb = state != _BASIC
        x[basic] = Binv @ (tab.b - tab.M[:, nb] @ x[nb])
        return T

    T = refactor()
    bland = False
    degenerate_run = 0
    it = 0
    since_refactor = 0
    status = None
    while True:
        if it >= max_iter:
            status = STALLED
            break
        xb = x[basic]
        lob, hib = lo[basic], hi[basic]
        below = xb < lob - _PRIMAL_TOL
        above = xb > hib + _PRIMAL_TOL
        phase = 1 if (below.any() or above.any()) else 2
        if phase == 1:
            cvec = np.zeros(N)
            cvec[basic] = np.where(below, -1.0, np.where(above, 1.0, 0.0))
        else:
            cvec = tab.cost
        d = cvec - cvec[basic] @ T
        d[basic] = 0.0

        elig = (((state == _LOWER) & (d < -_DUAL_TOL)) | ((state == _UPPER) & (d > _DUAL_TOL))
                | ((state == _FREE) & (np.abs(d) > _DUAL_TOL)))
        cand = np.flatnonzero(elig)
        if cand.size == 0:
            status = INFEASIBLE if phase == 1 else OPTIMAL
            break
        if bland:
            j = int(cand[0])
        else:
            # largest reduced cost; among ties prefer the column that can move furthest
            score = np.abs(d[cand])
            top = cand[score >= score.max() * (1 - 1e-12)]
            j = int(top[np.argmax(width[top])]) if top.size > 1 else int(top[0])
        direction = 1.0 if d[j] < 0 else -1.0
        alpha = direction * T[:, j]          # basic values move by -theta * alpha

        # ratio test: first breakpoint of any basic variable
        limit = np.full(m, np.inf)
        bound = np.zeros(m)
        dec = alpha > _PIVOT_TOL
        inc = alpha < -_PIVOT_TOL
        with np.errstate(invalid="ignore", divide="ignore"):
            r = dec & above                      # falls back to its upper bound
            limit[r], bound[r] = (xb[r] - hib[r]) / alpha[r], hib[r]
            r = dec & ~above & ~below & np.isfinite(lob)
            limit[r], bound[r] = np.maximum(xb[r] - lob[r], 0.0) / alpha[r], lob[r]
            r = inc & below                      # rises to its lower bound
            limit[r], bound[r] = (lob[r] - xb[r]) / -alpha[r], lob[r]
            r = inc & ~above & ~below & np.isfinite(hib)
            limit[r], bound[r] = np.maximum(hib[r] - xb[r], 0.0) / -alpha[r], hib[r]
        theta = float(limit.min())
        flip = hi[j] - lo[j]

        if flip <= theta:
            if not np.isfinite(flip):
                status = UNBOUNDED if phase == 2 else STALLED
                break
            x[j] += direction * flip
            x[basic] -= flip * alpha
            state[j] = _UPPER if direction > 0 else _LOWER
            it += 1
            degenerate_run = 0
            continue

        ties = np.flatnonzero(limit <= theta + 1e-12)
        if bland:
            leave = int(ties[np.argmin(basic[ties])])
        else:
            leave = int(ties[np.argmax(np.abs(alpha[ties]))])
        if theta <= 1e-12:
            degenerate_run += 1
            if degenerate_run > _DEGENERATE_SWITCH:
                bland = True
        else:
            degenerate_run = 0
        x[j] += direction * theta
        x[basic] -= theta * alpha
        k_out = int(basic[leave])
        x[k_out] = bound[leave]
        if lo[k_out] == hi[k_out]:
            state[k_out] = _FIXED
        else:
            state[k_out] = _LOWER if bound[leave] == lo[k_out] else _UPPER
        state[j] = _BASIC
        col = T[:, j].copy()
        piv_row = T[leave] / col[leave]
        T -= np.outer(col, piv_row)
        T[leave] = piv_row
        basic[leave] = j
        it += 1
        since_refactor += 1
        if since_refactor >= _REFACTOR_EVERY:
            T = refactor()
            since_refactor = 0

    res = LpResult(status, iterations=it, warm_started=warm)
    res.basis = Basis(tuple(tab.names[k] for k in basic),
                      frozenset(tab.names[j] for j in np.flatnonzero(state == _UPPER)),
                      frozenset(tab.names[n:]))
    if status == OPTIMAL:
        T = refactor()
        Binv = T[:, n:]
        xs = np.minimum(np.maximum(x[:n], lp.lb), lp.ub)
        res.x = xs
        y = tab.cost[basic] @ Binv
        res.duals = y
        res.reduced_costs = lp.c - y @ lp.A
        res.objective = float(lp.c @ xs + lp.offset)
    elif status == INFEASIBLE:
        Binv = T[:, n:]
        xb = x[basic]
        cb = np.where(xb < lo[basic] - _PRIMAL_TOL, -1.0, np.where(xb > hi[basic] + _PRIMAL_TOL, 1.0, 0.0))
        res.farkas = cb @ Binv
    elif status == UNBOUNDED:
        res.objective = -np.inf
    res.wall_time = time.perf_counter() - t0
    return res


def _finish_empty(lp, tab, t0):
    # no rows: each variable independently at its cheapest bound
    xs = np.empty(tab.n)
    for j in range(tab.n):
        c, lo, hi = lp.c[j], lp.lb[j], lp.ub[j]
        if c > 0:
            xs[j] = lo
        elif c < 0:
            xs[j] = hi
        else:
            xs[j] = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
        if not np.isfinite(xs[j]):
            return LpResult(UNBOUNDED, -np.inf, wall_time=time.perf_counter() - t0)
    return LpResult(OPTIMAL, float(lp.c @ xs + lp.offset), xs, np.zeros(0), lp.c.copy(),
                    wall_time=time.perf_counter() - t0, basis=Basis(()))


def solve_lp(lp: LinearProgram, max_iter: int = 10 ** 6) -> LpResult:
    """Cold solve from the all-slack basis."""
    return _solve(lp, None, max_iter)


def warm_solve(lp: LinearProgram, basis: Optional[Basis], max_iter: int = 10 ** 6) -> LpResult:
    """Solve starting from ``basis`` (columns matched by name).

    Rows added since the basis was recorded enter with their slack basic.
    An unusable basis silently falls back to a cold start.
    """
    return _solve(lp, basis, max_iter)


def verify_farkas(lp: LinearProgram, ray: Sequence[float], tol: float = 1e-7) -> bool:
    """Check an infeasibility certificate: ``ray.b`` exceeds ``max ray.[A I] z`` over the bounds."""
    m, n = lp.A.shape
    ray = np.asarray(ray, dtype=float)
    g = np.concatenate([ray @ lp.A, ray])
    lo_s = np.array([{LE: 0.0, GE: -np.inf, EQ: 0.0}[s] for s in lp.senses])
    hi_s = np.array([{LE: np.inf, GE: 0.0, EQ: 0.0}[s] for s in lp.senses])
    lo = np.concatenate([lp.lb, lo_s])
    hi = np.concatenate([lp.ub, hi_s])
    sup = 0.0
    for gj, l, h in zip(g, lo, hi):
        if abs(gj) <= 1e-12:
            continue
        bound = h if gj > 0 else l
        if not np.isfinite(bound):
            return False
        sup += gj * bound
    return float(ray @ lp.b) - sup > tol * max(1.0, abs(sup))


class LpBuilder:
    """Incremental construction of a LinearProgram by name."""

    def __init__(self):
        self.col_names: list[str] = []
        self.cost: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.rows: list[tuple[str, dict, str, float]] = []
        self.offset = 0.0
        self._index: dict[str, int] = {}

    def var(self, name: str, lb: float = 0.0, ub: float = np.inf, cost: float = 0.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate column {name}")
        self._index[name] = len(self.col_names)
        self.col_names.append(name)
        self.cost.append(cost)
        self.lb.append(lb)
        self.ub.append(ub)
        return self._index[name]

    def index(self, name: str) -> int:
        return self._index[name]

    def row(self, name: str, coeffs: dict, sense: str, rhs: float) -> None:
        self.rows.append((name, coeffs, sense, rhs))

    def build(self) -> LinearProgram:
        m, n = len(self.rows), len(self.col_names)
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        names = []
        for i, (name, coeffs, sense, rhs) in enumerate(self.rows):
            for j, v in coeffs.items():
                A[i, j] += v
            b[i] = rhs
            senses.append(sense)
            names.append(name)
        return LinearProgram(np.array(self.cost), A, tuple(senses), b, np.array(self.lb), np.array(self.ub),
                             tuple(self.col_names), tuple(names), self.offset)
