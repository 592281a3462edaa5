"""Acceptance criteria, one test each; a PASS/FAIL/SKIP line per criterion
is printed in the terminal summary.  Artifacts go to ``acceptance_output/``.
"""
from __future__ import annotations

import csv
import math
import os
import random
import statistics
import subprocess
import sys
import tempfile
import time

import numpy as np
import pytest

from cellopt import heuristic
from cellopt.bounds import exhaustive_oracle, instance_lower_bound
from cellopt.cli import main as cli_main
from cellopt.generator import generate_instance, preset
from cellopt.heuristic import HeuristicConfig, optimize, substitution_interval, substitution_optimum
from cellopt.milp import build_milp, export_lp_file
from cellopt.model import EnergyFunction, Trajectory
from cellopt.reduced import compute_gamma
from cellopt.solution import check_solution
from conftest import ACCEPTANCE_LINES, fixture_path
from test_reduced import brute_gamma

OUT = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "acceptance_output")


def report(number: int, ok, detail: str) -> None:
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
    ACCEPTANCE_LINES.append(f"{status} criterion {number:>2}: {detail}")


def rel_diff(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


@pytest.fixture(scope="module")
def tiny_oracles():
    out = []
    for seed in range(20):
        inst = generate_instance(preset("tiny", seed))
        out.append((inst, exhaustive_oracle(inst)))
    return out


def test_c01_oracle_optimality(tiny_oracles):
    t0 = time.perf_counter()
    misses = []
    for seed, (inst, oracle) in enumerate(tiny_oracles):
        rep = optimize(inst, HeuristicConfig(deterministic=True, seed=seed, eval_budget=50_000))
        if oracle.feasible != (rep.best is not None):
            misses.append(f"seed {seed}: feasibility differs")
        elif oracle.feasible and rel_diff(rep.best.total_energy, oracle.objective) > 1e-6:
            misses.append(f"seed {seed}: {rep.best.total_energy:.6f} vs {oracle.objective:.6f}")
    wall = time.perf_counter() - t0
    ok = not misses and wall < 600
    feas = sum(o.feasible for _, o in tiny_oracles)
    report(1, ok, f"{20 - len(misses)}/20 tiny instances match the oracle ({feas} feasible), {wall:.0f} s"
           + (f"; misses: {misses}" if misses else ""))
    assert ok, misses


def test_c02_lower_bound_validity():
    t0 = time.perf_counter()
    os.makedirs(OUT, exist_ok=True)
    path = os.path.join(OUT, "bound_gaps.csv")
    rows, broken = [], []
    for seed in range(100):
        inst = generate_instance(preset("small", seed))
        bound = instance_lower_bound(inst)
        rep = optimize(inst, HeuristicConfig(deterministic=True, seed=seed, eval_budget=5_000))
        best = rep.best.total_energy if rep.best else math.nan
        gap = 100.0 * (best - bound.total) / bound.total if rep.best and math.isfinite(bound.total) else math.nan
        if rep.best is not None and bound.total > best + 1e-6 * abs(best):
            broken.append(seed)
        rows.append((seed, bound.total, best, gap, "/".join(sorted(set(bound.methods.values())))))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "lower_bound", "best_energy", "gap_percent", "bound_method"])
        for r in rows:
            w.writerow([r[0], f"{r[1]:.6f}", f"{r[2]:.6f}", f"{r[3]:.4f}", r[4]])
    wall = time.perf_counter() - t0
    gaps = [r[3] for r in rows if not math.isnan(r[3])]
    ok = not broken and wall < 1800
    report(2, ok, f"bound <= best on {100 - len(broken)}/100 small instances ({len(gaps)} solved), "
           f"mean gap {statistics.fmean(gaps):.2f}%, median {statistics.median(gaps):.2f}%, "
           f"{wall:.0f} s; gaps in acceptance_output/bound_gaps.csv")
    assert ok, broken


def test_c03_milp_equivalence(tiny_oracles):
    try:
        import highspy
    except ImportError:
        report(3, None, "no external MILP solver available")
        pytest.skip("highspy not installed")
    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        for seed, (inst, oracle) in enumerate(tiny_oracles):
            path = os.path.join(tmp, f"tiny_{seed}.lp")
            with open(path, "wb") as fh:
                fh.write(export_lp_file(build_milp(inst)))
            h = highspy.Highs()
            h.silent()
            h.readModel(path)
            h.setOptionValue("mip_rel_gap", 1e-9)
            h.run()
            status = h.modelStatusToString(h.getModelStatus())
            if not oracle.feasible:
                if status != "Infeasible":
                    bad.append(f"seed {seed}: solver says {status}, oracle infeasible")
                continue
            value = h.getInfo().objective_function_value
            if status != "Optimal" or rel_diff(value, oracle.objective) > 1e-4:
                bad.append(f"seed {seed}: {status} {value} vs {oracle.objective}")
    report(3, not bad, f"HiGHS on 20 exported models agrees with the oracle within 1e-4 on {20 - len(bad)}/20"
           + (f"; {bad}" if bad else ""))
    assert not bad, bad


def test_c04_gamma_correctness(load_fixture):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    cases = []
    for name in ("tiny", "small", "medium", "example_cell"):
        inst = load_fixture(name)
        pairs = sorted({(c.activity_1, c.activity_2) for c in inst.collisions})
        if pairs:
            cases.append((inst, pairs))
    mismatches = 0
    for k in range(1000):
        inst, pairs = cases[k % len(cases)]
        acts = {a for p in pairs for a in p}
        ct = inst.cycle_time
        start = {a: rng.uniform(-ct, 2 * ct) for a in acts}
        dur = {a: rng.uniform(0.0, ct / 2) for a in acts}
        if k % 10 == 0:               # force exact ties between the pairs
            for a in acts:
                start[a], dur[a] = 1.0, 2.0
        g = compute_gamma(inst, pairs, start, dur)
        ref_gamma, ref_triple = brute_gamma(inst, pairs, start, dur)
        if g.gamma != ref_gamma or g.triple != ref_triple:
            mismatches += 1
    wall = time.perf_counter() - t0
    ok = mismatches == 0 and wall < 60
    report(4, ok, f"compute_gamma equals brute force on {1000 - mismatches}/1000 timings, {wall:.1f} s")
    assert ok


def test_c05_feasibility_soundness(monkeypatch):
    emitted = []
    original = heuristic._Control.offer

    def recording_offer(self, solution, tup, worker_id):
        emitted.append((self.instance, solution))
        return original(self, solution, tup, worker_id)

    monkeypatch.setattr(heuristic._Control, "offer", recording_offer)
    t0 = time.perf_counter()
    bests = 0
    for k in range(200):
        kind = ("tiny", "small")[k % 2]
        inst = generate_instance(preset(kind, 5000 + k))
        rep = optimize(inst, HeuristicConfig(deterministic=True, seed=k, eval_budget=300, stall_limit=200))
        if rep.best is not None:
            bests += 1
            emitted.append((inst, rep.best))
    bad = [i for i, (inst, sol) in enumerate(emitted) if not check_solution(inst, sol).feasible]
    wall = time.perf_counter() - t0
    report(5, not bad, f"{len(emitted) - len(bad)}/{len(emitted)} emitted solutions from 200 runs "
           f"({bests} with a best solution) pass check_solution, {wall:.0f} s")
    assert not bad


def _trajectories(count):
    seed = 0
    out = []
    while len(out) < count:
        inst = generate_instance(preset("s5", seed))
        for r in inst.robots:
            for e in r.dynamic_activities:
                out.extend(t for t in e.trajectories if t.d_max > t.d_min)
        seed += 1
    return out[:count]


def test_c06_pwl_fidelity():
    trajs = _trajectories(1000)
    levels = (10, 20, 40, 80)
    worst = {b: 0.0 for b in levels}
    under = at_bp = non_monotone = 0
    for t in trajs:
        xs = np.linspace(t.d_min, t.d_max, 1000)
        f = t.energy(xs)
        prev = math.inf
        for b in levels:
            pwl = t.pwl(b)
            fh = pwl(xs)
            if np.any(fh < f - 1e-9):
                under += 1
            bp = pwl.breakpoints
            if np.any(np.abs(pwl(bp) - t.energy(bp)) > 1e-9 * np.maximum(1.0, np.abs(t.energy(bp)))):
                at_bp += 1
            gap = float(np.max((fh - f) / f))
            worst[b] = max(worst[b], gap)
            if gap > prev + 1e-12:
                non_monotone += 1
            prev = gap
    shrinking = all(worst[a] > worst[b] for a, b in zip(levels, levels[1:]))
    ok = under == 0 and at_bp == 0 and non_monotone == 0 and shrinking
    os.makedirs(OUT, exist_ok=True)
    with open(os.path.join(OUT, "pwl_fidelity.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segments", "max_relative_overestimate"])
        for b in levels:
            w.writerow([b, f"{worst[b]:.6e}"])
    report(6, ok, "1000 trajectories: chords >= f everywhere, exact at breakpoints; max relative "
           "over-approximation " + ", ".join(f"|B|={b}: {worst[b]:.3e}" for b in levels))
    assert ok, (under, at_bp, non_monotone, worst)


def test_c07_golden_section():
    t0 = time.perf_counter()
    rng = random.Random(77)

    def traj(tid):
        c = tuple(rng.uniform(lo, hi) for lo, hi in ((5, 40), (0, 60), (40, 400), (0, 60), (0, 10)))
        lo = rng.uniform(0.5, 2.0)
        return Trajectory(tid, "a", "b", lo, lo * rng.uniform(1.5, 4.0), EnergyFunction(c))

    worst = 0.0
    for _ in range(200):
        t_in, t_out = traj("in"), traj("out")
        k = rng.uniform(t_in.d_min + t_out.d_min, t_in.d_max + t_out.d_max)
        lo, hi = substitution_interval(t_in, t_out, k)
        _, val = substitution_optimum(t_in, t_out, k)
        grid = np.linspace(lo, hi, 100_000)
        ref = float(np.min(t_in.pwl(10)(grid) + t_out.pwl(10)(k - grid)))
        worst = max(worst, rel_diff(val, ref))
    wall = time.perf_counter() - t0
    ok = worst <= 1e-3 and wall < 60
    report(7, ok, f"200 substitution subproblems, worst relative difference to the grid {worst:.2e}, {wall:.1f} s")
    assert ok


def test_c08_parallel_throughput():
    cores = os.cpu_count() or 1
    inst = generate_instance(preset("m8", 0))
    limit = 60.0 if cores >= 4 else 10.0
    rates = {}
    for workers in (1, 4):
        rep = optimize(inst, HeuristicConfig(time_limit=limit, worker_count=workers, seed=1))
        rates[workers] = rep.lp_evaluations_per_second
    ratio = rates[4] / rates[1] if rates[1] > 0 else math.inf
    detail = (f"4-worker/1-worker LP evaluation rate {ratio:.2f}x "
              f"({rates[1]:.1f}/s vs {rates[4]:.1f}/s, t_max {limit:.0f} s, {cores} cores)")
    if cores < 4:
        report(8, None, f"needs >= 4 cores, found {cores}; measured {detail} (soft criterion)")
        pytest.skip(f"only {cores} cores")
    ok = ratio >= 2.5
    report(8, ok, detail + ("" if ok else " (soft criterion)"))
    if not ok:
        pytest.xfail("throughput below 2.5x; soft criterion")


def test_c09_convergence():
    inst = generate_instance(preset("m8", 0))
    events = []
    rep = optimize(inst, HeuristicConfig(time_limit=60.0, seed=2), events.append)
    energies = [e.energy for e in events]
    first = events[0].time_s if events else math.inf
    monotone = all(b <= a for a, b in zip(energies, energies[1:]))
    ok = rep.best is not None and first <= 60.0 and monotone and energies[-1] == rep.best.total_energy
    report(9, ok, f"M8 instance: first feasible after {first:.2f} s, {len(events)} improvements, "
           f"monotone={monotone}, best {energies[-1] if energies else math.nan:.1f} J")
    assert ok


def test_c10_determinism(tmp_path):
    different = []
    for seed in range(10):
        blobs = []
        for run in range(2):
            out = tmp_path / f"s{seed}_{run}.json"
            code = cli_main(["optimize", fixture_path("tiny"), "--deterministic", "--threads", "1",
                             "--seed", str(seed), "-o", str(out)])
            assert code == 0
            blobs.append(out.read_bytes())
        if blobs[0] != blobs[1]:
            different.append(seed)
    report(10, not different, f"byte-identical solution files for {10 - len(different)}/10 seeds")
    assert not different


def test_c11_infeasibility_proof():
    res = subprocess.run([sys.executable, "-m", "cellopt.cli", "optimize", fixture_path("infeasible"),
                          "--deterministic"], capture_output=True, text=True)
    ok = res.returncode == 3 and "exhaustive enumeration found no operation order" in res.stdout
    report(11, ok, f"infeasible fixture: exit code {res.returncode}, evidence: "
           f"{res.stdout.strip().splitlines()[-1] if res.stdout.strip() else '-'}")
    assert ok
