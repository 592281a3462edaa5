"""Command-line interface.

Exit codes: 0 success, 1 input error, 2 no solution (or an infeasible
solution for ``check``), 3 instance proven infeasible.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import json
import os
import statistics
import sys
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from .bounds import instance_lower_bound
from .constants import DEFAULT_SEGMENTS
from .generator import PRESETS, GeneratorConfig, generate_instance, preset
from .heuristic import HeuristicConfig, optimize
from .io import ParseError, dumps, parse_solution, read_instance, serialize_instance, serialize_solution
from .milp import build_milp, export_lp_file
from .model import InstanceError, validate_instance
from .solution import check_solution

EXIT_OK, EXIT_INPUT, EXIT_NO_SOLUTION, EXIT_INFEASIBLE = 0, 1, 2, 3


class InputError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load(path: str, validate: bool = True):
    try:
        return read_instance(path, validate)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    except InstanceError as exc:
        raise InputError(f"{path}: invalid instance\n" + "\n".join(f"  {v}" for v in exc.violations)) from None
    except (ParseError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _write(path: str, data: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from None


def _threads(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("CELLOPT_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"CELLOPT_THREADS must be an integer, got {env!r}") from None
    return 1


# ------------------------------------------------------------------ commands

def cmd_generate(args) -> int:
    overrides = {}
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"{args.config}: {exc}") from None
        if not isinstance(overrides, dict):
            raise InputError(f"{args.config}: expected a JSON object")
        unknown = set(overrides) - set(GeneratorConfig.field_names())
        if unknown:
            raise InputError(f"unknown generator fields: {', '.join(sorted(unknown))}")
        for k, v in overrides.items():
            if isinstance(v, list):
                overrides[k] = tuple(tuple(x) if isinstance(x, list) else x for x in v)
    try:
        if args.preset:
            cfg = preset(args.preset, args.seed, **overrides)
        else:
            cfg = GeneratorConfig(seed=args.seed, name=overrides.pop("name", f"generated_{args.seed}"), **overrides)
        inst = generate_instance(cfg)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    _write(args.output, serialize_instance(inst))
    acts = sum(len(r.static_activities) + len(r.dynamic_activities) for r in inst.robots)
    print(f"{inst.name}: {len(inst.robots)} robots, {acts} activities, cycle time {inst.cycle_time:g} s")
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = _load(args.instance, validate=False)
    problems = validate_instance(inst)
    if problems:
        for p in problems:
            print(p)
        return EXIT_INPUT
    print(f"{args.instance}: valid ({len(inst.robots)} robots)")
    return EXIT_OK


def _heuristic_config(args, threads: int) -> HeuristicConfig:
    try:
        return HeuristicConfig(time_limit=args.time_limit, phi_max=args.phi_max, worker_count=threads,
                               segments=args.segments, seed=args.seed, deterministic=args.deterministic,
                               eval_budget=args.eval_budget)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_optimize(args) -> int:
    inst = _load(args.instance)
    cfg = _heuristic_config(args, _threads(args.threads))
    stream = open(args.progress, "w") if args.progress else None
    try:
        if stream:
            stream.write("time_s,energy_J,worker_id\n")

        def on_progress(ev):
            if stream:
                stream.write(f"{ev.time_s:.6f},{ev.energy:.17g},{ev.worker_id}\n")
                stream.flush()

        report = optimize(inst, cfg, on_progress)
    finally:
        if stream:
            stream.close()
    summary = report.summary(timing=not args.deterministic)
    if args.output and report.best is not None:
        _write(args.output, serialize_solution(report.best))
    report_path = args.report or (os.path.splitext(args.output)[0] + ".report.json" if args.output else None)
    if report_path:
        _write(report_path, dumps(summary))
    if report.infeasibility_proof:
        print("instance proven infeasible")
        for line in report.evidence:
            print(f"  {line}")
        return EXIT_INFEASIBLE
    if report.best is None:
        print(f"no feasible solution found ({report.total_evaluations} LP evaluations)")
        return EXIT_NO_SOLUTION
    print(f"best energy {report.best.total_energy:.6f} J "
          f"(exact {report.best.exact_total_energy:.6f} J), {report.total_evaluations} LP evaluations")
    return EXIT_OK


def cmd_export(args) -> int:
    inst = _load(args.instance)
    model = build_milp(inst, args.segments)
    _write(args.output, export_lp_file(model))
    print(f"{len(model.var_names)} variables, {len(model.rows)} constraints")
    return EXIT_OK


def cmd_bound(args) -> int:
    inst = _load(args.instance)
    rep = instance_lower_bound(inst, args.segments, args.budget)
    for rid, val in rep.per_robot.items():
        print(f"{rid}: {val:.6f} J ({rep.methods[rid]})")
    print(f"total: {rep.total:.6f} J")
    return EXIT_INFEASIBLE if rep.total == float("inf") else EXIT_OK


def cmd_check(args) -> int:
    inst = _load(args.instance)
    try:
        with open(args.solution, "rb") as fh:
            sol = parse_solution(fh.read())
    except OSError as exc:
        raise InputError(f"{args.solution}: {exc.strerror or exc}") from None
    except ParseError as exc:
        raise InputError(f"{args.solution}: {exc}") from None
    rep = check_solution(inst, sol)
    if rep.feasible:
        print("feasible")
        return EXIT_OK
    for item in rep.violations:
        print(item)
    return EXIT_NO_SOLUTION


@dataclass
class BenchRow:
    instance: str
    runs: int
    best: float
    avg: float
    worst: float
    lower_bound: float
    gap_percent: float
    feasible_runs: int
    wall_time: float


def bench_row(name: str, energies: Sequence[Optional[float]], bound: float, wall: float) -> BenchRow:
    ok = [e for e in energies if e is not None]
    nan = float("nan")
    best = min(ok) if ok else nan
    gap = 100.0 * (best - bound) / bound if ok and 0 < bound < float("inf") else nan
    return BenchRow(name, len(energies), best, statistics.fmean(ok) if ok else nan, max(ok) if ok else nan,
                    bound, gap, len(ok), wall)


def cmd_bench(args) -> int:
    paths = sorted(glob.glob(args.instances))
    if not paths:
        raise InputError(f"no instance matches {args.instances!r}")
    threads = _threads(args.threads)
    rows = []
    for path in paths:
        inst = _load(path)
        t0 = time.perf_counter()
        energies = []
        for k in range(args.runs):
            cfg = dataclasses.replace(_heuristic_config(args, threads), seed=args.seed + k)
            rep = optimize(inst, cfg)
            energies.append(rep.best.total_energy if rep.best else None)
        bound = instance_lower_bound(inst, args.segments).total
        rows.append(bench_row(inst.name, energies, bound, time.perf_counter() - t0))
    fields = [f.name for f in dataclasses.fields(BenchRow)]
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([getattr(r, f) if isinstance(getattr(r, f), (str, int)) else f"{getattr(r, f):.6f}"
                        for f in fields])
    print(f"{len(rows)} rows written to {args.output}")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _add_search_flags(p) -> None:
    p.add_argument("--time-limit", type=float, default=60.0, help="wall-clock limit in seconds")
    p.add_argument("--threads", type=int, default=None, help="worker count (default: $CELLOPT_THREADS or 1)")
    p.add_argument("--phi-max", type=int, default=None, help="idle iterations before leaving a tuple")
    p.add_argument("--segments", type=int, default=DEFAULT_SEGMENTS, help="linear pieces per energy function")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true",
                   help="single worker with an LP-evaluation budget instead of the time limit")
    p.add_argument("--eval-budget", type=int, default=50_000, help="LP evaluations in deterministic mode")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cellopt", description="Energy optimisation of cyclic robotic cells.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a random instance")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="JSON file with generator settings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("instance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("optimize", help="run the heuristic")
    p.add_argument("instance")
    _add_search_flags(p)
    p.add_argument("-o", "--output", help="solution file")
    p.add_argument("--report", help="run report file (default: next to the solution)")
    p.add_argument("--progress", help="CSV stream of improvements: time_s,energy_J,worker_id")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("export", help="write the mixed-integer model in LP format")
    p.add_argument("instance")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--segments", type=int, default=DEFAULT_SEGMENTS)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bound", help="lower bound on the optimal energy")
    p.add_argument("instance")
    p.add_argument("--segments", type=int, default=DEFAULT_SEGMENTS)
    p.add_argument("--budget", type=int, default=10 ** 5, help="per-robot combinations for exact bounds")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("check", help="verify a solution against an instance")
    p.add_argument("instance")
    p.add_argument("solution")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="repeated runs with best/avg/worst and bound gap as CSV")
    p.add_argument("instances", help="glob of instance files")
    p.add_argument("--runs", type=int, default=10)
    _add_search_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
