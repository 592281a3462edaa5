"""Instance and solution JSON formats.

Instances use the ``cellopt/1`` format, solutions ``cellopt-solution/1``.
Output is deterministic: fixed key order, floats with 17 significant digits.
"""
from __future__ import annotations

import json
import math
from typing import Any, Union

from .model import (CollisionQuad, DynamicActivity, EnergyFunction, Instance, InstanceError, Location,
                    PowerMode, Robot, SpatialCompatPair, StaticActivity, TimeLag, Trajectory,
                    validate_instance)
from .solution import Solution, Step

INSTANCE_FORMAT = "cellopt/1"
SOLUTION_FORMAT = "cellopt-solution/1"


class ParseError(ValueError):
    """Malformed input; ``path`` locates the offending element."""

    def __init__(self, message: str, path: str = "$", line: int | None = None):
        self.path = path
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{path}{where}: {message}")


class SchemaError(ParseError):
    pass


# ---------------------------------------------------------------- writer

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x}")
    s = format(x, ".17g")
    if all(ch in "-0123456789" for ch in s):
        s += ".0"
    return s


def _dump(obj: Any, indent: int, level: int, out: list[str]) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + json.dumps(str(k), ensure_ascii=False) + ": ")
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(x, (int, float, str, bool)) for x in obj):
            out.append("[")
            for i, x in enumerate(obj):
                _dump(x, indent, level + 1, out)
                if i < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any, indent: int = 1) -> bytes:
    out: list[str] = []
    _dump(obj, indent, 0, out)
    out.append("\n")
    return "".join(out).encode("utf-8")


# ---------------------------------------------------------------- instance

def instance_to_dict(inst: Instance) -> dict:
    robots = []
    for r in inst.robots:
        robots.append({
            "id": r.id,
            "home": r.home,
            "modes": [{"id": m.id, "min_switch_time": float(m.min_switch_time)} for m in r.power_modes],
            "static_activities": [{
                "id": v.id,
                "d_min": float(v.d_min),
                "d_max": float(v.d_max),
                "locations": [{"id": loc.id, "power": {m: float(p) for m, p in loc.power.items()}}
                              for loc in v.locations],
            } for v in r.static_activities],
            "dynamic_activities": [{
                "id": e.id,
                "from": e.from_activity,
                "to": e.to_activity,
                "optional": bool(e.optional),
                "trajectories": [{
                    "id": t.id,
                    "from_loc": t.from_location,
                    "to_loc": t.to_location,
                    "d_min": float(t.d_min),
                    "d_max": float(t.d_max),
                    "energy_coeffs": [float(c) for c in t.energy.coeffs],
                } for t in e.trajectories],
            } for e in r.dynamic_activities],
        })
    return {
        "format": INSTANCE_FORMAT,
        "name": inst.name,
        "cycle_time": float(inst.cycle_time),
        "robots": robots,
        "time_lags": [{"from": g.from_activity, "to": g.to_activity, "length": float(g.length),
                       "height": int(g.height)} for g in inst.time_lags],
        "compat": [{"activity_1": q.activity_1, "activity_2": q.activity_2,
                    "pairs": [[a, b] for a, b in q.pairs]} for q in inst.compat_pairs],
        "collisions": [{"activity_1": c.activity_1, "item_1": c.item_1,
                        "activity_2": c.activity_2, "item_2": c.item_2} for c in inst.collisions],
    }


def serialize_instance(inst: Instance) -> bytes:
    return dumps(instance_to_dict(inst))


class _Reader:
    """Schema-checking accessor that reports JSON paths on failure."""

    def __init__(self, obj, path="$"):
        self.obj = obj
        self.path = path

    def obj_fields(self, required, optional=()):
        if not isinstance(self.obj, dict):
            raise SchemaError("expected an object", self.path)
        unknown = set(self.obj) - set(required) - set(optional)
        if unknown:
            raise SchemaError(f"unknown field(s) {sorted(unknown)}", self.path)
        for k in required:
            if k not in self.obj:
                raise SchemaError(f"missing required field '{k}'", f"{self.path}.{k}")

    def get(self, key):
        return _Reader(self.obj[key], f"{self.path}.{key}")

    def items(self):
        if not isinstance(self.obj, list):
            raise SchemaError("expected an array", self.path)
        return [_Reader(x, f"{self.path}[{i}]") for i, x in enumerate(self.obj)]

    def num(self, key=None):
        r = self.get(key) if key is not None else self
        v = r.obj
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError("expected a number", r.path)
        if not math.isfinite(v):
            raise SchemaError("expected a finite number", r.path)
        return float(v)

    def int(self, key):
        r = self.get(key)
        if isinstance(r.obj, bool) or not isinstance(r.obj, int):
            if isinstance(r.obj, float) and r.obj.is_integer():
                return int(r.obj)
            raise SchemaError("expected an integer", r.path)
        return r.obj

    def str(self, key=None):
        r = self.get(key) if key is not None else self
        if not isinstance(r.obj, str):
            raise SchemaError("expected a string", r.path)
        return r.obj

    def bool(self, key):
        r = self.get(key)
        if not isinstance(r.obj, bool):
            raise SchemaError("expected a boolean", r.path)
        return r.obj


def _load_json(data: Union[bytes, str]):
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not UTF-8: {exc}") from None
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", "$", exc.lineno) from None


def instance_from_dict(obj) -> Instance:
    root = _Reader(obj)
    root.obj_fields(["format", "cycle_time", "robots"], ["name", "time_lags", "compat", "collisions"])
    if root.str("format") != INSTANCE_FORMAT:
        raise SchemaError(f"unsupported format {root.obj['format']!r}", "$.format")
    robots = []
    for rr in root.get("robots").items():
        rr.obj_fields(["id", "home", "modes", "static_activities", "dynamic_activities"])
        modes = []
        for mr in rr.get("modes").items():
            mr.obj_fields(["id", "min_switch_time"])
            modes.append(PowerMode(mr.str("id"), mr.num("min_switch_time")))
        statics = []
        for vr in rr.get("static_activities").items():
            vr.obj_fields(["id", "d_min", "d_max", "locations"])
            locs = []
            for lr in vr.get("locations").items():
                lr.obj_fields(["id", "power"])
                pr = lr.get("power")
                if not isinstance(pr.obj, dict):
                    raise SchemaError("expected an object", pr.path)
                power = {k: pr.num(k) for k in pr.obj}
                locs.append(Location(lr.str("id"), power))
            statics.append(StaticActivity(vr.str("id"), vr.num("d_min"), vr.num("d_max"), tuple(locs)))
        dynamics = []
        for er in rr.get("dynamic_activities").items():
            er.obj_fields(["id", "from", "to", "trajectories"], ["optional"])
            trajs = []
            for tr in er.get("trajectories").items():
                tr.obj_fields(["id", "from_loc", "to_loc", "d_min", "d_max", "energy_coeffs"])
                cr = tr.get("energy_coeffs")
                coeffs = [c.num() for c in cr.items()]
                if len(coeffs) != 5:
                    raise SchemaError("expected exactly 5 coefficients", cr.path)
                trajs.append(Trajectory(tr.str("id"), tr.str("from_loc"), tr.str("to_loc"),
                                        tr.num("d_min"), tr.num("d_max"), EnergyFunction(tuple(coeffs))))
            optional = er.bool("optional") if "optional" in er.obj else False
            dynamics.append(DynamicActivity(er.str("id"), er.str("from"), er.str("to"), tuple(trajs), optional))
        robots.append(Robot(rr.str("id"), tuple(statics), tuple(dynamics), tuple(modes), rr.str("home")))

    lags = []
    if "time_lags" in root.obj:
        for gr in root.get("time_lags").items():
            gr.obj_fields(["from", "to", "length", "height"])
            lags.append(TimeLag(gr.str("from"), gr.str("to"), gr.num("length"), gr.int("height")))
    compat = []
    if "compat" in root.obj:
        for qr in root.get("compat").items():
            qr.obj_fields(["activity_1", "activity_2", "pairs"])
            pairs = []
            for pr in qr.get("pairs").items():
                items = pr.items()
                if len(items) != 2:
                    raise SchemaError("expected a pair of location ids", pr.path)
                pairs.append((items[0].str(), items[1].str()))
            compat.append(SpatialCompatPair(qr.str("activity_1"), qr.str("activity_2"), tuple(pairs)))
    colls = []
    if "collisions" in root.obj:
        for cr in root.get("collisions").items():
            cr.obj_fields(["activity_1", "item_1", "activity_2", "item_2"])
            colls.append(CollisionQuad(cr.str("activity_1"), cr.str("item_1"),
                                       cr.str("activity_2"), cr.str("item_2")))
    name = root.str("name") if "name" in root.obj else ""
    return Instance(root.num("cycle_time"), tuple(robots), tuple(lags), tuple(compat), tuple(colls), name)


def parse_instance(data: Union[bytes, str], validate: bool = True) -> Instance:
    """Parse an instance file; raises ParseError, SchemaError or InstanceError."""
    inst = instance_from_dict(_load_json(data))
    if validate:
        problems = validate_instance(inst)
        if problems:
            raise InstanceError(problems)
    return inst


def read_instance(path, validate: bool = True) -> Instance:
    with open(path, "rb") as fh:
        inst = parse_instance(fh.read(), validate)
    if not inst.name:
        import os
        object.__setattr__(inst, "name", os.path.splitext(os.path.basename(str(path)))[0])
    return inst


# ---------------------------------------------------------------- solution

def solution_to_dict(sol: Solution) -> dict:
    robots = []
    for rid, steps in sol.steps.items():
        items = []
        for st in steps:
            a = st.activity
            item = {"activity": a}
            if st.is_static:
                item["location"] = st.location
                item["mode"] = st.mode
            else:
                item["trajectory"] = st.trajectory
            item["start"] = float(sol.start[a])
            item["duration"] = float(sol.duration[a])
            item["energy"] = float(sol.energy[a])
            items.append(item)
        robots.append({"id": rid, "steps": items})
    return {
        "format": SOLUTION_FORMAT,
        "status": sol.status,
        "total_energy": float(sol.total_energy),
        "exact_total_energy": float(sol.exact_total_energy),
        "segments": int(sol.segments),
        "robots": robots,
        "metadata": sol.metadata,
    }


def serialize_solution(sol: Solution) -> bytes:
    return dumps(solution_to_dict(sol))


def solution_from_dict(obj) -> Solution:
    root = _Reader(obj)
    root.obj_fields(["format", "status", "total_energy", "segments", "robots"],
                    ["exact_total_energy", "metadata"])
    if root.str("format") != SOLUTION_FORMAT:
        raise SchemaError(f"unsupported format {root.obj['format']!r}", "$.format")
    steps, start, dur, energy = {}, {}, {}, {}
    for rr in root.get("robots").items():
        rr.obj_fields(["id", "steps"])
        lst = []
        for sr in rr.get("steps").items():
            if isinstance(sr.obj, dict) and "trajectory" in sr.obj:
                sr.obj_fields(["activity", "trajectory", "start", "duration", "energy"])
                st = Step(sr.str("activity"), trajectory=sr.str("trajectory"))
            else:
                sr.obj_fields(["activity", "location", "mode", "start", "duration", "energy"])
                st = Step(sr.str("activity"), location=sr.str("location"), mode=sr.str("mode"))
            lst.append(st)
            start[st.activity] = sr.num("start")
            dur[st.activity] = sr.num("duration")
            energy[st.activity] = sr.num("energy")
        steps[rr.str("id")] = lst
    meta = root.obj.get("metadata", {})
    if not isinstance(meta, dict):
        raise SchemaError("expected an object", "$.metadata")
    return Solution(steps, start, dur, energy, root.num("total_energy"), root.int("segments"),
                    root.str("status"), dict(meta))


def parse_solution(data: Union[bytes, str]) -> Solution:
    return solution_from_dict(_load_json(data))
