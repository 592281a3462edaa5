from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from cellopt.bounds import exhaustive_oracle
from cellopt.generator import generate_instance, preset
from cellopt.io import (ParseError, SchemaError, dumps, parse_instance, parse_solution, serialize_instance,
                        serialize_solution)
from cellopt.model import InstanceError


@given(st.integers(0, 2 ** 32), st.sampled_from(["tiny", "small"]))
def test_instance_round_trip_is_byte_stable(seed, kind):
    inst = generate_instance(preset(kind, seed))
    raw = serialize_instance(inst)
    back = parse_instance(raw)
    assert back == inst
    assert serialize_instance(back) == raw


def test_fixture_files_are_canonical(load_fixture):
    from conftest import fixture_path
    for name in ("tiny", "small", "medium", "example_cell", "infeasible"):
        with open(fixture_path(name), "rb") as fh:
            raw = fh.read()
        assert serialize_instance(parse_instance(raw)) == raw


def test_solution_round_trip(example_cell):
    sol = exhaustive_oracle(example_cell).solution
    raw = serialize_solution(sol)
    back = parse_solution(raw)
    assert serialize_solution(back) == raw
    assert back.total_energy == sol.total_energy
    assert back.selection_key() == sol.selection_key()


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_formatting_is_exact(x):
    assert json.loads(dumps({"x": x}))["x"] == x


def test_non_finite_floats_are_rejected():
    with pytest.raises(ValueError):
        dumps({"x": float("inf")})


def test_syntax_error_reports_line():
    with pytest.raises(ParseError) as info:
        parse_instance(b'{\n "format": "cellopt/1",\n oops\n}')
    assert info.value.line == 3


def test_schema_errors_carry_paths(example_cell):
    data = json.loads(serialize_instance(example_cell))
    data["robots"][1]["dynamic_activities"][0]["trajectories"][0]["energy_coeffs"] = [1, 2]
    with pytest.raises(SchemaError) as info:
        parse_instance(json.dumps(data))
    assert "robots[1]" in info.value.path and "energy_coeffs" in info.value.path

    data = json.loads(serialize_instance(example_cell))
    data["format"] = "other/9"
    with pytest.raises(SchemaError):
        parse_instance(json.dumps(data))

    data = json.loads(serialize_instance(example_cell))
    data["robots"][0]["surprise"] = 1
    with pytest.raises(SchemaError):
        parse_instance(json.dumps(data))

    data = json.loads(serialize_instance(example_cell))
    data["cycle_time"] = "fast"
    with pytest.raises(SchemaError):
        parse_instance(json.dumps(data))


def test_invalid_instance_raises_with_violations(example_cell):
    data = json.loads(serialize_instance(example_cell))
    data["cycle_time"] = 0.0
    with pytest.raises(InstanceError) as info:
        parse_instance(json.dumps(data))
    assert info.value.violations
    assert parse_instance(json.dumps(data), validate=False).cycle_time == 0.0


def test_non_utf8_input():
    with pytest.raises(ParseError):
        parse_instance(b"\xff\xfe")
