from __future__ import annotations

import random
import threading
from dataclasses import dataclass

import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from cellopt.generator import generate_instance, preset
from cellopt.graph import build_search_graph, enumerate_alternatives
from cellopt.tuples import (CellTuple, ElitePool, combine_elites, compat_violations, elite_circuits,
                            fix_spatial_compatibility, generate_tuple, plan_from_alternative, plan_is_consistent,
                            plan_min_duration)


def alternatives_of(instance):
    return {r.id: enumerate_alternatives(build_search_graph(r), instance.cycle_time)[0] for r in instance.robots}


@pytest.mark.parametrize("kind", ["tiny", "small", "s5"])
def test_generated_tuples_are_consistent(kind):
    made = 0
    for seed in range(10):
        inst = generate_instance(preset(kind, seed))
        alts = alternatives_of(inst)
        rng = random.Random(seed)
        for _ in range(5):
            tup = generate_tuple(inst, alts, rng)
            if tup is None:
                continue
            made += 1
            assert compat_violations(inst, tup) == 0
            for plan in tup.plans:
                robot = inst.robot_map[plan.robot_id]
                assert plan_is_consistent(robot, plan)
                assert plan_min_duration(robot, plan) <= inst.cycle_time + 1e-9
                assert set(plan.modes) == {robot.fastest_mode.id}
    assert made > 0


def test_missing_alternatives_give_no_tuple(tiny):
    alts = alternatives_of(tiny)
    alts[tiny.robots[0].id] = []
    assert generate_tuple(tiny, alts, random.Random(0)) is None


def test_compatibility_repair_on_example_cell(example_cell):
    alts = alternatives_of(example_cell)
    plans = []
    for robot in example_cell.robots:
        plans.append(plan_from_alternative(robot, alts[robot.id][0]))
    tup = CellTuple(tuple(plans))
    sel = tup.selected
    # fastest paths put v4 at l41 and v5 at l51, which the pair list forbids
    assert (sel["v4"], sel["v5"]) == ("l41", "l51")
    assert compat_violations(example_cell, tup) == 1
    fixed = fix_spatial_compatibility(example_cell, tup)
    assert fixed is not None and compat_violations(example_cell, fixed) == 0
    for plan in fixed.plans:
        assert plan_is_consistent(example_cell.robot_map[plan.robot_id], plan)


def test_tuple_helpers(example_cell):
    alts = alternatives_of(example_cell)
    plans = tuple(plan_from_alternative(r, alts[r.id][0]) for r in example_cell.robots)
    tup = CellTuple(plans)
    assert tup.plan("r2").circuit[-1] == "v7"
    with pytest.raises(KeyError):
        tup.plan("r9")
    other = plan_from_alternative(example_cell.robot_map["r1"], alts["r1"][1])
    swapped = tup.with_plan(other)
    assert swapped.plan("r1") == other and swapped.plan("r2") == tup.plan("r2")
    assert swapped.fingerprint() != tup.fingerprint()
    assert tup.mode_map["v1"] == "hold"
    assert [a for a, is_static, _ in tup.plan("r2").chronological() if is_static] == ["v5", "v6", "v7"]


def test_combine_elites_draws_circuits_uniformly(example_cell):
    alts = alternatives_of(example_cell)
    r1 = example_cell.robot_map["r1"]
    r2 = example_cell.robot_map["r2"]
    p2 = plan_from_alternative(r2, alts["r2"][0])
    a, b = alts["r1"]
    # three elites but only two distinct r1 circuits: the draw must ignore multiplicity
    elites = [CellTuple((plan_from_alternative(r1, a), p2)),
              CellTuple((plan_from_alternative(r1, a, "brakes"), p2)),
              CellTuple((plan_from_alternative(r1, b), p2))]
    assert elite_circuits(elites)["r1"] == [a.circuit, b.circuit]
    rng = random.Random(12345)
    counts = {a.circuit: 0, b.circuit: 0}
    draws = 4000
    for _ in range(draws):
        tup = combine_elites(example_cell, elites, rng, alts)
        counts[tup.plan("r1").circuit] += 1
        assert tup.plan("r2").circuit == p2.circuit
    stat = chisquare(list(counts.values()))
    assert stat.pvalue > 1e-3, counts


def test_combine_elites_rejects_empty_pool(example_cell):
    with pytest.raises(ValueError):
        combine_elites(example_cell, [], random.Random(0))


@dataclass
class _Fake:
    total_energy: float
    key: str

    def selection_key(self):
        return self.key


@given(st.lists(st.tuples(st.floats(0, 1000), st.sampled_from("abcdefghij")), max_size=60),
       st.integers(1, 6))
def test_elite_pool_keeps_best_distinct(offers, capacity):
    pool = ElitePool(capacity, locked=False)
    best = {}
    for energy, key in offers:
        pool.offer(_Fake(energy, key), None)
        best[key] = min(best.get(key, float("inf")), energy)
    energies = pool.energies()
    assert energies == sorted(energies)
    assert len(pool) == min(capacity, len(best))
    keys = [s.selection_key() for s, _ in pool.entries()]
    assert len(keys) == len(set(keys))
    if offers:
        assert pool.best().total_energy == min(best.values())
    for s, _ in pool.entries():
        assert s.total_energy >= best[s.selection_key()]


def test_elite_pool_sorted_top_k_without_duplicates():
    pool = ElitePool(3)
    for e, k in [(5, "a"), (3, "b"), (4, "a"), (9, "c"), (1, "d"), (2, "e")]:
        pool.offer(_Fake(e, k), None)
    assert pool.energies() == [1, 2, 3]
    assert not pool.offer(_Fake(8, "f"), None)
    assert not pool.offer(_Fake(3, "b"), None)
    with pytest.raises(ValueError):
        ElitePool(0)


def test_elite_pool_concurrent_offers():
    pool = ElitePool(10)
    n_threads, per_thread = 8, 500

    def work(t):
        for i in range(per_thread):
            pool.offer(_Fake(float((i * 7919 + t * 104729) % 10007), f"{t}-{i}"), None)

    threads = [threading.Thread(target=work, args=(t,)) for t in range(n_threads)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    everything = sorted(float((i * 7919 + t * 104729) % 10007) for t in range(n_threads) for i in range(per_thread))
    assert pool.energies() == everything[:10]
