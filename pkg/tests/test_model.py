import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynmedian.instance import Group, Instance, generate_random
from dynmedian.milp import solve_model
from dynmedian.model import (
    BINARY,
    ScheduleError,
    build_deterministic,
    check_solution,
    evaluate,
    model_counts,
    schedule_from_sets,
    solution_from_point,
    solution_point,
)
from dynmedian.exact import solve_exact

from conftest import family


def two_by(T, K=1):
    return Instance(
        locations=("a", "b"),
        horizon=T,
        fleet_size=1,
        cost=[[0, 1], [1, 0]],
        demand=np.ones((2, T)),
        open_cost=1,
        close_cost=1,
        groups=tuple(Group(f"g{k}", (0, 1), 0, 1) for k in range(K)),
    )


def count_by_prefix(model):
    out = {}
    for c in model.constraints:
        key = c.name.split("_")[0]
        out[key] = out.get(key, 0) + 1
    return out


class TestCounts:
    def test_two_by_two(self):
        m = build_deterministic(two_by(2))
        kinds = [v.name[0] for v in m.variables]
        assert kinds.count("x") == 8 and kinds.count("y") == 4
        assert kinds.count("a") + kinds.count("b") == 4
        c = count_by_prefix(m)
        assert c["as"] == 4 and c["fl"] == 2 and c["lk"] == 8
        assert c["cl"] + c["op"] == 4 and c["gx"] + c["gn"] == 4
        assert len(m.constraints) == 22

    def test_single_day_has_no_transitions(self):
        m = build_deterministic(two_by(1))
        assert not [v for v in m.variables if v.name[0] in "ab"]

    def test_campus_counts(self):
        unpadded = model_counts(91, 28, 6)
        padded = model_counts(91, 28, 6, pad_transitions=True)
        assert unpadded["variables"] == 91 * 91 * 28 + 91 * 28 + 2 * 91 * 27 == 239_330
        assert padded["variables"] == 239_512
        assert padded["constraints"] == unpadded["constraints"] == 239_694

    @pytest.mark.parametrize("pad", [False, True])
    def test_formula_matches_builder(self, pad):
        inst = generate_random(0, 4, 2, 3, 2)
        m = build_deterministic(inst, pad)
        counts = model_counts(4, 3, 2, pad)
        assert len(m.variables) == counts["variables"]
        assert len(m.constraints) == counts["constraints"]

    def test_binaries(self):
        m = build_deterministic(two_by(2))
        assert all((v.kind == BINARY) == v.name.startswith("y") for v in m.variables)
        assert not m.check()


class TestEvaluate:
    def test_single_day(self):
        inst = Instance(("a", "b"), 1, 1, [[0, 1], [1, 0]], [[10], [4]], 0, 0, (Group("g", (0, 1), 0, 1),))
        sol = evaluate(inst, schedule_from_sets(2, [(0,)]))
        assert sol.service_cost == 4.0

    def test_zero_demand(self):
        inst = generate_random(5, 5, 2, 3, 2)
        inst = Instance(inst.locations, 3, 2, inst.cost, np.zeros((5, 3)), 1, 1, inst.groups)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            from dynmedian.exact import enumerate_feasible

            cat = enumerate_feasible(inst)
            sets = [cat.sets[int(rng.integers(len(cat)))] for _ in range(3)]
            assert evaluate(inst, schedule_from_sets(5, sets)).service_cost == 0.0

    def test_constant_schedule_has_no_transition_cost(self):
        inst = generate_random(1, 5, 1, 4, 2)
        sol = evaluate(inst, schedule_from_sets(5, [(0, 1)] * 4))
        assert sol.open_cost_total == 0 and sol.close_cost_total == 0

    def test_wrong_fleet_names_day(self):
        inst = generate_random(1, 5, 1, 3, 2)
        with pytest.raises(ScheduleError, match="day 1"):
            evaluate(inst, schedule_from_sets(5, [(0, 1), (0,), (0, 1)]))

    def test_ties_go_to_lowest_index(self):
        inst = Instance(("a", "b", "c"), 1, 2, [[0, 1, 1], [1, 0, 2], [1, 2, 0]], [[1], [1], [1]], 0, 0,
                        (Group("g", (0, 1, 2), 0, 3),))
        sol = evaluate(inst, schedule_from_sets(3, [(1, 2)]))
        # site 0 is one unit from both open sites
        assert sol.assigned_to()[0, 0] == 1

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_invariants_and_integrality(self, seed):
        inst = family(seed)
        sol = solve_exact(inst).solution
        assert check_solution(inst, sol) == []
        assert set(np.unique(sol.assign)) <= {0.0, 1.0}

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_objective_matches_model(self, seed):
        inst = family(seed)
        sol = solve_exact(inst).solution
        m = build_deterministic(inst)
        point = solution_point(inst, sol)
        assert m.max_violation(point) <= 1e-12
        assert m.objective_value(point) == pytest.approx(sol.objective, rel=1e-9, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.randoms(use_true_random=False))
    def test_permutation_equivariant(self, seed, rnd):
        inst = family(seed)
        sol = solve_exact(inst).solution
        perm = list(range(inst.n_locations))
        rnd.shuffle(perm)
        inv = np.argsort(perm)
        moved = Instance(
            tuple(inst.locations[k] for k in perm),
            inst.horizon,
            inst.fleet_size,
            inst.cost[np.ix_(perm, perm)],
            inst.demand[perm],
            inst.open_cost,
            inst.close_cost,
            tuple(Group(g.id, tuple(int(inv[m]) for m in g.members), g.min_open, g.max_open) for g in inst.groups),
        )
        again = evaluate(moved, sol.open[perm])
        assert again.objective == pytest.approx(sol.objective, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.data())
    def test_lower_cost_never_hurts(self, seed, data):
        inst = family(seed)
        sol = solve_exact(inst).solution
        n = inst.n_locations
        i = data.draw(st.integers(0, n - 1))
        j = data.draw(st.integers(0, n - 1).filter(lambda v: v != i) if n > 1 else st.just(i))
        if i == j:
            return
        cost = inst.cost.copy()
        cost[i, j] *= data.draw(st.floats(0, 1))
        cheaper = Instance(inst.locations, inst.horizon, inst.fleet_size, cost, inst.demand,
                           inst.open_cost, inst.close_cost, inst.groups)
        assert evaluate(cheaper, sol.open).objective <= sol.objective + 1e-12


def test_milp_agrees_with_exact():
    for seed in range(15):
        inst = family(seed)
        res = solve_model(build_deterministic(inst))
        assert res.optimal
        opt = solve_exact(inst).value
        assert res.objective == pytest.approx(opt, rel=1e-7, abs=1e-7)
        assert solution_from_point(inst, res.values).objective == pytest.approx(opt, rel=1e-9, abs=1e-9)


def test_objective_is_exactly_rounded():
    sol = evaluate(two_by(3), schedule_from_sets(2, [(0,), (1,), (0,)]))
    assert sol.objective == math.fsum([sol.service_cost, sol.open_cost_total, sol.close_cost_total])
    assert sol.breakdown == {"service_cost": 3.0, "open_cost": 2.0, "close_cost": 2.0}
