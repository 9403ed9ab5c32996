import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynmedian.campus import SEGMENTS, campus_instance, small_campus_instance
from dynmedian.instance import (
    Group,
    Instance,
    InvalidInstanceError,
    SegmentProfile,
    build_campus_instance,
    build_demand,
    dumps_instance,
    euclidean_costs,
    generate_random,
    group_bounds,
    loads_instance,
    matrix_to_csv,
    read_instance,
    require_valid,
    validate,
    write_instance,
)

SEG = {s.name: s for s in SEGMENTS}


def base(**kw):
    data = dict(
        locations=("a", "b", "c"),
        horizon=2,
        fleet_size=2,
        cost=[[0, 1, 2], [1, 0, 1], [2, 1, 0]],
        demand=[[1, 2], [3, 4], [5, 6]],
        open_cost=1.0,
        close_cost=1.0,
        groups=(Group("g", (0, 1, 2), 0, 3),),
    )
    data.update(kw)
    return Instance(**data)


class TestValidate:
    def test_ok(self):
        assert validate(base()).ok

    def test_minima_exceed_fleet(self):
        inst = base(groups=(Group("g1", (0, 1), 2, 2), Group("g2", (2,), 1, 1)))
        rep = validate(inst)
        assert not rep.ok
        assert any("fleet below group minima" in v for v in rep.violations)

    def test_campus_bounds_pass(self):
        inst = campus_instance()
        lo = sum(g.min_open for g in inst.groups)
        hi = sum(g.max_open for g in inst.groups)
        assert (lo, hi) == (10, 27)
        assert validate(inst).ok

    def test_uncovered_location(self):
        rep = validate(base(groups=(Group("g", (0, 1), 0, 2),)))
        assert any("locations in no group" in v for v in rep.violations)

    def test_maxima_below_fleet(self):
        rep = validate(base(groups=(Group("g", (0, 1, 2), 0, 1),)))
        assert any("fleet above group maxima" in v for v in rep.violations)

    @pytest.mark.parametrize(
        "kw, needle",
        [
            (dict(cost=[[0, 1, 2], [1, 0, 1], [2, 1, 1]]), "diagonal"),
            (dict(cost=[[0, -1, 2], [1, 0, 1], [2, 1, 0]]), "negative"),
            (dict(cost=[[0, 1], [1, 0]]), "cost shape"),
            (dict(demand=[[1, 2], [3, -4], [5, 6]]), "demand"),
            (dict(open_cost=-1.0), "open_cost"),
            (dict(fleet_size=4), "exceeds location count"),
            (dict(horizon=0, demand=np.zeros((3, 0))), "horizon"),
            (dict(groups=(Group("g", (0, 1, 2), 2, 1),)), "min_open"),
            (dict(groups=(Group("g", (0, 1, 2), 0, 4),)), "exceeds member count"),
        ],
    )
    def test_each_invariant(self, kw, needle):
        rep = validate(base(**kw))
        assert not rep.ok
        assert any(needle in v for v in rep.violations), rep.violations

    def test_reports_every_violation(self):
        rep = validate(base(open_cost=-1.0, close_cost=-2.0))
        assert len(rep.violations) == 2

    def test_require_valid_raises(self):
        with pytest.raises(InvalidInstanceError):
            require_valid(base(fleet_size=0))


class TestGroupBounds:
    @pytest.mark.parametrize(
        "count, expected",
        [(54, (7, 14)), (20, (2, 6)), (8, (1, 3)), (6, (0, 2)), (2, (0, 1)), (1, (0, 1))],
    )
    def test_campus_table(self, count, expected):
        assert group_bounds(18, count, 91) == expected

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            group_bounds(18, 1, 0)
        with pytest.raises(ValueError):
            group_bounds(0, 1, 5)
        with pytest.raises(ValueError):
            group_bounds(3, 6, 5)

    @given(st.integers(1, 40), st.integers(1, 100), st.data())
    def test_monotone_in_count(self, p, total, data):
        a = data.draw(st.integers(1, total))
        b = data.draw(st.integers(a, total))
        lo_a, hi_a = group_bounds(p, a, total)
        lo_b, hi_b = group_bounds(p, b, total)
        assert lo_a <= lo_b and hi_a <= hi_b

    @given(st.integers(1, 40), st.integers(1, 100), st.data())
    def test_matches_rational_formula(self, p, total, data):
        k = data.draw(st.integers(1, total))
        share = Fraction(p * k, total)
        assert group_bounds(p, k, total) == (math.floor(share * 7 / 10), math.ceil(share * 13 / 10))


class TestDemand:
    def test_academic_monday(self):
        assert build_demand(SEG["Academic"], 1) == pytest.approx(37103 / 54, rel=1e-12)

    def test_athletic_saturday(self):
        assert build_demand(SEG["Athletic"], 6) == 2150.0

    def test_residence_monday(self):
        assert build_demand(SEG["Residence"], 1) == 330.3125

    @pytest.mark.parametrize("seg", SEGMENTS, ids=lambda s: s.name)
    def test_weekly(self, seg):
        for day in range(1, 15):
            assert build_demand(seg, day) == build_demand(seg, day + 7)

    def test_day_is_one_based(self):
        with pytest.raises(ValueError):
            build_demand(SEG["Academic"], 0)

    def test_profile_checks(self):
        with pytest.raises(ValueError):
            SegmentProfile("x", 0, 10, (100,) * 7)
        with pytest.raises(ValueError):
            SegmentProfile("x", 1, 10, (100,) * 6)
        with pytest.raises(ValueError):
            SegmentProfile("x", 1, 10, (101,) + (0,) * 6)


class TestCampus:
    def test_three_four_five(self):
        assert euclidean_costs([(0, 0), (3, 4)])[0, 1] == 5.0

    def test_bounds_rows(self):
        inst = campus_instance()
        got = [(g.min_open, g.max_open) for g in inst.groups]
        assert got == [(7, 14), (2, 6), (1, 3), (0, 2), (0, 1), (0, 1)]

    def test_metric(self):
        c = campus_instance().cost
        assert np.allclose(c, c.T)
        assert np.all(np.diag(c) == 0)
        # triangle inequality with a little float slack
        assert np.all(c[:, None, :] <= c[:, :, None] + c[None, :, :] + 1e-9)

    def test_coordinate_mismatch(self):
        with pytest.raises(ValueError):
            build_campus_instance(SEGMENTS, [(0.0, 0.0)], 18, 7, 5, 5)

    def test_small_campus_is_valid(self):
        inst = small_campus_instance()
        assert inst.n_locations == 12 and validate(inst).ok
        # per-building demand is unchanged by scaling the building counts
        assert inst.demand[0, 0] == pytest.approx(37103 / 54)


class TestGenerator:
    def test_deterministic(self):
        assert generate_random(3, 6, 2, 5, 2) == generate_random(3, 6, 2, 5, 2)

    def test_periodic(self):
        d = generate_random(4, 6, 2, 28, 2, demand_period=7).demand
        assert np.array_equal(d[:, :21], d[:, 7:28])

    def test_valid(self):
        assert validate(generate_random(0, 8, 3, 4, 3)).ok

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 9), st.data())
    def test_always_valid(self, seed, n, data):
        k = data.draw(st.integers(1, n))
        p = data.draw(st.integers(1, n))
        T = data.draw(st.integers(1, 9))
        assert validate(generate_random(seed, n, k, T, p)).ok

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            generate_random(0, 3, 4, 2, 1)
        with pytest.raises(ValueError):
            generate_random(0, 3, 1, 2, 4)


class TestSerialization:
    def test_round_trip_bytes(self, tmp_path):
        inst = generate_random(1, 5, 2, 3, 2)
        f = tmp_path / "i.json"
        write_instance(inst, f)
        text = f.read_text()
        again = read_instance(f)
        assert again == inst
        write_instance(again, tmp_path / "j.json")
        assert (tmp_path / "j.json").read_text() == text

    def test_key_order(self):
        text = dumps_instance(base())
        keys = ["horizon", "fleet_size", "open_cost", "close_cost", "locations", "cost", "demand", "groups"]
        positions = [text.index(f'"{k}"') for k in keys]
        assert positions == sorted(positions)

    def test_csv_override(self, tmp_path):
        inst = base()
        write_instance(inst, tmp_path / "i.json")
        new_demand = np.array([[9, 9], [8, 8], [7, 7]], dtype=float)
        (tmp_path / "d.csv").write_text(matrix_to_csv(new_demand))
        (tmp_path / "c.csv").write_text(matrix_to_csv(inst.cost * 2))
        got = read_instance(tmp_path / "i.json", tmp_path / "d.csv", tmp_path / "c.csv")
        assert np.array_equal(got.demand, new_demand)
        assert np.array_equal(got.cost, inst.cost * 2)

    def test_malformed(self):
        with pytest.raises(ValueError):
            loads_instance('{"horizon": 1}')

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_round_trip_random(self, seed):
        inst = generate_random(seed, 4, 2, 3, 2)
        assert loads_instance(dumps_instance(inst)) == inst


def test_with_horizon_tiles():
    inst = generate_random(2, 4, 2, 7, 2)
    long = inst.with_horizon(21)
    assert long.horizon == 21
    assert np.array_equal(long.demand[:, 14:], inst.demand)


def test_immutable():
    inst = base()
    with pytest.raises((ValueError, TypeError)):
        inst.cost[0, 1] = 5.0
    assert replace(inst, fleet_size=1).fleet_size == 1
