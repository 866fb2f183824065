import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mricap.accreditation import EstimatorSettings
from mricap.demand import DemandCurve
from mricap.market import (
    MAX_OPTIONS,
    Offer,
    PhysicalOption,
    clear_auction,
    clearing_to_dict,
    compare_requirements,
    comparison_to_dict,
    level_curves,
    levels_to_csv,
    offers_from_json,
    rebase_curve,
    rebase_offers,
    schedule_to_csv,
    supply_cost,
)
from mricap.system import IntermittentSpec, PerfectSpec, ThermalSpec

from conftest import make_case

EXACT = EstimatorSettings(exact=True)


def grid_best(offers, curve, step=0.01):
    """Brute-force surplus maximum over clearing quantities on a fixed grid."""
    total = sum(o.quantity for o in offers)
    qs = np.arange(0.0, total + step / 2, step)
    surplus = [curve.integral(0.0, q) - supply_cost(offers, q) for q in qs]
    j = int(np.argmax(surplus))
    return qs[j], surplus[j]


class TestClearing:
    def test_cheap_offer_clears_fully(self):
        curve = DemandCurve([100.0, 200.0], [50.0, 10.0])
        res = clear_auction([Offer("A", 5.0, 150.0)], curve)
        assert res.cleared == {"A": 150.0}
        assert res.price == pytest.approx(30.0)
        assert "all offers cleared" in res.binding

    def test_expensive_offers_clear_nothing(self):
        curve = DemandCurve([100.0, 200.0], [50.0, 10.0])
        res = clear_auction([Offer("A", 60.0, 10.0)], curve)
        assert res.cleared == {"A": 0.0}
        assert res.total_quantity == 0.0
        assert res.price == 50.0

    def test_marginal_offer_sets_price(self):
        curve = DemandCurve([100.0, 200.0], [50.0, 10.0])
        res = clear_auction([Offer("A", 0.0, 100.0), Offer("B", 30.0, 100.0)], curve)
        assert res.price == 30.0
        assert res.cleared["B"] == pytest.approx(50.0)

    def test_equal_prices_prorated(self):
        curve = DemandCurve([0.0, 100.0], [100.0, 0.0])
        res = clear_auction([Offer("A", 40.0, 30.0), Offer("B", 40.0, 90.0)], curve)
        assert res.total_quantity == pytest.approx(60.0)
        assert res.cleared["A"] == pytest.approx(15.0)
        assert res.cleared["B"] == pytest.approx(45.0)

    def test_price_between_steps(self):
        # demand falls below the next offer before reaching it
        curve = DemandCurve([0.0, 100.0], [100.0, 0.0])
        res = clear_auction([Offer("A", 10.0, 50.0), Offer("B", 60.0, 50.0)], curve)
        assert res.cleared == {"A": 50.0, "B": 0.0}
        assert res.price == pytest.approx(50.0)

    def test_no_offers(self):
        res = clear_auction([], DemandCurve([10.0], [7.0]))
        assert res.price == 7.0 and res.cleared == {}

    def test_three_offers_against_grid_oracle(self):
        curve = DemandCurve([100.0, 150.0, 220.0], [90.0, 40.0, 5.0])
        offers = [Offer("A", 10.0, 80.0), Offer("B", 35.0, 50.0), Offer("C", 60.0, 60.0)]
        res = clear_auction(offers, curve)
        q, best = grid_best(offers, curve)
        assert abs(res.total_quantity - q) <= 0.01
        assert res.surplus >= best - 1e-9
        assert res.surplus <= best + 90.0 * 0.01

    def test_unique_names(self):
        with pytest.raises(ValueError):
            clear_auction([Offer("A", 1.0, 1.0), Offer("A", 2.0, 1.0)], DemandCurve([1.0], [1.0]))

    @pytest.mark.parametrize("price,qty", [(-1.0, 1.0), (1.0, 0.0)])
    def test_offer_validation(self, price, qty):
        with pytest.raises(ValueError):
            Offer("A", price, qty)

    def test_io(self):
        offers = offers_from_json(json.dumps({"offers": [{"name": "A", "price": 5, "quantity": 10}]}))
        assert offers == [Offer("A", 5.0, 10.0)]
        with pytest.raises(ValueError, match="unknown offer field"):
            offers_from_json('[{"name": "A", "price": 5, "quantity": 10, "x": 1}]')
        res = clear_auction(offers, DemandCurve([20.0], [8.0]))
        d = clearing_to_dict(res)
        assert d["cleared"][0]["payment"] == pytest.approx(80.0)
        assert schedule_to_csv(res).splitlines()[0].startswith("name,")


offer_lists = st.lists(st.tuples(st.integers(0, 100), st.integers(1, 60)), min_size=1, max_size=4)
curves = st.lists(st.tuples(st.integers(1, 200), st.integers(0, 120)), min_size=1, max_size=4)


def build_curve(points):
    qs = sorted({q for q, _ in points})
    ps = sorted((p for _, p in points), reverse=True)[:len(qs)]
    return DemandCurve(np.array(qs, float), np.array(ps, float))


@settings(max_examples=150, deadline=None)
@given(offer_lists, curves)
def test_clearing_is_surplus_maximal(raw_offers, raw_curve):
    curve = build_curve(raw_curve)
    offers = [Offer(f"O{i}", float(p), float(q)) for i, (p, q) in enumerate(raw_offers)]
    res = clear_auction(offers, curve)
    _, best = grid_best(offers, curve, step=0.05)
    top = float(curve.prices[0])
    assert res.surplus >= best - 1e-6
    assert res.surplus <= best + top * 0.05 + 1e-6
    for o in offers:
        assert -1e-12 <= res.cleared[o.name] <= o.quantity + 1e-12
    # cleared offers are priced at or below the clearing price
    for o in offers:
        if res.cleared[o.name] > 1e-9:
            assert o.price <= res.price + 1e-9


@settings(max_examples=150, deadline=None)
@given(offer_lists, curves, st.floats(0.2, 1.5))
def test_rebasing_keeps_payments_to_the_cent(raw_offers, raw_curve, beta):
    curve = build_curve(raw_curve)
    offers = [Offer(f"O{i}", float(p), float(q)) for i, (p, q) in enumerate(raw_offers)]
    a = clear_auction(offers, curve)
    b = clear_auction(rebase_offers(offers, beta), rebase_curve(curve, beta))
    for name, pay in a.payments().items():
        assert abs(pay - b.payments()[name]) < 0.005
        # same physical MW
        assert b.cleared[name] * beta == pytest.approx(a.cleared[name], abs=1e-9)


def perfect_options():
    return [PhysicalOption(f"N{i}", PerfectSpec(c), cost) for i, (c, cost) in
            enumerate([(20.0, 100.0), (30.0, 140.0), (25.0, 90.0)])]


class TestRequirements:
    def base(self):
        return make_case([[100.0, 130.0]], {"P": PerfectSpec(80.0), "G": ThermalSpec(40.0, 0.1, outage_mode="iid")})

    def test_all_perfect_options_agree(self):
        base = make_case([[100.0, 130.0]], {"P": PerfectSpec(80.0), "Q": PerfectSpec(30.0)})
        c = compare_requirements(perfect_options(), base, 150.0, EXACT)
        assert c.rmri_sys == pytest.approx(1.0)
        assert c.native.selected == c.mric.selected

    def test_base_mix_binds_both_constraints(self):
        base = self.base()
        options = [PhysicalOption("P", base.resources["P"], 10.0), PhysicalOption("G", base.resources["G"], 10.0)]
        c = compare_requirements(options, base, base.total_native_capacity(), EXACT)
        assert c.native.selected == ["P", "G"] and c.mric.selected == ["P", "G"]
        assert c.native.lhs == pytest.approx(c.native.rhs)
        assert c.mric.lhs == pytest.approx(c.mric.rhs)

    def test_mric_constraint_prefers_reliable_mix(self):
        # two options of equal cost and size: a firm one and a solar one that is idle at the peak
        base = self.base()
        options = [
            PhysicalOption("FIRM", ThermalSpec(30.0, 0.02, outage_mode="iid"), 50.0),
            PhysicalOption("SUN", IntermittentSpec(30.0, np.array([[30.0, 0.0]])), 49.0),
        ]
        c = compare_requirements(options, base, 150.0, EXACT)
        assert c.native.selected == ["SUN"]
        assert c.mric.selected == ["FIRM"]
        assert c.mric.eue.value < c.native.eue.value
        d = comparison_to_dict(c)
        assert d["mric"]["selected"] == ["FIRM"]

    def test_infeasible(self):
        with pytest.raises(ValueError, match="no feasible"):
            compare_requirements(perfect_options(), self.base(), 1e6, EXACT)

    def test_option_cap(self):
        opts = [PhysicalOption(f"X{i}", PerfectSpec(1.0), 1.0) for i in range(MAX_OPTIONS + 1)]
        with pytest.raises(ValueError, match="at most"):
            compare_requirements(opts, self.base(), 1.0, EXACT)


class TestLevelCurves:
    def test_perfect_pair_all_lines_coincide(self):
        base = make_case([[100.0, 120.0]], {"A": PerfectSpec(50.0), "B": PerfectSpec(40.0),
                                           "G": ThermalSpec(40.0, 0.2, outage_mode="iid")})
        lc = level_curves(base, ("A", "B"), [45.0, 50.0, 55.0], EXACT)
        for p in lc.points:
            assert p.c2_actual == pytest.approx(p.c2_native_linear, abs=1e-4)
            assert p.c2_mric_linear == pytest.approx(p.c2_native_linear)

    def test_base_point_on_all_curves(self, two_resource):
        c1 = two_resource.native_capacity("GEN")
        lc = level_curves(two_resource, ("GEN", "SOLAR"), [c1], EstimatorSettings(replications=5000))
        p = lc.points[0]
        c2 = two_resource.native_capacity("SOLAR")
        assert p.c2_native_linear == c2 and p.c2_mric_linear == c2
        assert p.c2_actual == pytest.approx(c2, rel=1e-4)

    def test_csv_and_flags(self, two_resource):
        lc = level_curves(two_resource, ("GEN", "SOLAR"), [-1.0, 100.0], EstimatorSettings(replications=2000))
        assert lc.points[0].flag == "negative C1"
        lines = levels_to_csv(lc).splitlines()
        assert lines[0] == "c1_mw,c2_actual_mw,c2_native_linear_mw,c2_mric_linear_mw"
        assert len(lines) == 2

    def test_same_resource_twice(self, two_resource):
        with pytest.raises(ValueError):
            level_curves(two_resource, ("GEN", "GEN"), [1.0], EXACT)
