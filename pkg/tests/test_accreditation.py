import math

import numpy as np
import pytest

from mricap.accreditation import (
    MARGINAL_PERFECT,
    AccreditationError,
    EstimatorSettings,
    accredit,
    aelcc_search,
    contribution_factors,
    factors_to_csv,
    group_mri,
    mean_hourly_output,
    melcc,
    mri,
    mri_components_storage,
    mri_hourly_intermittent,
    mri_perfect,
    mric,
    rebase_reference,
    report_to_csv,
    report_to_dict,
    sum_of_members,
    ucap,
    with_injection,
)
from mricap.exact import enumerate_exact
from mricap.system import IntermittentSpec, PerfectSpec, StorageSpec, ThermalSpec

from conftest import make_case, small_mixed_case

EXACT = EstimatorSettings(exact=True)


def with_resource(base, name, spec):
    return base.with_resources({**base.resources, name: spec})


class TestUcap:
    def test_worked_example(self):
        assert ucap(ThermalSpec(750, 0.1041)) == pytest.approx(671.925)

    @pytest.mark.parametrize("q,expected", [(0.0, 100.0), (1.0, 0.0)])
    def test_extremes(self, q, expected):
        assert ucap(ThermalSpec(100, q)) == expected

    def test_thermal_only(self):
        with pytest.raises(ValueError):
            ucap(PerfectSpec(10))


class TestExactMri:
    def test_two_hour_system(self, oracle2h):
        assert mri_perfect(oracle2h, EXACT).value == pytest.approx(1.0)
        assert mri(oracle2h, "TH", EXACT).value == pytest.approx(0.0, abs=1e-12)
        assert mri(oracle2h, "Perfect", EXACT).value == pytest.approx(1.0)

    def test_three_hour_storage(self, oracle3h):
        assert mri_perfect(oracle3h, EXACT).value == pytest.approx(3.0)
        r = mric(oracle3h, "ES", EXACT)
        assert r.mri.value == pytest.approx(0.5)
        assert r.mric.value == pytest.approx(20 * 0.5 / 3)
        # equal to 10 MWh spread over 3 MRI hours
        assert r.mric.value == pytest.approx(10 / enumerate_exact(oracle3h).expected_mri_hours)

    def test_storage_decomposition(self, oracle3h):
        comp = mri_components_storage(oracle3h, "ES", EXACT)
        spec = oracle3h.resources["ES"]
        assert comp.mri_c.value == pytest.approx(0.0, abs=1e-12)
        assert comp.mri_e.value == pytest.approx(1.0)
        total = mri(oracle3h, "ES", EXACT).value
        assert total * spec.discharge_cap == pytest.approx(
            comp.mri_c.value * spec.discharge_cap + comp.mri_e.value * spec.energy_limit)

    def test_storage_with_slack_energy(self, oracle3h):
        big = with_resource(oracle3h, "ES", StorageSpec(5.0, 5.0, 1000.0))
        comp = mri_components_storage(big, "ES", EXACT)
        assert comp.mri_e.value == pytest.approx(0.0, abs=1e-12)
        assert comp.mri_c.value == pytest.approx(3.0)

    def test_no_shortfall_means_zero(self):
        base = make_case([[10.0, 10.0]], {"P": PerfectSpec(50.0), "S": StorageSpec(5, 5, 5),
                                         "G": ThermalSpec(5.0, 0.2, outage_mode="iid")})
        assert mri_perfect(base, EXACT).value == 0.0
        assert mri(base, "G", EXACT).value == 0.0
        comp = mri_components_storage(base, "S", EXACT)
        assert comp.mri_c.value == 0.0 and comp.mri_e.value == 0.0
        with pytest.raises(AccreditationError):
            mric(base, "G", EXACT)

    def test_perfect_rmri_is_one(self, oracle2h):
        r = mric(oracle2h, "Perfect", EXACT)
        assert r.rmri.value == pytest.approx(1.0)
        assert r.mric.value == pytest.approx(60.0)

    def test_for_one_unit_has_zero_mric(self, oracle2h):
        base = with_resource(oracle2h, "DEAD", ThermalSpec(30.0, 1.0, outage_mode="iid"))
        assert mric(base, "DEAD", EXACT).mric.value == 0.0

    def test_two_sided(self, oracle3h):
        s = EstimatorSettings(exact=True, two_sided=True)
        assert mri(oracle3h, "ES", s).value == pytest.approx(0.5)

    def test_injection_reserved_name(self, oracle2h):
        case = with_injection(oracle2h, 1.0)
        assert case.resources[MARGINAL_PERFECT].icap == 1.0
        with pytest.raises(ValueError, match="reserved"):
            with_injection(case, 1.0)
        np.testing.assert_allclose(with_injection(oracle2h, -2.0).load.demand, [[102.0, 102.0]])


class TestIntermittentHourly:
    def base(self, oracle2h):
        return with_resource(oracle2h, "W", IntermittentSpec(5.0, np.array([[5.0, 0.0]])))

    def test_output_only_in_first_hour(self, oracle2h):
        out = mri_hourly_intermittent(self.base(oracle2h), "W", None, EXACT)
        assert out[0].value == pytest.approx(0.5)
        assert out[1].value == 0.0

    def test_decomposition_over_horizon(self):
        base = small_mixed_case()
        hourly = mri_hourly_intermittent(base, "W", None, EXACT)
        mean = mean_hourly_output(base, "W")
        lhs = sum(hourly[t].value * mean[t] for t in hourly)
        rhs = mri(base, "W", EXACT).value * base.native_capacity("W")
        assert lhs == pytest.approx(rhs, rel=1e-6)

    def test_bad_hours(self, oracle2h):
        with pytest.raises(ValueError):
            mri_hourly_intermittent(self.base(oracle2h), "W", [5], EXACT)
        with pytest.raises(ValueError):
            mri_hourly_intermittent(self.base(oracle2h), "W", [], EXACT)
        with pytest.raises(ValueError):
            mri_hourly_intermittent(oracle2h, "TH", None, EXACT)


class TestGroups:
    def test_singleton_matches_member(self):
        base = small_mixed_case()
        assert group_mri(base, ["G1"], EXACT).value == pytest.approx(mri(base, "G1", EXACT).value)

    def test_two_perfect_units(self, oracle2h):
        base = with_resource(oracle2h, "P2", PerfectSpec(5.0))
        g = group_mri(base, ["Perfect", "P2"], EXACT).value
        assert g == pytest.approx(mri(base, "P2", EXACT).value)
        assert g == pytest.approx(mri(base, "Perfect", EXACT).value)

    def test_identical_units_homogeneous(self):
        base = make_case([[100.0, 120.0]], {
            "P": PerfectSpec(50.0),
            "A": ThermalSpec(30.0, 0.1, outage_mode="iid"),
            "B": ThermalSpec(30.0, 0.1, outage_mode="iid"),
        })
        report = accredit(base, EstimatorSettings(exact=True, delta=1e-4), ("mric",), groups={"AB": ["A", "B"]})
        one = report.entry("A").mric.value
        assert report.entry("AB").mric.value == pytest.approx(2 * one, rel=1e-3)


class TestElcc:
    def test_perfect_fixed_point(self, oracle2h):
        res = aelcc_search(oracle2h, "Perfect", EXACT)
        assert res.value == pytest.approx(60.0)
        assert res.converged
        assert melcc(small_mixed_case(), "P", EXACT).value == pytest.approx(60.0)

    def test_melcc_undefined_when_lole_is_flat(self, oracle2h):
        # a 10 MW injection never closes the 40 MW shortfall
        with pytest.raises(AccreditationError, match="does not respond"):
            melcc(oracle2h, "Perfect", EXACT)

    def test_step_shaped_lole(self, oracle2h):
        # without TH, LOLE is 1 below 40 MW of replacement and 0 from 40 MW on;
        # the base value 0.75 is never hit, so bisection lands on the jump
        res = aelcc_search(oracle2h, "TH", EXACT)
        assert res.lole_removed == 1.0
        assert res.value == pytest.approx(40.0, abs=1e-6)

    def test_eue_variant_equals_rmri(self):
        base = small_mixed_case()
        s = EstimatorSettings(exact=True, lole_delta=1.0)
        for name in ("G1", "W", "S"):
            r = mric(base, name, EXACT).rmri.value
            cf = melcc(base, name, s, metric="eue").value / base.native_capacity(name)
            assert cf == pytest.approx(r, rel=1e-9)

    def test_degenerate_removal(self, oracle3h):
        with pytest.raises(AccreditationError, match="insensitive"):
            aelcc_search(oracle3h, "ES", EXACT)

    def test_unknown_metric(self, oracle2h):
        with pytest.raises(ValueError):
            melcc(oracle2h, "Perfect", EXACT, metric="lolh")

    def test_reference_replacement(self, two_resource):
        s = EstimatorSettings(replications=5000, aelcc_tol=0.005)
        perfect = aelcc_search(two_resource, "U1", s).value
        in_gen = aelcc_search(two_resource, "U1", s, reference="GEN").value
        # the reference is less reliable than perfect capacity, so more of it is needed
        assert in_gen > perfect


@pytest.fixture(scope="module")
def full_report():
    return accredit(small_mixed_case(), EXACT, groups={"GG": ["G1", "G2"]})


@pytest.fixture(scope="module")
def marginal_report():
    return accredit(small_mixed_case(), EXACT, ("mric", "melcc", "aelcc"))


class TestReport:
    @pytest.fixture
    def report(self, full_report):
        return full_report

    def test_rows(self, report):
        names = [e.name for e in report.entries]
        assert names == ["P", "G1", "G2", "W", "S", "GG"]
        assert report.entry("P").rmri.value == pytest.approx(1.0)
        assert report.entry("G1").ucap == pytest.approx(32.0)
        assert report.entry("S").mri_e_component is not None

    def test_matches_single_operations(self, report):
        base = small_mixed_case()
        for name in ("G1", "W", "S"):
            assert report.entry(name).mric.value == pytest.approx(mric(base, name, EXACT).mric.value)
        assert report.mri_perfect.value == pytest.approx(mri_perfect(base, EXACT).value)
        assert report.eue.value == pytest.approx(enumerate_exact(base).eue)

    def test_group_additivity(self, report):
        s = sum_of_members(report, ["G1", "G2"], "sum")
        assert report.entry("GG").mric.value == pytest.approx(s.mric.value, rel=0.02)
        assert math.isnan(s.mric.se)

    def test_csv(self, report):
        lines = report_to_csv(report).splitlines()
        assert lines[0] == "name,icap,ucap,aelcc,melcc,mri,rmri,mric,mri_c_component,mri_e_component,se_mri"
        assert len(lines) == 7
        assert lines[1].startswith("P,60.000000,,60.000000,60.000000,")

    def test_dict(self, report):
        d = report_to_dict(report)
        assert d["reference"] == "perfect"
        assert d["entries"][5]["members"] == ["G1", "G2"]

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown"):
            accredit(small_mixed_case(), EXACT, ("ucap", "magic"))


class TestRebase:
    @pytest.fixture
    def report(self, marginal_report):
        return marginal_report

    def test_identity_for_perfect(self, report):
        rebased = rebase_reference(report, small_mixed_case(), "P", EXACT)
        assert rebased.beta == pytest.approx(1.0)
        for a, b in zip(rebased.factors_perfect, rebased.factors_reference):
            assert b.mric == pytest.approx(a.mric)
            assert b.melcc == pytest.approx(a.melcc)

    def test_uniform_factor(self, report):
        rebased = rebase_reference(report, small_mixed_case(), "G1", EXACT)
        ratios = [b.mric / a.mric for a, b in zip(rebased.factors_perfect, rebased.factors_reference) if a.mric]
        assert np.ptp(ratios) < 1e-12
        assert ratios[0] == pytest.approx(1 / rebased.beta)
        assert rebased.rebased.entry("G1").rmri.value == pytest.approx(1.0)
        mric_ratio = report.entry("W").mric.value / report.entry("S").mric.value
        assert rebased.rebased.entry("W").mric.value / rebased.rebased.entry("S").mric.value == pytest.approx(mric_ratio)

    def test_factors_csv(self, report):
        rebased = rebase_reference(report, small_mixed_case(), "G1", EXACT)
        text = factors_to_csv(rebased)
        assert text.splitlines()[0].startswith("name,cf_mric_perfect,cf_mric_reference,mric_change_pct")
        assert len(contribution_factors(report)) == 5

    def test_zero_mri_reference(self, oracle2h):
        report = accredit(oracle2h, EXACT, ("mric",))
        with pytest.raises(AccreditationError):
            rebase_reference(report, oracle2h, "TH", EXACT)


class TestMonteCarloAgreesWithExact:
    def test_small_system(self):
        base = small_mixed_case()
        mc = accredit(base, EstimatorSettings(replications=40_000, seed=3), ("mric",))
        ex = accredit(base, EXACT, ("mric",))
        for e in ex.entries:
            got = mc.entry(e.name)
            assert abs(got.mri.value - e.mri.value) <= 4 * got.mri.se + 1e-9
