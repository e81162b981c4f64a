"""Unit tests for the analytic counting-statistics library.

Expected values are computed from independent closed forms (math module,
hand-rolled series) rather than from the functions under test.
"""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sipmsim.errors import EstimationError, FitError, NegativeCrosstalkWarning
from sipmsim.stats import (
    CoherentPulseModel,
    CrosstalkModel,
    DeadTimeModel,
    DetectionDistribution,
    EfficiencyModel,
    crosstalk_redistribute,
    dead_time_rate,
    detection_probability,
    efficiency_at,
    estimate_pct,
    fit_constant_efficiency,
    fit_efficiency_model,
    mean_from_p0,
    photon_rate_to_power,
    poisson_pmf,
    power_to_photon_rate,
    pulsed_count_rate,
)


def reference_redistribute(p_th, p_ct):
    """Three-line reimplementation of the forward recursion used as oracle."""
    out = [p_th[0]]
    for n in range(1, len(p_th)):
        out.append((p_th[n] + (n - 1) * out[n - 1] * p_ct) / (1.0 + n * p_ct))
    return out


class TestPoissonPmf:
    def test_matches_direct_formula(self):
        for k in range(8):
            expected = math.exp(-1.7) * 1.7**k / math.factorial(k)
            assert poisson_pmf(k, 1.7) == pytest.approx(expected, rel=1e-14)

    def test_zero_mean_is_point_mass(self):
        assert poisson_pmf(0, 0.0) == 1.0
        assert poisson_pmf(3, 0.0) == 0.0

    def test_log_space_branch_continuous(self):
        # k=20 uses the ratio, k=21 the log-space form; both must agree with
        # scipy-free long-double style evaluation.
        for k in (20, 21, 50):
            expected = math.exp(k * math.log(25.0) - 25.0 - math.lgamma(k + 1))
            assert poisson_pmf(k, 25.0) == pytest.approx(expected, rel=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            poisson_pmf(-1, 1.0)
        with pytest.raises(ValueError):
            poisson_pmf(2, -0.5)

    @given(st.floats(min_value=0.01, max_value=30.0))
    def test_sums_to_one(self, mu):
        total = sum(poisson_pmf(k, mu) for k in range(0, int(mu + 20 * math.sqrt(mu) + 30)))
        assert total == pytest.approx(1.0, abs=1e-9)


class TestDetectionDistribution:
    def test_from_poisson_and_accessors(self):
        d = DetectionDistribution.from_poisson(0.5, n_max=15)
        assert d.n_max == 15
        assert d.prob(0) == pytest.approx(math.exp(-0.5))
        assert d.prob(99) == 0.0
        assert d.total() == pytest.approx(1.0, abs=1e-10)
        assert d.mean() == pytest.approx(0.5, abs=1e-8)

    def test_from_counts_normalizes(self):
        d = DetectionDistribution.from_counts([30, 60, 10])
        np.testing.assert_allclose(d.probs, [0.3, 0.6, 0.1])

    def test_rejects_invalid(self):
        with pytest.raises(ValueError):
            DetectionDistribution(np.array([0.5, -0.2]))
        with pytest.raises(ValueError):
            DetectionDistribution(np.array([0.9, 0.3]))  # sums above 1
        with pytest.raises(ValueError):
            DetectionDistribution(np.array([np.nan, 0.5]))
        with pytest.raises(ValueError):
            DetectionDistribution.from_counts([0, 0])

    def test_probs_are_read_only(self):
        d = DetectionDistribution.from_poisson(0.2)
        with pytest.raises(ValueError):
            d.probs[0] = 0.5


class TestCrosstalkRedistribute:
    def test_reference_values(self):
        # a0 = 0.2, p_ct = 9.7%: the canonical operating point.
        d = crosstalk_redistribute(DetectionDistribution.from_poisson(0.2), 0.097)
        assert d.prob(0) == pytest.approx(0.818731, abs=1e-6)
        assert d.prob(1) == pytest.approx(0.149267, abs=1e-6)
        assert d.prob(2) == pytest.approx(0.025841, abs=1e-6)

    def test_matches_reference_recursion(self):
        p_th = DetectionDistribution.from_poisson(1.3, n_max=25)
        got = crosstalk_redistribute(p_th, 0.15)
        expected = reference_redistribute(p_th.probs, 0.15)
        np.testing.assert_allclose(got.probs, expected, rtol=1e-14)

    def test_zero_crosstalk_is_identity(self):
        p_th = DetectionDistribution.from_poisson(0.7)
        out = crosstalk_redistribute(p_th, 0.0)
        np.testing.assert_array_equal(out.probs, p_th.probs)

    def test_accepts_model_object(self):
        p_th = DetectionDistribution.from_poisson(0.2)
        a = crosstalk_redistribute(p_th, CrosstalkModel(0.097))
        b = crosstalk_redistribute(p_th, 0.097)
        np.testing.assert_array_equal(a.probs, b.probs)

    def test_renormalize_flag(self):
        p_th = DetectionDistribution.from_poisson(2.0, n_max=25)
        out = crosstalk_redistribute(p_th, 0.15, renormalize=True)
        assert out.total() == pytest.approx(1.0, abs=1e-12)

    @given(
        st.floats(min_value=0.01, max_value=2.0),
        st.floats(min_value=0.0, max_value=0.15),
    )
    @settings(max_examples=60)
    def test_total_stays_in_band(self, a0, p_ct):
        out = crosstalk_redistribute(DetectionDistribution.from_poisson(a0, n_max=30), p_ct)
        assert 0.99 <= out.total() <= 1.0 + 1e-9

    @given(
        st.floats(min_value=0.05, max_value=3.0),
        st.floats(min_value=0.0, max_value=0.3),
    )
    @settings(max_examples=60)
    def test_estimate_pct_round_trip(self, a0, p_ct):
        out = crosstalk_redistribute(DetectionDistribution.from_poisson(a0, n_max=40), p_ct)
        assert estimate_pct(out.prob(0), out.prob(1)) == pytest.approx(p_ct, abs=1e-10)

    def test_invalid_pct_rejected(self):
        with pytest.raises(ValueError):
            CrosstalkModel(1.0)
        with pytest.raises(ValueError):
            CrosstalkModel(-0.01)


class TestEstimatePct:
    def test_reference_point(self):
        assert estimate_pct(0.818731, 0.149267) == pytest.approx(0.0970, abs=1e-4)

    def test_mean_from_p0_round_trip(self):
        for a0 in (0.05, 0.2, 1.0, 3.0):
            assert mean_from_p0(math.exp(-a0)) == pytest.approx(a0, rel=1e-12)

    def test_small_negative_clamps_quietly(self):
        p0 = math.exp(-0.2)
        p1 = 0.2 * p0 * (1.0 + 5e-8)  # slightly too full: p_ct ~ -5e-8
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert estimate_pct(p0, p1) == 0.0

    def test_large_negative_warns(self):
        p0 = math.exp(-0.2)
        with pytest.warns(NegativeCrosstalkWarning):
            assert estimate_pct(p0, 0.2 * p0 * 1.01) == 0.0

    def test_inconsistent_bins_raise(self):
        # p1 half the cross-talk-free value implies p_ct = 1.
        p0 = math.exp(-0.2)
        with pytest.raises(EstimationError):
            estimate_pct(p0, 0.2 * p0 / 2.0)
        with pytest.raises(ValueError):
            estimate_pct(0.0, 0.1)


class TestDetectionProbability:
    def test_closed_form_vs_series(self):
        # Truncated sum of P(k photons) * P(at least one of k detected).
        rng = np.random.default_rng(7)
        mus = rng.uniform(0.01, 10.0, 100)
        etas = rng.uniform(0.0, 1.0, 100)
        for mu, eta in zip(mus, etas):
            n_top = int(mu + 20.0 * math.sqrt(mu) + 40)
            series = sum(
                poisson_pmf(k, mu) * (1.0 - (1.0 - eta) ** k) for k in range(n_top)
            )
            closed = detection_probability(CoherentPulseModel(mu), eta)
            assert abs(closed - series) < 1e-12

    def test_limits(self):
        assert detection_probability(0.0, 0.5) == 0.0
        assert detection_probability(1e9, 0.5) == pytest.approx(1.0)
        assert detection_probability(2.0, 0.0) == 0.0

    def test_accepts_bare_mu(self):
        assert detection_probability(0.3, 0.083) == pytest.approx(
            -math.expm1(-0.3 * 0.083)
        )


class TestEfficiencyModel:
    def test_evaluation(self):
        m = EfficiencyModel(0.03, 0.157, 0.044)
        assert efficiency_at(m, 0.0) == pytest.approx(0.074)
        assert efficiency_at(m, 10.0) == pytest.approx(0.03 * math.exp(-1.57) + 0.044)
        assert m.asymptote == pytest.approx(0.044)

    def test_constant_member(self):
        m = EfficiencyModel.constant(0.083)
        assert m.is_constant
        assert efficiency_at(m, 5.0) == pytest.approx(0.083)
        assert m.asymptote == pytest.approx(0.083)

    def test_bare_float_is_constant_efficiency(self):
        assert efficiency_at(0.083, 3.0) == 0.083
        with pytest.raises(ValueError):
            efficiency_at(1.5, 0.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            EfficiencyModel(0.0, 0.1, 0.0)  # zero everywhere
        with pytest.raises(ValueError):
            EfficiencyModel(0.5, -1.0, 0.1)

    def test_pulsed_count_rate(self):
        rate = pulsed_count_rate(430e6, 0.2, 0.083)
        assert rate == pytest.approx(430e6 * -math.expm1(-0.2 * 0.083), rel=1e-12)
        with pytest.raises(ValueError):
            pulsed_count_rate(0.0, 0.2, 0.083)


class TestDeadTime:
    def test_non_paralyzable_formula(self):
        m = DeadTimeModel(50e-9)
        assert dead_time_rate(1e6, m) == pytest.approx(1e6 / 1.05, rel=1e-12)

    def test_ceiling(self):
        # tau = 1/470 MHz: the registered rate must approach 470 MHz.
        m = DeadTimeModel(1.0 / 470e6)
        assert dead_time_rate(1e11, m) == pytest.approx(467.8e6, rel=1e-3)
        assert dead_time_rate(1e13, m) < 470e6

    def test_paralyzable_rolls_over(self):
        m = DeadTimeModel(1e-6, kind="paralyzable")
        peak = dead_time_rate(1e6, m)
        assert peak == pytest.approx(1e6 / math.e, rel=1e-12)
        assert dead_time_rate(5e6, m) < peak

    @given(st.floats(min_value=1e3, max_value=1e10))
    @settings(max_examples=50)
    def test_non_paralyzable_monotone_and_bounded(self, rate):
        m = DeadTimeModel(2.13e-9)
        out = dead_time_rate(rate, m)
        assert 0.0 < out < 1.0 / 2.13e-9
        assert dead_time_rate(rate * 1.01, m) >= out

    def test_validation(self):
        with pytest.raises(ValueError):
            DeadTimeModel(0.0)
        with pytest.raises(ValueError):
            DeadTimeModel(1e-9, kind="sticky")
        with pytest.raises(ValueError):
            dead_time_rate(-1.0, DeadTimeModel(1e-9))


class TestPowerConversion:
    def test_reference_values(self):
        # h * c / 532 nm = 3.7339e-19 J per photon.
        assert photon_rate_to_power(5e9, 532e-9) == pytest.approx(1.8670e-9, rel=1e-3)
        assert photon_rate_to_power(1.2e6, 532e-9) == pytest.approx(4.4807e-13, rel=1e-3)

    @given(st.floats(min_value=1.0, max_value=1e12), st.floats(min_value=200e-9, max_value=2e-6))
    @settings(max_examples=50)
    def test_round_trip(self, rate, wavelength):
        power = photon_rate_to_power(rate, wavelength)
        assert power_to_photon_rate(power, wavelength) == pytest.approx(rate, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            photon_rate_to_power(-1.0, 532e-9)
        with pytest.raises(ValueError):
            power_to_photon_rate(1e-9, 0.0)


class TestConstantEfficiencyFit:
    @staticmethod
    def synthetic(mus, eta, rep_rate=430e6, noise=0.0, seed=0):
        rng = np.random.default_rng(seed)
        rates = rep_rate * -np.expm1(-np.asarray(mus) * eta)
        if noise:
            rates = rates * (1.0 + noise * rng.standard_normal(len(rates)))
        return list(zip(mus, rates))

    def test_exact_recovery(self):
        mus = np.geomspace(0.001, 0.08, 12)
        points = self.synthetic(mus, 0.083)
        assert fit_constant_efficiency(points, 430e6) == pytest.approx(0.083, abs=1e-6)

    def test_with_one_percent_noise(self):
        mus = np.geomspace(0.0005, 0.015, 50)
        points = self.synthetic(mus, 0.5, noise=0.01, seed=42)
        assert fit_constant_efficiency(points, 430e6) == pytest.approx(0.5, abs=0.01)

    def test_cutoff_drops_high_rate_points(self):
        # Points above the cutoff carry a droop that would bias the fit; the
        # default 3 MHz cutoff must exclude them.
        low = self.synthetic(np.geomspace(0.001, 0.05, 8), 0.083)
        high = [(5.0, 430e6 * 0.6), (20.0, 430e6 * 0.9)]
        eta = fit_constant_efficiency(low + high, 430e6)
        assert eta == pytest.approx(0.083, abs=1e-6)

    def test_too_few_points_raise(self):
        with pytest.raises(FitError):
            fit_constant_efficiency([(0.01, 1e5)], 430e6)
        with pytest.raises(FitError):
            # both points above the cutoff
            fit_constant_efficiency([(1.0, 1e8), (2.0, 2e8)], 430e6)


class TestEfficiencyModelFit:
    def test_recovers_generating_parameters(self):
        truth = EfficiencyModel(0.03, 0.157, 0.044)
        mus = np.geomspace(0.02, 100.0, 25)
        points = [(m, pulsed_count_rate(430e6, m, truth)) for m in mus]
        fit = fit_efficiency_model(points, 430e6)
        assert not fit.degenerate
        assert fit.model.p1 == pytest.approx(0.03, abs=1e-4)
        assert fit.model.p2 == pytest.approx(0.157, abs=1e-3)
        assert fit.model.p3 == pytest.approx(0.044, abs=1e-5)
        assert fit.residual_norm < 1.0

    def test_constant_data_flags_degenerate(self):
        mus = np.geomspace(0.01, 10.0, 20)
        points = [(m, pulsed_count_rate(430e6, m, 0.083)) for m in mus]
        fit = fit_efficiency_model(points, 430e6)
        assert fit.degenerate
        assert efficiency_at(fit.model, 0.0) == pytest.approx(0.083, rel=1e-3)

    def test_needs_a_decade_of_mu(self):
        points = [(m, 1e5) for m in (1.0, 2.0, 3.0, 4.0)]
        with pytest.raises(FitError):
            fit_efficiency_model(points, 430e6)

    def test_needs_four_points(self):
        with pytest.raises(FitError):
            fit_efficiency_model([(0.1, 1e5), (1.0, 1e6), (10.0, 1e7)], 430e6)
