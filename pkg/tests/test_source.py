"""Tests for photon arrival-time generation."""

import math

import numpy as np
import pytest
from scipy import stats as sps

from sipmsim.source import (
    ARRIVALS_HEADER,
    PhotonArrivals,
    SourceConfig,
    generate,
    generate_cw,
    generate_pulsed,
    load_arrivals_csv,
    save_arrivals_csv,
    with_duration,
)


class TestSourceConfig:
    def test_defaults_valid(self):
        cfg = SourceConfig()
        assert cfg.kind == "pulsed"
        assert cfg.rep_rate == 430e6

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "strobe"},
            {"mu": -0.1},
            {"rep_rate": 0.0},
            {"duration": -1e-6},
            {"pulse_width": 3e-9, "rep_rate": 430e6},  # wider than the period
            {"kind": "cw", "photon_rate": -5.0},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SourceConfig(**kwargs)

    def test_with_duration_only_changes_duration(self):
        cfg = SourceConfig(mu=1.5, duration=1e-4)
        out = with_duration(cfg, 2e-3)
        assert out.duration == 2e-3
        assert out.mu == cfg.mu and out.seed == cfg.seed


class TestPulsed:
    def test_zero_width_photons_on_the_grid(self):
        cfg = SourceConfig(mu=3.0, rep_rate=1e6, pulse_width=0.0, duration=2e-5, seed=5)
        arr = generate_pulsed(cfg)
        slots = arr.times * 1e6
        np.testing.assert_array_equal(slots, np.round(slots))
        assert arr.times.max() < 2e-5

    def test_photons_stay_inside_their_pulse(self):
        cfg = SourceConfig(mu=2.0, rep_rate=1e6, pulse_width=10e-9, duration=5e-5, seed=1)
        arr = generate_pulsed(cfg)
        offset = arr.times - np.floor(arr.times * 1e6 + 1e-9) / 1e6
        assert offset.min() >= 0.0
        assert offset.max() <= 10e-9

    def test_pulse_count_floor(self):
        # duration is a whole-period budget: 2.5 periods yield pulses 0 and 1
        cfg = SourceConfig(mu=50.0, rep_rate=1e6, pulse_width=0.0, duration=2.5e-6, seed=3)
        arr = generate_pulsed(cfg)
        assert set(np.round(arr.times * 1e6).astype(int)) == {0, 1}

    def test_total_count_is_poissonian(self):
        n_pulses, mu = 20000, 0.7
        cfg = SourceConfig(mu=mu, rep_rate=1e6, pulse_width=0.0,
                           duration=n_pulses / 1e6, seed=11)
        arr = generate_pulsed(cfg)
        mean = n_pulses * mu
        z = (len(arr) - mean) / math.sqrt(mean)
        assert abs(z) < 4.0

    def test_per_pulse_counts_match_poisson(self):
        n_pulses, mu = 50000, 0.8
        cfg = SourceConfig(mu=mu, rep_rate=1e6, pulse_width=0.0,
                           duration=n_pulses / 1e6, seed=23)
        arr = generate_pulsed(cfg)
        per_pulse = np.bincount(np.round(arr.times * 1e6).astype(int), minlength=n_pulses)
        observed = np.bincount(per_pulse, minlength=7)[:7].astype(float)
        expected = np.array(
            [n_pulses * math.exp(-mu) * mu**k / math.factorial(k) for k in range(7)]
        )
        # fold the tail into the last bin so the chi-square is well posed
        observed[-1] += n_pulses - observed.sum()
        expected[-1] += n_pulses - expected.sum()
        chi2 = float(((observed - expected) ** 2 / expected).sum())
        assert chi2 < sps.chi2.ppf(0.999, df=6)

    def test_zero_mu_and_zero_duration(self):
        assert len(generate_pulsed(SourceConfig(mu=0.0, duration=1e-5))) == 0
        assert len(generate_pulsed(SourceConfig(duration=0.0))) == 0


class TestCw:
    def test_count_matches_rate(self):
        cfg = SourceConfig(kind="cw", photon_rate=2e6, duration=1e-2, seed=17)
        arr = generate_cw(cfg)
        mean = 2e6 * 1e-2
        assert abs(len(arr) - mean) / math.sqrt(mean) < 4.0

    def test_arrivals_are_uniform(self):
        cfg = SourceConfig(kind="cw", photon_rate=1e6, duration=5e-3, seed=29)
        arr = generate_cw(cfg)
        result = sps.kstest(arr.times / 5e-3, "uniform")
        assert result.pvalue > 1e-3

    def test_gaps_are_exponential(self):
        cfg = SourceConfig(kind="cw", photon_rate=3e6, duration=5e-3, seed=31)
        gaps = np.diff(generate_cw(cfg).times)
        assert gaps.mean() == pytest.approx(1.0 / 3e6, rel=0.05)
        result = sps.kstest(gaps * 3e6, "expon")
        assert result.pvalue > 1e-3

    def test_zero_rate_is_empty(self):
        assert len(generate_cw(SourceConfig(kind="cw", photon_rate=0.0))) == 0

    def test_kind_mismatch_raises(self):
        with pytest.raises(ValueError):
            generate_cw(SourceConfig(kind="pulsed"))
        with pytest.raises(ValueError):
            generate_pulsed(SourceConfig(kind="cw"))


class TestDeterminism:
    def test_same_seed_same_stream(self):
        cfg = SourceConfig(mu=1.0, duration=1e-5, seed=99)
        np.testing.assert_array_equal(generate(cfg).times, generate(cfg).times)

    def test_seed_argument_overrides_config(self):
        cfg = SourceConfig(mu=1.0, duration=1e-5, seed=99)
        a = generate(cfg, seed=123)
        b = generate(cfg, seed=123)
        c = generate(cfg)
        np.testing.assert_array_equal(a.times, b.times)
        assert not np.array_equal(a.times, c.times)

    def test_cw_deterministic(self):
        cfg = SourceConfig(kind="cw", photon_rate=1e6, duration=1e-3, seed=7)
        np.testing.assert_array_equal(generate(cfg).times, generate(cfg).times)


class TestArrivalsContainer:
    def test_rejects_unsorted(self):
        cfg = SourceConfig(kind="cw", duration=1.0)
        with pytest.raises(ValueError):
            PhotonArrivals(np.array([0.2, 0.1]), cfg)

    def test_rejects_out_of_window(self):
        cfg = SourceConfig(kind="cw", duration=1.0)
        with pytest.raises(ValueError):
            PhotonArrivals(np.array([0.5, 1.5]), cfg)
        with pytest.raises(ValueError):
            PhotonArrivals(np.array([-0.1]), cfg)
        with pytest.raises(ValueError):
            PhotonArrivals(np.array([np.inf]), cfg)

    def test_times_read_only(self):
        arr = generate(SourceConfig(mu=0.5, duration=1e-5, seed=0))
        with pytest.raises(ValueError):
            arr.times[0] = 0.0


class TestCsvRoundTrip:
    def test_exact_round_trip(self, tmp_path):
        cfg = SourceConfig(kind="cw", photon_rate=1e6, duration=1e-3, seed=3)
        arr = generate(cfg)
        path = tmp_path / "arrivals.csv"
        save_arrivals_csv(arr, path)
        back = load_arrivals_csv(path, source=cfg)
        np.testing.assert_array_equal(back.times, arr.times)
        assert back.duration == arr.duration

    def test_load_without_source_covers_data(self, tmp_path):
        arr = generate(SourceConfig(mu=1.0, duration=1e-5, seed=4))
        path = tmp_path / "arrivals.csv"
        save_arrivals_csv(arr, path)
        back = load_arrivals_csv(path)
        np.testing.assert_array_equal(back.times, arr.times)
        assert back.duration >= back.times[-1]

    def test_empty_round_trip(self, tmp_path):
        arr = PhotonArrivals(np.empty(0), SourceConfig(kind="cw", photon_rate=0.0))
        path = tmp_path / "empty.csv"
        save_arrivals_csv(arr, path)
        assert len(load_arrivals_csv(path)) == 0

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("wrong_header\n1.0\n")
        with pytest.raises(ValueError, match=ARRIVALS_HEADER):
            load_arrivals_csv(path)
