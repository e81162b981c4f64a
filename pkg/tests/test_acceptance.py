"""Acceptance suite: the headline claims of the package, one test per claim.

Each test prints a single ``[criterion NN] PASS/FAIL`` line (run pytest with
``-s`` to see them) and then asserts.  Tolerances are fixed here, not derived
from the implementation; the statistical checks run from one frozen master
seed so the suite is deterministic.

Criterion 10 includes a noise clause that is analytically unreachable with
the stated operating point: nearest-integer binning of a 110 mV comb over
15 mV RMS Gaussian noise cannot misclassify less often than the single
boundary tail P(N(0, 15) > 55) = 1.22e-4, which already exceeds the 1e-4
budget.  The test states the requirement as written and is expected to fail.
"""

import math

import numpy as np
import pytest
from scipy import stats as sps

from sipmsim.analog import ChainConfig, add_noise, high_pass, synthesize
from sipmsim.device import (
    SipmConfig,
    multiplicities_per_trigger,
    simulate_sipm,
)
from sipmsim.discriminate import (
    DiscriminatorConfig,
    classify_amplitudes,
    count_peaks,
    measure_amplitudes,
)
from sipmsim.experiments import (
    RESOLUTION_TIME,
    exp_cw,
    exp_multiphoton,
    exp_pulsed_430,
    exp_saturation,
    run_experiment,
    run_from_manifest,
)
from sipmsim.rng import rng_from_seed, spawn_seeds
from sipmsim.source import PhotonArrivals, SourceConfig, generate
from sipmsim.stats import (
    CrosstalkModel,
    DeadTimeModel,
    DetectionDistribution,
    crosstalk_redistribute,
    dead_time_rate,
    detection_probability,
    photon_rate_to_power,
)

GOLDEN_SEED = 20260824
#: SeedSequence children for direct component seeding; experiment runs take
#: plain integers (recorded in their manifests) offset from the same master.
SEEDS = spawn_seeds(GOLDEN_SEED, 16)


def report(number: int, passed: bool, detail: str) -> str:
    line = f"[criterion {number:02d}] {'PASS' if passed else 'FAIL'}  {detail}"
    print("\n" + line, flush=True)
    return line


def test_criterion_01_bunch_spectrum_matches_crosstalk_model():
    """Simulated multiplicities of 0.2-mean coherent bunches follow the
    first-order cross-talk redistribution of the Poisson law, per bin."""
    trials = 1_000_000
    rep_rate = 125e6
    source = SourceConfig(
        kind="pulsed", mu=0.2, rep_rate=rep_rate, pulse_width=0.0,
        duration=trials / rep_rate,
    )
    arrivals = generate(source, seed=SEEDS[0])
    device = SipmConfig(p_ct=0.097, eta=1.0, dark_rate_total=0.0, recovery_time=5e-9)
    events = simulate_sipm(arrivals, device, seed=SEEDS[1])
    mult = multiplicities_per_trigger(events, np.arange(trials) / rep_rate, 1e-9)
    counts = np.bincount(mult, minlength=7)

    model = crosstalk_redistribute(
        DetectionDistribution.from_poisson(0.2, 24), CrosstalkModel(0.097)
    )
    z_scores = []
    for n in range(7):
        p = model.prob(n)
        sigma = math.sqrt(trials * p * (1.0 - p))
        z_scores.append((counts[n] - trials * p) / sigma)
    worst = max(abs(z) for z in z_scores)
    passed = worst < 4.0
    line = report(
        1, passed,
        f"bunch multiplicity spectrum vs cross-talk model: max |z| = {worst:.2f} "
        f"over n <= 6 at {trials} triggers (limit 4.0)",
    )
    assert passed, line


def test_criterion_02_pct_recovered_from_end_to_end_runs():
    """estimate_pct applied to full-chain multiphoton runs recovers the
    configured cross-talk probability to +-0.01."""
    errors = {}
    for i, true_pct in enumerate((0.05, 0.097, 0.15)):
        result = exp_multiphoton(
            a0_list=(0.2,), p_ct=true_pct, trials=1_000_000, seed=GOLDEN_SEED + 21 + i
        )
        estimate = result.summary["per_a0"][repr(0.2)]["estimated_p_ct"]
        errors[true_pct] = estimate - true_pct
    worst = max(abs(e) for e in errors.values())
    passed = worst <= 0.01
    detail = ", ".join(f"p_ct={p}: {p + e:.4f}" for p, e in errors.items())
    line = report(
        2, passed,
        f"cross-talk probability from end-to-end runs ({detail}); "
        f"max error {worst:.4f} (limit 0.01)",
    )
    assert passed, line


def test_criterion_03_detection_probability_closed_form():
    """1 - exp(-mu eta) equals the Poisson series of at-least-one-detection
    to 1e-12 over a 100-point (mu, eta) grid."""
    n = np.arange(1, 201)
    worst = 0.0
    for mu in np.linspace(0.1, 10.0, 10):
        pmf = sps.poisson.pmf(n, mu)
        for eta in np.linspace(0.01, 0.99, 10):
            series = float(np.sum(pmf * (1.0 - (1.0 - eta) ** n)))
            worst = max(worst, abs(detection_probability(mu, eta) - series))
    passed = worst < 1e-12
    line = report(
        3, passed,
        f"closed-form detection probability vs truncated series: "
        f"max |difference| = {worst:.2e} over 100 grid points (limit 1e-12)",
    )
    assert passed, line


def test_criterion_04_nanosecond_pair_and_full_rate_train():
    """Two single-cell pulses 2.3 ns apart resolve as two counts at the 40 mV
    threshold under 15 mV noise; a noiseless 430 MHz train over 1 us counts
    exactly once per pulse."""
    chain = ChainConfig(noise_rms=15.0)
    template = chain.template()
    pair = high_pass(
        synthesize([0.0, 2.3e-9], template, (0.0, 3.5e-9), chain.sample_period),
        chain.hp_cutoff,
    )
    disc = DiscriminatorConfig(threshold_mv=40.0, min_separation=2.0e-9)
    noise_seeds = spawn_seeds(SEEDS[5], 10_000)
    good = sum(
        count_peaks(add_noise(pair, chain.noise_rms, seed), disc) == 2
        for seed in noise_seeds
    )
    fraction = good / len(noise_seeds)

    train_times = np.arange(430) / 430e6
    train = high_pass(
        synthesize(train_times, template, (0.0, 1e-6), chain.sample_period),
        chain.hp_cutoff,
    )
    train_count = count_peaks(train, DiscriminatorConfig(threshold_mv=40.0))

    passed = fraction >= 0.99 and train_count == 430
    line = report(
        4, passed,
        f"2.3 ns pair resolved in {fraction:.2%} of {len(noise_seeds)} noise "
        f"draws (limit 99%); noiseless 430 MHz train counted {train_count}/430",
    )
    assert passed, line


def test_criterion_05_array_counts_where_a_single_diode_saturates():
    """At a 40 MHz saturated pulse train the full chain still registers the
    pulse rate to 2% while one 50 ns dead-time diode stays at or below 20 MHz."""
    result = exp_saturation(freqs=(40e6,), seed=GOLDEN_SEED + 5)
    _, sipm_rate, apd_rate = result.results_rows[0]
    sipm_err = abs(sipm_rate - 40e6) / 40e6
    passed = sipm_err <= 0.02 and apd_rate <= 20e6
    line = report(
        5, passed,
        f"40 MHz saturated train: chain counted {sipm_rate / 1e6:.2f} MHz "
        f"(limit 40 +- 2%), single diode {apd_rate / 1e6:.2f} MHz (limit <= 20)",
    )
    assert passed, line


def test_criterion_06_constant_eta_fit_on_low_rate_pulsed_data():
    """A constant-efficiency fit restricted to count rates <= 3 MHz recovers
    the configured eta = 0.083 to +-0.005."""
    result = exp_pulsed_430(seed=GOLDEN_SEED + 6)
    eta_fit = result.summary["eta_fit"]
    passed = abs(eta_fit - 0.083) <= 0.005
    line = report(
        6, passed,
        f"constant-eta fit on pulsed data below 3 MHz: eta = {eta_fit:.5f} "
        f"from {result.summary['eta_fit_points']} points (limit 0.083 +- 0.005)",
    )
    assert passed, line


def dark_cause_count(temperature_c: float, seed) -> int:
    arrivals = PhotonArrivals(
        np.empty(0), SourceConfig(kind="cw", photon_rate=1.0, duration=1.0)
    )
    config = SipmConfig.for_temperature(temperature_c)
    events = simulate_sipm(arrivals, config, seed=seed)
    return events.count_by_cause()["dark"]


def test_criterion_07_dark_rates_track_the_temperature_table():
    """One second of darkness yields 50000 +- 4*224 thermal counts at -7 C,
    and 227 Hz per pixel +- 2% at the 30 kHz cold setting."""
    total_warm = dark_cause_count(-7.0, SEEDS[8])
    total_cold = dark_cause_count(-14.0, SEEDS[9])
    per_pixel = total_cold / 132 / 1.0
    warm_ok = abs(total_warm - 50_000) <= 4 * 224
    cold_ok = abs(per_pixel - 227.0) <= 0.02 * 227.0
    passed = warm_ok and cold_ok
    line = report(
        7, passed,
        f"1 s dark at -7 C: {total_warm} thermal counts (limit 50000 +- 896); "
        f"cold setting: {per_pixel:.1f} Hz/pixel (limit 227 +- 2%)",
    )
    assert passed, line


def test_criterion_08_count_rate_to_optical_power():
    """Photon rates at 532 nm convert to the calibrated optical powers."""
    nw = photon_rate_to_power(5e9, 532e-9)
    pw = photon_rate_to_power(1.2e6, 532e-9)
    err_nw = abs(nw - 1.9e-9) / 1.9e-9
    err_pw = abs(pw - 0.45e-12) / 0.45e-12
    passed = err_nw <= 0.03 and err_pw <= 0.03
    line = report(
        8, passed,
        f"5 GHz @ 532 nm -> {nw * 1e9:.3f} nW (limit 1.9 +- 3%); "
        f"1.2 MHz -> {pw * 1e12:.3f} pW (limit 0.45 +- 3%)",
    )
    assert passed, line


def test_criterion_09_pileup_ceiling_and_low_rate_slope():
    """The non-paralyzable resolution time caps the registered rate at
    470 +- 20 MHz, and the CW count rate rises with slope eta +- 2%."""
    model = DeadTimeModel(tau=RESOLUTION_TIME, kind="non-paralyzable")
    ceiling = dead_time_rate(1e11, model)
    ceiling_ok = abs(ceiling - 470e6) <= 20e6

    result = exp_cw(seed=GOLDEN_SEED + 9)
    slope = result.summary["slope_linear"]
    slope_ok = abs(slope - 0.083) <= 0.02 * 0.083
    passed = ceiling_ok and slope_ok
    line = report(
        9, passed,
        f"registered rate at 1e11/s input: {ceiling / 1e6:.1f} MHz "
        f"(limit 470 +- 20); CW low-rate slope {slope:.5f} (limit 0.083 +- 2%)",
    )
    assert passed, line


def test_criterion_10_photon_number_comb_and_noise_classification():
    """Noiseless n-cell peaks land exactly on n x 110 mV for n <= 10; with
    15 mV RMS noise the photon-number assignment must stay within a 1e-4
    error budget (analytically unreachable -- see the module docstring)."""
    chain = ChainConfig(noise_rms=0.0)
    template = chain.template()
    worst_rel = 0.0
    for n in range(1, 11):
        wave = high_pass(
            synthesize([0.0] * n, template, (0.0, 75e-9), chain.sample_period),
            chain.hp_cutoff,
        )
        peak = measure_amplitudes(wave, [0.0], gate=5e-9).amplitudes[0]
        worst_rel = max(worst_rel, abs(peak - n * 110.0) / (n * 110.0))
    comb_ok = worst_rel < 1e-9

    rng = rng_from_seed(SEEDS[11])
    trials = 100_000
    true_n = rng.integers(0, 11, trials)
    amplitudes = true_n * 110.0 + rng.normal(0.0, 15.0, trials)
    labels = classify_amplitudes(amplitudes, gain_mv=110.0, noise_rms=15.0).labels
    misclassified = float(np.mean(labels != true_n))
    noise_ok = misclassified <= 1e-4

    passed = comb_ok and noise_ok
    line = report(
        10, passed,
        f"noiseless comb off by at most {worst_rel:.1e} relative (limit 1e-9); "
        f"misclassification under 15 mV noise = {misclassified:.2e} (limit 1e-4)",
    )
    assert passed, line


#: Reduced-scale parameters per experiment for the replay check; determinism
#: does not depend on the run size.
REPLAY_CASES = (
    ("multiphoton", {"a0_list": (0.2,), "trials": 50_000}),
    ("saturation", {"freqs": (5e6, 40e6), "duration": 2e-5}),
    (
        "pulsed_430",
        {
            "mu_sweep": (0.03, 0.05, 1.0),
            "modes": ("linear",),
            "pulses_target": 2000,
            "pulses_cap": 50_000,
            "photon_cap": 1e6,
        },
    ),
    ("cw", {"rate_sweep": (1e5, 1e9)}),
    ("power_meter", {}),
)


def test_criterion_11_manifest_replay_is_byte_identical(tmp_path):
    """Re-running every experiment from its recorded manifest regenerates the
    result and model CSV files byte for byte."""
    mismatched = []
    for name, params in REPLAY_CASES:
        result = run_experiment(name, seed=GOLDEN_SEED + 11, **params)
        first = result.write(tmp_path / name / "first")
        replayed = run_from_manifest(first["manifest"], out_dir=tmp_path / name / "replay")
        for kind in ("results", "model"):
            if first[kind].read_bytes() != replayed[kind].read_bytes():
                mismatched.append(f"{name}/{kind}")
    passed = not mismatched
    line = report(
        11, passed,
        f"all {len(REPLAY_CASES)} experiments replayed from their manifests "
        "byte-for-byte"
        if passed
        else f"replay differed for: {', '.join(mismatched)}",
    )
    assert passed, line
