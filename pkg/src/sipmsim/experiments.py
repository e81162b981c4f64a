"""End-to-end simulated measurements with reproducible manifests.

Each experiment drives the whole stack — photon source, pixel array, analog
chain, discriminator — and writes three artefacts into its output directory:

* ``<name>_results.csv``   measured (Monte Carlo) quantities
* ``<name>_model.csv``     the analytic model evaluated on the same grid
* ``<name>_manifest.json`` everything needed to re-run bit-for-bit

plus an optional SVG plot.  ``run_from_manifest`` replays a manifest and
regenerates byte-identical CSVs; all floating-point CSV fields are written
with ``repr`` so the round trip is exact.

Counting experiments run the chain without additive noise by default: sampled
white noise at these rates produces threshold crossings at an unphysical rate
(real amplifier noise is band-limited), and the quantities under test are
count rates, not noise performance.  The choice is recorded in every
manifest's assumption list.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analog import ChainConfig, ChainStream, Waveform
from .device import ApdConfig, SipmConfig, simulate_apd, simulate_sipm
from .discriminate import (
    DiscriminatorConfig,
    PeakScanner,
    classify_amplitudes,
    estimate_gain,
    measure_amplitudes,
)
from .rng import RNG_ALGORITHM, spawn_seeds
from .source import SourceConfig, generate
from .stats import (
    CrosstalkModel,
    DeadTimeModel,
    DetectionDistribution,
    EfficiencyModel,
    RatePoint,
    crosstalk_redistribute,
    dead_time_rate,
    estimate_pct,
    fit_constant_efficiency,
    photon_rate_to_power,
    poisson_pmf,
    pulsed_count_rate,
)

DEFAULT_SEED = 1
RESOLUTION_TIME = 1.0 / 470e6  # non-paralyzable pile-up constant of the counting chain
_BLOCK_SAMPLES = 1 << 22

EXPERIMENT_NAMES = ("multiphoton", "saturation", "pulsed_430", "cw", "power_meter")


@dataclass(frozen=True)
class ExperimentSpec:
    """Identity of one run: which experiment, over which grid, how hard, which seed."""

    name: str
    sweep: tuple
    trials: int
    seed: int
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in EXPERIMENT_NAMES:
            raise ValueError(f"unknown experiment {self.name!r}; know {EXPERIMENT_NAMES}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if len(self.sweep) == 0:
            raise ValueError("sweep grid must be nonempty")


@dataclass
class ExperimentResult:
    name: str
    results_header: tuple
    results_rows: list
    model_header: tuple
    model_rows: list
    manifest: dict
    summary: dict

    def write(self, out_dir, plot: bool = False) -> dict:
        """Write CSVs + manifest (+ optional SVG); returns {kind: path}."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "results": out_dir / f"{self.name}_results.csv",
            "model": out_dir / f"{self.name}_model.csv",
            "manifest": out_dir / f"{self.name}_manifest.json",
        }
        _write_csv(paths["results"], self.results_header, self.results_rows)
        _write_csv(paths["model"], self.model_header, self.model_rows)
        manifest = dict(self.manifest)
        manifest["outputs"] = {k: paths[k].name for k in ("results", "model")}
        manifest["summary"] = self.summary
        paths["manifest"].write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        if plot:
            paths["plot"] = out_dir / f"{self.name}.svg"
            _plot(self, paths["plot"])
        return paths


def _csv_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_csv_cell(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _manifest(spec: ExperimentSpec, assumptions: list[str]) -> dict:
    return {
        "experiment": spec.name,
        "package": "sipmsim",
        "version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "seed": spec.seed,
        "trials": spec.trials,
        "sweep": list(spec.sweep),
        "parameters": spec.parameters,
        "assumptions": assumptions,
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


_BASE_ASSUMPTIONS = [
    "pixel array modelled as a 12x11 row-major grid with 4-neighbour cross-talk",
    "analog chain: double-exponential template (150 ps rise / 15 ns fall) through a "
    "first-order 500 MHz high-pass, post-filter single-cell peak calibrated to 110 mV",
    "discriminator rearm rule: an accepted crossing blocks further crossings for "
    "min_separation seconds",
    "additive chain noise disabled for counting (white sampled noise is not a physical "
    "model of band-limited amplifier noise at these sample rates)",
]


def _count_blocks(stream: ChainStream, scanner: PeakScanner, n_samples: int) -> int:
    left = n_samples
    while left > 0:
        n = min(_BLOCK_SAMPLES, left)
        scanner.feed(stream.next_block(n))
        left -= n
    return scanner.count


# ---------------------------------------------------------------------------
# multiphoton: pulse-height statistics of coherent bunches vs the cross-talk model


def exp_multiphoton(
    a0_list=(0.2, 1.0, 2.0),
    p_ct: float = 0.097,
    trials: int = 100_000,
    seed: int = DEFAULT_SEED,
    n_max: int = 12,
) -> ExperimentResult:
    """Detection-multiplicity spectrum per bunch mean a0, against Poisson and
    the cross-talk redistribution model, with p_ct re-estimated from the data.

    The bunch mean is realised directly as the thermal (pre-cross-talk) mean:
    the device runs at eta = 1 so a0 is the Poisson mean of primary avalanches,
    matching the quantity the analytic model takes as input.
    """
    a0_list = tuple(float(a) for a in a0_list)
    if any(a <= 0 for a in a0_list):
        raise ValueError("every a0 must be > 0")
    spec = ExperimentSpec(
        "multiphoton",
        a0_list,
        trials,
        seed,
        {"p_ct": p_ct, "n_max": n_max},
    )

    rep_rate = 125e6  # 8 ns spacing: pulses are independent yet the run stays desk-scale
    sample_period = 2e-10
    gate = 5e-10
    spacing_samples = round(1.0 / rep_rate / sample_period)
    device = SipmConfig(p_ct=p_ct, eta=1.0, dark_rate_total=0.0, recovery_time=5e-9)
    chain = ChainConfig(noise_rms=0.0, sample_period=sample_period)
    template = chain.template()
    crosstalk = CrosstalkModel(p_ct)

    results_rows = []
    model_rows = []
    summary: dict = {"per_a0": {}}
    seeds = spawn_seeds(seed, 2 * len(a0_list))
    for k, a0 in enumerate(a0_list):
        source = SourceConfig(
            kind="pulsed", mu=a0, rep_rate=rep_rate, pulse_width=0.0,
            duration=trials / rep_rate,
        )
        arrivals = generate(source, seed=seeds[2 * k])
        events = simulate_sipm(arrivals, device, seed=seeds[2 * k + 1])
        pulse_times = np.arange(trials) / rep_rate

        # Amplitude per trigger gate, streamed so the waveform never has to
        # exist in one piece.  Blocks are aligned to the pulse spacing, so no
        # gate straddles a block boundary.
        pulses_per_block = max(_BLOCK_SAMPLES // spacing_samples, 1)
        stream = ChainStream(events.times, template, chain)
        amplitudes = np.empty(trials)
        done = 0
        while done < trials:
            n_pulses = min(pulses_per_block, trials - done)
            block = stream.next_block(n_pulses * spacing_samples)
            wave = Waveform(block, sample_period, t0=done / rep_rate)
            measured = measure_amplitudes(wave, pulse_times[done:done + n_pulses], gate)
            amplitudes[done:done + n_pulses] = measured.amplitudes
            done += n_pulses

        gain = estimate_gain(amplitudes[amplitudes > 0.0], bin_width=2.0)
        classified = classify_amplitudes(amplitudes, gain)
        counts = np.zeros(n_max + 1, dtype=np.int64)
        upto = min(classified.counts.size, n_max + 1)
        counts[:upto] = classified.counts[:upto]
        empirical = counts / trials

        thermal = DetectionDistribution.from_poisson(a0, n_max)
        model = crosstalk_redistribute(thermal, crosstalk)
        for n in range(n_max + 1):
            results_rows.append((a0, n, int(counts[n]), float(empirical[n])))
            model_rows.append((a0, n, poisson_pmf(n, a0), model.prob(n)))

        pct_hat = estimate_pct(float(empirical[0]), float(empirical[1]))
        summary["per_a0"][repr(a0)] = {
            "gain_mv": float(gain),
            "estimated_p_ct": float(pct_hat),
            "triggers": trials,
        }

    manifest = _manifest(
        spec,
        _BASE_ASSUMPTIONS
        + [
            "bunches delivered at 125 MHz with zero pulse width; device eta = 1 and "
            "recovery 5 ns so triggers are independent and a0 is the thermal mean",
            "dark counts off (pure bunch statistics)",
            "gain auto-calibrated from the amplitude-histogram mode spacing",
        ],
    )
    return ExperimentResult(
        "multiphoton",
        ("a0", "n", "count", "p_empirical"),
        results_rows,
        ("a0", "n", "p_poisson", "p_crosstalk_model"),
        model_rows,
        manifest,
        summary,
    )


# ---------------------------------------------------------------------------
# saturation: counting a bright pulsed source, SiPM chain vs one APD


def exp_saturation(
    freqs=(1e6, 2e6, 5e6, 10e6, 15e6, 20e6, 25e6, 30e6, 35e6, 40e6),
    mu: float = 130.0,
    duration: float = 50e-6,
    seed: int = DEFAULT_SEED,
) -> ExperimentResult:
    """Registered rate vs repetition rate for bright (saturating) pulses.

    Each pulse carries mu photons spread over 10 ns, enough that both
    detectors fire on any pulse they are live for; the single APD therefore
    plateaus at 1 / dead time while the array keeps counting.
    """
    freqs = tuple(float(f) for f in freqs)
    spec = ExperimentSpec("saturation", freqs, 1, seed, {"mu": mu, "duration": duration})
    device = SipmConfig()
    apd = ApdConfig()
    chain = ChainConfig(noise_rms=0.0)
    template = chain.template()
    # Hold-off longer than the pulse so one bright pulse is one count.
    disc = DiscriminatorConfig(threshold_mv=40.0, min_separation=12e-9)
    pulse_width = 10e-9

    results_rows = []
    model_rows = []
    seeds = spawn_seeds(seed, 3 * len(freqs))
    n_samples = int(math.floor(duration / chain.sample_period)) + 1
    for k, f in enumerate(freqs):
        source = SourceConfig(
            kind="pulsed", mu=mu, rep_rate=f, pulse_width=pulse_width, duration=duration
        )
        arrivals = generate(source, seed=seeds[3 * k])
        events = simulate_sipm(arrivals, device, seed=seeds[3 * k + 1])
        stream = ChainStream(events.times, template, chain)
        scanner = PeakScanner(disc, chain.sample_period)
        sipm_count = _count_blocks(stream, scanner, n_samples)
        apd_times = simulate_apd(arrivals, apd, seed=seeds[3 * k + 2])
        results_rows.append((f, sipm_count / duration, apd_times.size / duration))
        # A saturated pulse train through a non-paralyzable detector locks to
        # every ceil(f*tau)-th pulse.
        blocked = max(math.ceil(f * apd.dead_time - 1e-9), 1)
        model_rows.append((f, f, f / blocked))

    sipm_rates = [r[1] for r in results_rows]
    summary = {
        "sipm_rate_at_max_f": sipm_rates[-1],
        "max_f": freqs[-1],
        "apd_rate_at_max_f": results_rows[-1][2],
        "sipm_monotone": bool(all(b > a for a, b in zip(sipm_rates, sipm_rates[1:]))),
    }
    manifest = _manifest(
        spec,
        _BASE_ASSUMPTIONS
        + [
            f"bright pulses: mu = {mu} photons over {pulse_width * 1e9:g} ns "
            "(LED-like), discriminator hold-off 12 ns so each pulse is one count",
        ],
    )
    return ExperimentResult(
        "saturation",
        ("rep_rate_hz", "sipm_rate_hz", "apd_rate_hz"),
        results_rows,
        ("rep_rate_hz", "sipm_model_hz", "apd_model_hz"),
        model_rows,
        manifest,
        summary,
    )


# ---------------------------------------------------------------------------
# pulsed_430: count rate vs intensity for the 430 MHz pulsed source


def exp_pulsed_430(
    mu_sweep=(0.0, 0.02, 0.05, 0.084, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0),
    seed: int = DEFAULT_SEED,
    rep_rate: float = 430e6,
    modes=("linear", "soft"),
    pulses_target: int = 20_000,
    pulses_cap: int = 860_000,
    photon_cap: float = 2e7,
) -> ExperimentResult:
    """Full-chain count rate against the pulsed-source models, per amplifier mode.

    The linear chain should follow f * (1 - exp(-mu eta)); the saturating
    amplifier flattens the summed signal at high intensity and the recovered
    derivative (and hence the count rate) collapses.  The low-rate points feed
    a constant-eta fit whose result is reported in the summary.

    Each sweep point runs long enough to collect about ``pulses_target``
    firing pulses, within a ceiling of ``pulses_cap`` pulses and ``photon_cap``
    generated photons (bright points need very little wall time; dim points
    need many pulses).
    """
    mu_sweep = tuple(float(m) for m in mu_sweep)
    if any(m < 0 for m in mu_sweep):
        raise ValueError("mu must be >= 0")
    spec = ExperimentSpec(
        "pulsed_430", mu_sweep, 1, seed,
        {
            "rep_rate": rep_rate,
            "modes": list(modes),
            "pulses_target": pulses_target,
            "pulses_cap": pulses_cap,
            "photon_cap": photon_cap,
        },
    )
    device = SipmConfig()
    sample_period = 2e-10
    chains = {
        mode: ChainConfig(noise_rms=0.0, sample_period=sample_period, amp_mode=mode)
        for mode in modes
    }
    template = next(iter(chains.values())).template()
    disc = DiscriminatorConfig(threshold_mv=40.0, min_separation=0.0)
    eta_mu_model = EfficiencyModel()

    def point_pulses(mu: float) -> int:
        p_fire = -math.expm1(-mu * device.eta)
        n = float(pulses_cap) if p_fire <= 0 else min(pulses_cap, pulses_target / p_fire)
        if mu > 0:
            n = min(n, photon_cap / mu)
        return max(int(n), 1000)

    results_rows = []
    model_rows = []
    rates_by_mode: dict[str, list[float]] = {mode: [] for mode in modes}
    seeds = spawn_seeds(seed, 2 * len(mu_sweep))
    for k, mu in enumerate(mu_sweep):
        duration = point_pulses(mu) / rep_rate
        n_samples = int(math.floor(duration / sample_period)) + 1
        source = SourceConfig(kind="pulsed", mu=mu, rep_rate=rep_rate, duration=duration)
        arrivals = generate(source, seed=seeds[2 * k])
        events = simulate_sipm(arrivals, device, seed=seeds[2 * k + 1])
        incident = mu * rep_rate
        for mode in modes:
            stream = ChainStream(events.times, template, chains[mode])
            scanner = PeakScanner(disc, sample_period)
            count = _count_blocks(stream, scanner, n_samples)
            rate = count / duration
            rates_by_mode[mode].append(rate)
            results_rows.append((mode, mu, incident, rate))
        model_rows.append(
            (
                mu,
                incident,
                pulsed_count_rate(rep_rate, mu, device.eta),
                pulsed_count_rate(rep_rate, mu, eta_mu_model),
            )
        )

    # Constant-eta fit on the low-rate linear-mode points, dark floor removed.
    fit_mode = "linear" if "linear" in rates_by_mode else list(modes)[0]
    points = [
        RatePoint(mu, max(rate - device.dark_rate_total, 0.0))
        for mu, rate in zip(mu_sweep, rates_by_mode[fit_mode])
    ]
    eta_fit = fit_constant_efficiency(points, rep_rate, rate_cutoff=3e6)
    summary = {
        "eta_fit": float(eta_fit),
        "eta_fit_points": sum(1 for p in points if p.rate <= 3e6),
        "configured_eta": device.eta,
        "dark_rate_hz": device.dark_rate_total,
        "fit_mode": fit_mode,
    }
    manifest = _manifest(
        spec,
        _BASE_ASSUMPTIONS
        + [
            "counting threshold 40 mV with no hold-off; consecutive 2.3 ns pulses "
            "re-arm through the filter undershoot",
            "constant-eta fit subtracts the configured dark rate before fitting",
        ],
    )
    return ExperimentResult(
        "pulsed_430",
        ("amp_mode", "mu", "incident_rate_hz", "count_rate_hz"),
        results_rows,
        ("mu", "incident_rate_hz", "model_const_eta_hz", "model_eta_mu_hz"),
        model_rows,
        manifest,
        summary,
    )


# ---------------------------------------------------------------------------
# cw: continuous illumination, linearity and pile-up ceiling


def exp_cw(
    rate_sweep=(1e5, 1e6, 4e6, 2.5e7, 1e8, 1e9),
    seed: int = DEFAULT_SEED,
    slope_band=(3e6, 3e7),
    tau_res: float = RESOLUTION_TIME,
) -> ExperimentResult:
    """Count rate vs CW photon rate; slope at low rate, pile-up model above.

    Runs the chain twice per point (linear and saturating amplifier) on the
    same avalanche streams and reports the fitted low-rate slope of each next
    to the configured efficiency, plus the analytic pile-up ceiling.

    Points inside ``slope_band`` get long acquisitions sized for a sub-percent
    weighted slope fit — time allocated proportional to sqrt(count rate),
    which minimises the slope variance for a fixed sample budget.  The
    saturating-amplifier pass reuses a quarter of each slope acquisition (its
    slope is reported, not certified).  Points outside the band are short,
    qualitative rows.
    """
    rate_sweep = tuple(float(r) for r in rate_sweep)
    if any(r < 0 for r in rate_sweep):
        raise ValueError("photon rates must be >= 0")
    spec = ExperimentSpec(
        "cw", rate_sweep, 1, seed,
        {"slope_band": list(slope_band), "tau_res": tau_res},
    )
    device = SipmConfig()
    sample_period = 4e-10
    modes = ("linear", "soft")
    chains = {
        mode: ChainConfig(noise_rms=0.0, sample_period=sample_period, amp_mode=mode)
        for mode in modes
    }
    template = chains["linear"].template()
    disc = DiscriminatorConfig(threshold_mv=40.0, min_separation=0.0)
    deadtime = DeadTimeModel(tau=tau_res, kind="non-paralyzable")

    def point_duration(rate: float) -> float:
        expected = device.eta * rate + device.dark_rate_total
        if slope_band[0] <= rate <= slope_band[1]:
            return min(max(2e-5 * math.sqrt(expected), 2e-3), 5e-2)
        return min(2.5e-3, max(1e-4, 5_000.0 / expected))

    results_rows = []
    model_rows = []
    observed: dict[str, list[tuple[float, float, float]]] = {m: [] for m in modes}
    seeds = spawn_seeds(seed, 2 * len(rate_sweep))
    for k, rate in enumerate(rate_sweep):
        duration = point_duration(rate)
        in_band = slope_band[0] <= rate <= slope_band[1]
        source = SourceConfig(kind="cw", photon_rate=rate, duration=duration)
        arrivals = generate(source, seed=seeds[2 * k])
        events = simulate_sipm(arrivals, device, seed=seeds[2 * k + 1])
        n_samples = int(math.floor(duration / sample_period)) + 1
        for mode in modes:
            n_mode = max(n_samples // 4, 1) if (mode == "soft" and in_band) else n_samples
            stream = ChainStream(events.times, template, chains[mode])
            scanner = PeakScanner(disc, sample_period)
            count = _count_blocks(stream, scanner, n_mode)
            seen = n_mode * sample_period
            observed[mode].append((rate, count / seen, seen))
        model_rows.append((rate, dead_time_rate(device.eta * rate, deadtime)))

    slopes = {}
    for mode in modes:
        low = [(r, c, T) for r, c, T in observed[mode] if slope_band[0] <= r <= slope_band[1]]
        slopes[mode] = _weighted_line(low) if len(low) >= 2 else (float("nan"), float("nan"))
    for mode in modes:
        slope = slopes[mode][0]
        for rate, count_rate, duration in observed[mode]:
            results_rows.append((mode, rate, count_rate, duration, slope))

    summary = {
        "slope_linear": slopes["linear"][0],
        "slope_soft": slopes["soft"][0],
        "intercept_linear_hz": slopes["linear"][1],
        "configured_eta": device.eta,
        "ceiling_hz": 1.0 / tau_res,
        "tau_res_s": tau_res,
    }
    manifest = _manifest(
        spec,
        _BASE_ASSUMPTIONS
        + [
            "per-point duration targets fixed counting statistics inside the slope "
            "band; dark counts land in the fit intercept, not the slope",
            "pile-up model column: non-paralyzable response to the detected rate "
            f"eta * R with tau_res = {tau_res:.6g} s",
        ],
    )
    return ExperimentResult(
        "cw",
        ("amp_mode", "incident_rate_hz", "count_rate_hz", "duration_s", "linear_fit_slope"),
        results_rows,
        ("incident_rate_hz", "deadtime_model_hz"),
        model_rows,
        manifest,
        summary,
    )


def _weighted_line(points: list[tuple[float, float, float]]) -> tuple[float, float]:
    """WLS fit of observed rate vs incident rate; weights 1/var(count rate)."""
    x = np.array([p[0] for p in points])
    y = np.array([p[1] for p in points])
    durations = np.array([p[2] for p in points])
    counts = np.maximum(y * durations, 1.0)
    w = durations**2 / counts  # var(rate) = counts / T^2
    sw, swx, swy = w.sum(), (w * x).sum(), (w * y).sum()
    swxx, swxy = (w * x * x).sum(), (w * x * y).sum()
    det = sw * swxx - swx * swx
    slope = (sw * swxy - swx * swy) / det
    intercept = (swxx * swy - swx * swxy) / det
    return float(slope), float(intercept)


# ---------------------------------------------------------------------------
# power_meter: reading optical power off the calibrated count-rate curve


def exp_power_meter(
    count_rates=(5e4, 1e5, 1e6, 1e7, 1e8, 3e8, 4.5e8),
    eta: float = 0.083,
    wavelength: float = 532e-9,
    dark_rate: float = 50e3,
    tau_res: float = RESOLUTION_TIME,
    seed: int = DEFAULT_SEED,
) -> ExperimentResult:
    """Invert the counting curve: observed rate -> incident rate -> watts.

    Purely analytic.  Rates below twice the dark rate are still converted but
    flagged as under the sensitivity floor; rates at or above the pile-up
    ceiling 1/tau_res are rejected.
    """
    count_rates = tuple(float(r) for r in count_rates)
    ceiling = 1.0 / tau_res
    for r in count_rates:
        if r < 0:
            raise ValueError(f"count rate must be >= 0, got {r}")
        if r >= ceiling:
            raise ValueError(
                f"count rate {r:g} Hz is at or above the pile-up ceiling {ceiling:g} Hz"
            )
    spec = ExperimentSpec(
        "power_meter", count_rates, 1, seed,
        {"eta": eta, "wavelength": wavelength, "dark_rate": dark_rate, "tau_res": tau_res},
    )

    floor = 2.0 * dark_rate
    results_rows = []
    model_rows = []
    for r in count_rates:
        detected = r / (1.0 - r * tau_res)  # undo non-paralyzable pile-up
        incident = detected / eta
        power = photon_rate_to_power(incident, wavelength)
        results_rows.append((r, incident, power, bool(r < floor)))
        model_rows.append((incident, dead_time_rate(eta * incident, DeadTimeModel(tau=tau_res))))

    floor_incident = (floor / (1.0 - floor * tau_res)) / eta
    top = 0.9 * ceiling
    top_incident = (top / (1.0 - top * tau_res)) / eta
    summary = {
        "floor_count_rate_hz": floor,
        "floor_power_w": photon_rate_to_power(floor_incident, wavelength),
        "ceiling_count_rate_hz": ceiling,
        "usable_top_power_w": photon_rate_to_power(top_incident, wavelength),
        "wavelength_m": wavelength,
    }
    manifest = _manifest(
        spec,
        [
            "inversion assumes the non-paralyzable pile-up curve and constant eta; "
            "no dark subtraction (the floor flag marks where darkness dominates)",
        ],
    )
    return ExperimentResult(
        "power_meter",
        ("count_rate_hz", "inferred_incident_rate_hz", "inferred_power_w", "below_floor"),
        results_rows,
        ("incident_rate_hz", "model_count_rate_hz"),
        model_rows,
        manifest,
        summary,
    )


# ---------------------------------------------------------------------------
# manifest replay


def run_experiment(name: str, seed: int = DEFAULT_SEED, **params) -> ExperimentResult:
    if name == "multiphoton":
        return exp_multiphoton(seed=seed, **params)
    if name == "saturation":
        return exp_saturation(seed=seed, **params)
    if name == "pulsed_430":
        return exp_pulsed_430(seed=seed, **params)
    if name == "cw":
        return exp_cw(seed=seed, **params)
    if name == "power_meter":
        return exp_power_meter(seed=seed, **params)
    raise ValueError(f"unknown experiment {name!r}; know {EXPERIMENT_NAMES}")


_SWEEP_KW = {
    "multiphoton": "a0_list",
    "saturation": "freqs",
    "pulsed_430": "mu_sweep",
    "cw": "rate_sweep",
    "power_meter": "count_rates",
}

_REPLAY_KW = {
    "multiphoton": ("p_ct", "n_max"),
    "saturation": ("mu", "duration"),
    "pulsed_430": ("rep_rate", "modes", "pulses_target", "pulses_cap", "photon_cap"),
    "cw": ("slope_band", "tau_res"),
    "power_meter": ("eta", "wavelength", "dark_rate", "tau_res"),
}


def run_from_manifest(manifest_path, out_dir=None, plot: bool = False) -> dict:
    """Re-run the experiment a manifest describes; CSV outputs are byte-identical.

    ``out_dir`` defaults to the manifest's own directory (overwriting the
    original outputs with identical bytes).
    """
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text())
    name = data["experiment"]
    if name not in EXPERIMENT_NAMES:
        raise ValueError(f"manifest names unknown experiment {name!r}")
    params = {_SWEEP_KW[name]: tuple(data["sweep"])}
    recorded = data.get("parameters", {})
    for key in _REPLAY_KW[name]:
        if key in recorded:
            value = recorded[key]
            params[key] = tuple(value) if isinstance(value, list) else value
    if name == "multiphoton":
        params["trials"] = int(data["trials"])
    result = run_experiment(name, seed=int(data["seed"]), **params)
    return result.write(out_dir if out_dir is not None else manifest_path.parent, plot=plot)


# ---------------------------------------------------------------------------
# plots (optional; SVG via the headless backend)


def _plot(result: ExperimentResult, path) -> None:
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    if result.name == "multiphoton":
        a0_values = sorted({row[0] for row in result.results_rows})
        for a0 in a0_values:
            pts = [(r[1], r[3]) for r in result.results_rows if r[0] == a0]
            ax.semilogy([p[0] for p in pts], [max(p[1], 1e-9) for p in pts],
                        "o", label=f"simulated, a0={a0:g}")
            model = [(r[1], r[3]) for r in result.model_rows if r[0] == a0]
            ax.semilogy([p[0] for p in model], [max(p[1], 1e-9) for p in model], "-")
        ax.set_xlabel("detection multiplicity n")
        ax.set_ylabel("probability")
    elif result.name == "saturation":
        f = [r[0] for r in result.results_rows]
        ax.plot(f, [r[1] for r in result.results_rows], "o-", label="SiPM chain")
        ax.plot(f, [r[2] for r in result.results_rows], "s-", label="single APD")
        ax.plot(f, [r[1] for r in result.model_rows], "k--", label="ideal")
        ax.set_xlabel("pulse rate (Hz)")
        ax.set_ylabel("registered rate (Hz)")
    elif result.name == "pulsed_430":
        for mode in sorted({r[0] for r in result.results_rows}):
            pts = [(r[2], r[3]) for r in result.results_rows if r[0] == mode and r[2] > 0]
            ax.loglog([p[0] for p in pts], [max(p[1], 1.0) for p in pts], "o", label=mode)
        model = [(r[1], r[2]) for r in result.model_rows if r[1] > 0]
        ax.loglog([p[0] for p in model], [max(p[1], 1.0) for p in model], "k--",
                  label="constant eta")
        ax.set_xlabel("incident photon rate (1/s)")
        ax.set_ylabel("count rate (Hz)")
    elif result.name == "cw":
        for mode in sorted({r[0] for r in result.results_rows}):
            pts = [(r[1], r[2]) for r in result.results_rows if r[0] == mode]
            ax.loglog([p[0] for p in pts], [max(p[1], 1.0) for p in pts], "o", label=mode)
        model = [(r[0], r[1]) for r in result.model_rows]
        ax.loglog([p[0] for p in model], [max(p[1], 1.0) for p in model], "k--",
                  label="pile-up model")
        ax.set_xlabel("incident photon rate (1/s)")
        ax.set_ylabel("count rate (Hz)")
    else:  # power_meter
        pts = [(r[0], r[2]) for r in result.results_rows]
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-")
        ax.set_xlabel("count rate (Hz)")
        ax.set_ylabel("inferred power (W)")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
