"""Analog output chain: pulse shaping, high-pass filtering, noise, amplifier.

Every avalanche contributes one copy of a double-exponential single-cell
template; because the array is wired in parallel the waveform is the exact
linear superposition of those copies.  A first-order high-pass ("derivative")
filter shortens the pulse to sub-nanosecond width with a small undershoot, at
the cost of amplitude; the template is calibrated so the post-filter
single-cell peak hits a target amplitude.  Optional additive white Gaussian
noise and a soft-saturating amplifier complete the chain.

Synthesis uses the recurrence structure of the template: each event injects a
weight into two exponentially-decaying accumulators, so the result is exact
(no kernel truncation) and costs O(samples + events).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import SizeError
from .rng import rng_from_seed

DEFAULT_SAMPLE_PERIOD = 50e-12  # 20 GS/s
DEFAULT_MAX_SAMPLES = 50_000_000

AMP_MODES = ("linear", "soft")


@dataclass(frozen=True)
class PulseTemplate:
    """Single-cell voltage pulse: amplitude * (exp(-t/tau_fall) - exp(-t/tau_rise)).

    ``amplitude`` is the scale of the raw template in millivolts, normally set
    by ``calibrated`` so the post-filter peak matches the target; the raw peak
    is amplitude * (value at the maximum of the double exponential) < amplitude.
    """

    tau_rise: float = 150e-12
    tau_fall: float = 15e-9
    amplitude: float = 1.0

    def __post_init__(self):
        if self.tau_rise <= 0 or self.tau_fall <= 0:
            raise ValueError("tau_rise and tau_fall must be > 0")
        if self.tau_rise >= self.tau_fall:
            raise ValueError(
                f"tau_rise={self.tau_rise} must be shorter than tau_fall={self.tau_fall}"
            )
        if self.amplitude <= 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")

    def evaluate(self, t) -> np.ndarray:
        """Template value at times ``t`` (seconds) after the avalanche; 0 before."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        mask = t >= 0
        tm = t[mask]
        out[mask] = self.amplitude * (np.exp(-tm / self.tau_fall) - np.exp(-tm / self.tau_rise))
        return out

    @classmethod
    def calibrated(
        cls,
        peak_mv: float = 110.0,
        sample_period: float = DEFAULT_SAMPLE_PERIOD,
        hp_cutoff: float = 500e6,
        tau_rise: float = 150e-12,
        tau_fall: float = 15e-9,
    ) -> "PulseTemplate":
        """Template scaled so one avalanche peaks at ``peak_mv`` after the filter.

        The calibration synthesizes a single event on the given sampling grid,
        applies the high-pass, and rescales by the observed peak.  Re-running
        it on an already calibrated template reproduces the same scale.
        """
        if peak_mv <= 0:
            raise ValueError(f"peak_mv must be > 0, got {peak_mv}")
        unit = cls(tau_rise=tau_rise, tau_fall=tau_fall, amplitude=1.0)
        # The filtered peak sits well inside a few fall times.
        window = (0.0, 5.0 * tau_fall)
        wave = synthesize([0.0], unit, window, sample_period)
        filtered = high_pass(wave, hp_cutoff)
        peak = float(filtered.samples.max())
        if peak <= 0:
            raise ValueError("filtered unit template has no positive peak")
        return cls(tau_rise=tau_rise, tau_fall=tau_fall, amplitude=peak_mv / peak)


@dataclass(frozen=True)
class ChainConfig:
    """Everything after the pixels: filter corner, noise level, amplifier."""

    hp_cutoff: float = 500e6
    noise_rms: float = 15.0
    amp_mode: str = "linear"
    sat_level: float = 1000.0
    sample_period: float = DEFAULT_SAMPLE_PERIOD
    peak_mv: float = 110.0
    tau_rise: float = 150e-12
    tau_fall: float = 15e-9

    def __post_init__(self):
        if self.hp_cutoff <= 0:
            raise ValueError(f"hp_cutoff must be > 0, got {self.hp_cutoff}")
        if self.noise_rms < 0:
            raise ValueError(f"noise_rms must be >= 0, got {self.noise_rms}")
        if self.amp_mode not in AMP_MODES:
            raise ValueError(f"amp_mode must be one of {AMP_MODES}, got {self.amp_mode!r}")
        if self.sat_level <= 0:
            raise ValueError(f"sat_level must be > 0, got {self.sat_level}")
        if self.sample_period <= 0:
            raise ValueError(f"sample_period must be > 0, got {self.sample_period}")
        if self.hp_cutoff >= 0.5 / self.sample_period:
            raise ValueError(
                f"hp_cutoff={self.hp_cutoff:g} Hz must stay below the Nyquist rate "
                f"{0.5 / self.sample_period:g} Hz"
            )
        if self.peak_mv <= 0:
            raise ValueError(f"peak_mv must be > 0, got {self.peak_mv}")

    def template(self) -> PulseTemplate:
        return PulseTemplate.calibrated(
            peak_mv=self.peak_mv,
            sample_period=self.sample_period,
            hp_cutoff=self.hp_cutoff,
            tau_rise=self.tau_rise,
            tau_fall=self.tau_fall,
        )


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled voltage trace in millivolts starting at ``t0``."""

    samples: np.ndarray
    sample_period: float
    t0: float = 0.0

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        if arr.ndim != 1:
            raise ValueError("samples must be 1-d")
        if self.sample_period <= 0:
            raise ValueError(f"sample_period must be > 0, got {self.sample_period}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) * self.sample_period

    @property
    def duration(self) -> float:
        return max(self.samples.size - 1, 0) * self.sample_period


def _injections(event_times, template: PulseTemplate, t0: float, n_samples: int, sample_period: float):
    """Per-sample injection weights for the two decay accumulators.

    An event is injected at the first sample at or after its time, weighted by
    the decay it has already undergone by then, which reproduces the exact
    template value on every grid point at or after the event (the template is
    causal, so earlier samples are untouched).  Events before the window fold
    into sample 0 the same way.
    """
    t_e = np.asarray(event_times, dtype=float)
    t_end = t0 + (n_samples - 1) * sample_period
    t_e = t_e[t_e <= t_end]
    idx = np.ceil((t_e - t0) / sample_period).astype(np.int64)
    np.clip(idx, 0, None, out=idx)
    keep = idx < n_samples
    idx = idx[keep]
    t_e = t_e[keep]
    lag = t0 + idx * sample_period - t_e  # >= 0
    w_fall = template.amplitude * np.exp(-lag / template.tau_fall)
    w_rise = template.amplitude * np.exp(-lag / template.tau_rise)
    inj_fall = np.bincount(idx, weights=w_fall, minlength=n_samples)
    inj_rise = np.bincount(idx, weights=w_rise, minlength=n_samples)
    return inj_fall, inj_rise


def synthesize(
    event_times,
    template: PulseTemplate,
    window: tuple[float, float],
    sample_period: float = DEFAULT_SAMPLE_PERIOD,
    max_samples: int = DEFAULT_MAX_SAMPLES,
) -> Waveform:
    """Exact superposition of one template per event over ``window``.

    ``event_times`` may be any array-like of seconds (an EventStream's
    ``times`` works directly); simultaneous events simply stack.
    """
    t0, t1 = window
    if t1 < t0:
        raise ValueError(f"window end {t1} before start {t0}")
    if sample_period <= 0:
        raise ValueError(f"sample_period must be > 0, got {sample_period}")
    n_samples = int(np.floor((t1 - t0) / sample_period)) + 1
    if n_samples > max_samples:
        raise SizeError(
            f"window needs {n_samples} samples, above the budget of {max_samples}; "
            "shrink the window, coarsen sampling, or raise max_samples"
        )
    inj_fall, inj_rise = _injections(event_times, template, t0, n_samples, sample_period)
    pole_fall = np.exp(-sample_period / template.tau_fall)
    pole_rise = np.exp(-sample_period / template.tau_rise)
    acc_fall = lfilter([1.0], [1.0, -pole_fall], inj_fall)
    acc_rise = lfilter([1.0], [1.0, -pole_rise], inj_rise)
    return Waveform(acc_fall - acc_rise, sample_period, t0)


def hp_alpha(cutoff: float, sample_period: float) -> float:
    """Feedback coefficient of the first-order high-pass at a given sampling."""
    return 1.0 / (1.0 + 2.0 * np.pi * cutoff * sample_period)


def high_pass(wave: Waveform, cutoff: float = 500e6) -> Waveform:
    """First-order high-pass: y[i] = alpha * (y[i-1] + x[i] - x[i-1]), zero state.

    ``cutoff`` must stay below the Nyquist rate of the waveform.
    """
    if cutoff <= 0:
        raise ValueError(f"cutoff must be > 0, got {cutoff}")
    nyquist = 0.5 / wave.sample_period
    if cutoff >= nyquist:
        raise ValueError(
            f"cutoff {cutoff:g} Hz must stay below the Nyquist rate {nyquist:g} Hz"
        )
    alpha = hp_alpha(cutoff, wave.sample_period)
    out = lfilter([alpha, -alpha], [1.0, -alpha], wave.samples)
    return Waveform(out, wave.sample_period, wave.t0)


def add_noise(wave: Waveform, rms: float, seed=None) -> Waveform:
    """Add i.i.d. zero-mean Gaussian samples of the given RMS (mV)."""
    if rms < 0:
        raise ValueError(f"rms must be >= 0, got {rms}")
    if rms == 0.0:
        return wave
    rng = rng_from_seed(seed)
    noisy = wave.samples + rng.standard_normal(wave.samples.size) * rms
    return Waveform(noisy, wave.sample_period, wave.t0)


def amplify(wave: Waveform, mode: str = "linear", sat_level: float = 1000.0) -> Waveform:
    """Identity in linear mode; odd tanh saturation towards +-sat_level in soft mode."""
    if mode not in AMP_MODES:
        raise ValueError(f"mode must be one of {AMP_MODES}, got {mode!r}")
    if mode == "linear":
        return wave
    if sat_level <= 0:
        raise ValueError(f"sat_level must be > 0, got {sat_level}")
    out = sat_level * np.tanh(wave.samples / sat_level)
    return Waveform(out, wave.sample_period, wave.t0)


class ChainStream:
    """Streams the full chain over consecutive sample blocks with exact state.

    Blocks are contiguous; decay accumulators and the high-pass state carry
    over, so concatenating the blocks equals a single-shot run with the same
    noise chunking.  In soft mode the amplifier acts on the raw superposed
    signal (the first element of the physical chain), ahead of the filter.
    """

    def __init__(
        self,
        event_times: np.ndarray,
        template: PulseTemplate,
        config: ChainConfig,
        t0: float = 0.0,
        noise_seed=None,
    ):
        self.template = template
        self.config = config
        self.dt = config.sample_period
        self.t0 = t0
        self.index = 0  # absolute index of the next sample
        self.pole_fall = float(np.exp(-self.dt / template.tau_fall))
        self.pole_rise = float(np.exp(-self.dt / template.tau_rise))
        self.state_fall = 0.0
        self.state_rise = 0.0
        alpha = hp_alpha(config.hp_cutoff, self.dt)
        if config.hp_cutoff >= 0.5 / self.dt:
            raise ValueError("hp_cutoff must stay below the Nyquist rate")
        self.hp_b = np.array([alpha, -alpha])
        self.hp_a = np.array([1.0, -alpha])
        self.hp_state = np.zeros(1)
        self.noise_rng = rng_from_seed(noise_seed) if config.noise_rms > 0 else None
        # Absolute injection indices and weights, computed once so that block
        # boundaries cannot perturb the arithmetic: the streamed output is
        # bit-identical to the one-shot synthesize()+high_pass() pipeline.
        events = np.asarray(event_times, dtype=float)
        idx = np.ceil((events - t0) / self.dt).astype(np.int64)
        np.clip(idx, 0, None, out=idx)
        lag = t0 + idx * self.dt - events
        self._w_fall = template.amplitude * np.exp(-lag / template.tau_fall)
        self._w_rise = template.amplitude * np.exp(-lag / template.tau_rise)
        self._inj_idx = idx
        if idx.size and np.any(np.diff(idx) < 0):  # tolerate unsorted input
            order = np.argsort(idx, kind="stable")
            self._inj_idx = idx[order]
            self._w_fall = self._w_fall[order]
            self._w_rise = self._w_rise[order]
        self._cursor = 0  # first injection not yet applied

    def next_block(self, n_samples: int) -> np.ndarray:
        """Process the next ``n_samples`` samples and return them (mV)."""
        if n_samples <= 0:
            raise ValueError("n_samples must be > 0")
        i0 = self.index
        hi = np.searchsorted(self._inj_idx, i0 + n_samples, side="left")
        local = self._inj_idx[self._cursor:hi] - i0
        inj_fall = np.bincount(local, weights=self._w_fall[self._cursor:hi], minlength=n_samples)
        inj_rise = np.bincount(local, weights=self._w_rise[self._cursor:hi], minlength=n_samples)
        self._cursor = hi
        acc_fall, _ = lfilter(
            [1.0], [1.0, -self.pole_fall], inj_fall, zi=[self.pole_fall * self.state_fall]
        )
        acc_rise, _ = lfilter(
            [1.0], [1.0, -self.pole_rise], inj_rise, zi=[self.pole_rise * self.state_rise]
        )
        self.state_fall = float(acc_fall[-1])
        self.state_rise = float(acc_rise[-1])
        raw = acc_fall - acc_rise
        if self.config.amp_mode == "soft":
            raw = self.config.sat_level * np.tanh(raw / self.config.sat_level)
        out, self.hp_state = lfilter(self.hp_b, self.hp_a, raw, zi=self.hp_state)
        if self.noise_rng is not None:
            out = out + self.noise_rng.standard_normal(n_samples) * self.config.noise_rms
        self.index += n_samples
        return out

    @property
    def t_next(self) -> float:
        return self.t0 + self.index * self.dt


WAVEFORM_CSV_HEADER = ("time_s", "voltage_mv")
_BINARY_MAGIC = b"SIPMWAV1"


def save_waveform_csv(wave: Waveform, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(WAVEFORM_CSV_HEADER)
        for t, v in zip(wave.times(), wave.samples):
            writer.writerow([repr(float(t)), repr(float(v))])


def load_waveform_csv(path) -> Waveform:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != WAVEFORM_CSV_HEADER:
            raise ValueError(f"{path}: expected header {WAVEFORM_CSV_HEADER}, got {header!r}")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two samples to infer the sample period")
    times = np.array([r[0] for r in rows])
    volts = np.array([r[1] for r in rows])
    periods = np.diff(times)
    dt = float(np.median(periods))
    if np.any(np.abs(periods - dt) > 1e-6 * dt + 1e-15):
        raise ValueError(f"{path}: samples are not uniformly spaced")
    return Waveform(volts, dt, float(times[0]))


def save_waveform_binary(wave: Waveform, path) -> None:
    """Binary waveform: magic 'SIPMWAV1', little-endian header
    (f64 sample_period_s, f64 t0_s, u64 count), then count float32 mV samples."""
    header = struct.pack("<8sddQ", _BINARY_MAGIC, wave.sample_period, wave.t0, wave.samples.size)
    payload = wave.samples.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_waveform_binary(path) -> Waveform:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<8sddQ"))
        magic, dt, t0, count = struct.unpack("<8sddQ", head)
        if magic != _BINARY_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {_BINARY_MAGIC!r}")
        payload = fh.read(4 * count)
        if len(payload) != 4 * count:
            raise ValueError(f"{path}: truncated payload ({len(payload)} of {4 * count} bytes)")
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return Waveform(samples, dt, t0)


def soft_amplifier_config(config: ChainConfig, sat_level: float | None = None) -> ChainConfig:
    """Copy of the chain with the saturating amplifier switched on."""
    return replace(
        config,
        amp_mode="soft",
        sat_level=config.sat_level if sat_level is None else sat_level,
    )
