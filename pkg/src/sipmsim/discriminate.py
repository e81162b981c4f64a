"""Digital side of the chain: threshold counting, amplitude binning, rates.

The counting path mimics a leading-edge discriminator: count upward threshold
crossings, optionally with a hold-off (``min_separation``) so ringing or
noise immediately after a pulse is not double counted.  The multiphoton path
gates on known pulse times, takes the peak amplitude inside each gate and
bins it against the single-cell gain.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import lambertw

from .analog import Waveform
from .errors import ClassificationError

DEFAULT_THRESHOLD_MV = 40.0
DEFAULT_GATE = 5e-9


@dataclass(frozen=True)
class DiscriminatorConfig:
    threshold_mv: float = DEFAULT_THRESHOLD_MV
    min_separation: float = 0.0

    def __post_init__(self):
        if self.min_separation < 0:
            raise ValueError(f"min_separation must be >= 0, got {self.min_separation}")


class PeakScanner:
    """Counts upward crossings across consecutive waveform blocks.

    Keeps the previous sample and the hold-off deadline, so feeding the same
    samples in any block sizes gives the same crossings as one shot.
    """

    def __init__(self, config: DiscriminatorConfig, sample_period: float, t0: float = 0.0):
        if sample_period <= 0:
            raise ValueError(f"sample_period must be > 0, got {sample_period}")
        self.config = config
        self.dt = sample_period
        self.t0 = t0
        self.index = 0  # absolute index of the next sample
        self.prev = 0.0  # discriminator baseline before any samples
        # Hold-off in whole samples; the tiny slack keeps an exact multiple of
        # dt from rounding up to one extra sample.
        self.holdoff = int(math.ceil(config.min_separation / sample_period - 1e-9))
        self.blocked_until = 0  # absolute index of the first acceptable crossing
        self.crossing_indices: list[int] = []

    def feed(self, samples: np.ndarray) -> int:
        """Scan a block; returns the number of crossings found in it."""
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("samples must be 1-d")
        if samples.size == 0:
            return 0
        thr = self.config.threshold_mv
        prev = np.concatenate(([self.prev], samples[:-1]))
        candidates = np.flatnonzero((prev < thr) & (samples >= thr)) + self.index
        found = 0
        for idx in candidates:
            if idx >= self.blocked_until:
                self.crossing_indices.append(int(idx))
                self.blocked_until = idx + self.holdoff
                found += 1
        self.prev = float(samples[-1])
        self.index += samples.size
        return found

    @property
    def count(self) -> int:
        return len(self.crossing_indices)

    def crossing_times(self) -> np.ndarray:
        return self.t0 + np.asarray(self.crossing_indices, dtype=float) * self.dt


def threshold_crossings(wave: Waveform, config: DiscriminatorConfig) -> np.ndarray:
    """Times of accepted upward crossings of the discriminator threshold."""
    scanner = PeakScanner(config, wave.sample_period, wave.t0)
    scanner.feed(wave.samples)
    return scanner.crossing_times()


def count_peaks(wave: Waveform, config: DiscriminatorConfig) -> int:
    scanner = PeakScanner(config, wave.sample_period, wave.t0)
    scanner.feed(wave.samples)
    return scanner.count


@dataclass(frozen=True)
class AmplitudeMeasurement:
    amplitudes: np.ndarray  # peak mV per gate, in pulse order
    gate: float
    windows_overlap: bool  # True if neighbouring gates shared samples


def measure_amplitudes(wave: Waveform, pulse_times, gate: float = DEFAULT_GATE) -> AmplitudeMeasurement:
    """Peak voltage inside ``[t, t + gate)`` for each pulse time.

    Pulse times must be sorted and every gate must lie inside the waveform.
    Overlapping gates are measured as asked but flagged, since a tail from one
    pulse then contributes to the next gate.
    """
    pulse_times = np.asarray(pulse_times, dtype=float)
    if pulse_times.size == 0:
        return AmplitudeMeasurement(np.empty(0), gate, False)
    if np.any(np.diff(pulse_times) < 0):
        raise ValueError("pulse_times must be sorted")
    if gate <= 0:
        raise ValueError(f"gate must be > 0, got {gate}")
    dt = wave.sample_period
    n = wave.samples.size
    starts = np.ceil((pulse_times - wave.t0) / dt - 1e-9).astype(np.int64)
    ends = np.ceil((pulse_times + gate - wave.t0) / dt - 1e-9).astype(np.int64)
    if starts[0] < 0 or ends[-1] > n:
        raise ValueError("a gate extends outside the waveform")
    if np.any(ends <= starts):
        raise ValueError("gate must cover at least one sample")
    overlap = bool(np.any(ends[:-1] > starts[1:]))
    # reduceat over interleaved (start, end) pairs; a -inf sentinel makes the
    # index n legal for a gate that ends exactly at the last sample.
    padded = np.append(wave.samples, -np.inf)
    bounds = np.empty(2 * starts.size, dtype=np.int64)
    bounds[0::2] = starts
    bounds[1::2] = ends
    peaks = np.maximum.reduceat(padded, bounds)[0::2]
    return AmplitudeMeasurement(peaks, gate, overlap)


@dataclass(frozen=True)
class ClassificationResult:
    labels: np.ndarray  # photon number per input amplitude
    counts: np.ndarray  # counts[n] = how many gates classified as n
    fractions: np.ndarray
    ci_low: np.ndarray  # 95% Wilson interval per class
    ci_high: np.ndarray
    gain_mv: float

    @property
    def n_max(self) -> int:
        return self.counts.size - 1


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% score interval for a binomial proportion (well behaved at 0 and n)."""
    if n <= 0:
        raise ValueError("n must be > 0")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return (max(0.0, centre - half), min(1.0, centre + half))


def classify_amplitudes(
    amplitudes,
    gain_mv: float,
    noise_rms: float = 0.0,
) -> ClassificationResult:
    """Round each peak amplitude to the nearest multiple of the cell gain.

    Nearest-integer binning only resolves photon numbers when the peaks are
    separated well beyond the noise; we require gain > 4 * noise RMS so that
    adjacent classes sit at least +-2 sigma from the bin edges.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    if gain_mv <= 0:
        raise ValueError(f"gain_mv must be > 0, got {gain_mv}")
    if noise_rms < 0:
        raise ValueError(f"noise_rms must be >= 0, got {noise_rms}")
    if noise_rms > 0 and gain_mv <= 4.0 * noise_rms:
        raise ClassificationError(
            f"gain {gain_mv:g} mV does not resolve photon numbers over "
            f"noise RMS {noise_rms:g} mV (need gain > 4 * noise)"
        )
    labels = np.maximum(np.rint(amplitudes / gain_mv).astype(np.int64), 0)
    counts = np.bincount(labels)
    total = labels.size
    if total == 0:
        empty = np.empty(0)
        return ClassificationResult(labels, counts, empty, empty, empty, gain_mv)
    fractions = counts / total
    lows = np.empty(counts.size)
    highs = np.empty(counts.size)
    for i, k in enumerate(counts):
        lows[i], highs[i] = wilson_interval(int(k), total)
    return ClassificationResult(labels, counts, fractions, lows, highs, gain_mv)


def estimate_gain(amplitudes, bin_width: float = 2.0, min_fraction: float = 0.02) -> float:
    """Single-cell gain from the spacing of the multiphoton amplitude comb.

    Histograms the peak amplitudes and reads the spacing between neighbouring
    local maxima; with only one resolved mode the mode position itself is the
    gain (everything landed in the one-cell class).
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.size == 0:
        raise ClassificationError("no amplitudes to estimate a gain from")
    if bin_width <= 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    lo = 0.0
    hi = float(amplitudes.max()) + bin_width
    edges = np.arange(lo, hi + bin_width, bin_width)
    counts, edges = np.histogram(amplitudes, bins=edges)
    if counts.sum() == 0:
        raise ClassificationError("no amplitudes fell inside the histogram range")
    floor = max(1.0, min_fraction * counts.max())
    centres = 0.5 * (edges[:-1] + edges[1:])
    peaks = []
    for i in range(counts.size):
        left = counts[i - 1] if i > 0 else 0
        right = counts[i + 1] if i < counts.size - 1 else 0
        if counts[i] >= floor and counts[i] >= left and counts[i] > right:
            peaks.append(centres[i])
    if not peaks:
        raise ClassificationError("no modes found in the amplitude histogram")
    if len(peaks) == 1:
        return float(peaks[0])
    return float(np.median(np.diff(peaks)))


def rate_estimate(
    count: int,
    duration: float,
    dead_time: float = 0.0,
    kind: str = "non-paralyzable",
) -> float:
    """True event rate from a count over ``duration``, undoing dead-time loss.

    With ``dead_time`` zero this is just count / duration.  The paralyzable
    inversion uses the principal Lambert-W branch and therefore assumes the
    observed rate sits on the low-rate side of the roll-over (observed rate
    at most 1 / (e * dead_time)).
    """
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if dead_time < 0:
        raise ValueError(f"dead_time must be >= 0, got {dead_time}")
    observed = count / duration
    if dead_time == 0.0 or observed == 0.0:
        return observed
    if kind == "non-paralyzable":
        loss = 1.0 - observed * dead_time
        if loss <= 0:
            raise ValueError(
                f"observed rate {observed:g} Hz is not reachable with "
                f"dead time {dead_time:g} s"
            )
        return observed / loss
    if kind == "paralyzable":
        x = observed * dead_time
        if x > math.exp(-1.0):
            raise ValueError(
                f"observed rate {observed:g} Hz exceeds the paralyzable "
                f"maximum 1/(e*tau) = {1.0 / (math.e * dead_time):g} Hz"
            )
        return float(-lambertw(-x).real / dead_time)
    raise ValueError(f"kind must be 'non-paralyzable' or 'paralyzable', got {kind!r}")


HISTOGRAM_HEADER = ("bin_left_mv", "bin_right_mv", "count")
CLASSIFIED_HEADER = ("n_photons", "count", "fraction", "ci_low", "ci_high")


def save_histogram_csv(amplitudes, path, bin_width: float = 2.0) -> None:
    amplitudes = np.asarray(amplitudes, dtype=float)
    hi = float(amplitudes.max()) + bin_width if amplitudes.size else bin_width
    edges = np.arange(0.0, hi + bin_width, bin_width)
    counts, edges = np.histogram(amplitudes, bins=edges)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTOGRAM_HEADER)
        for left, right, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([repr(float(left)), repr(float(right)), int(c)])


def save_classified_csv(result: ClassificationResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CLASSIFIED_HEADER)
        for n in range(result.counts.size):
            writer.writerow(
                [
                    n,
                    int(result.counts[n]),
                    repr(float(result.fractions[n])),
                    repr(float(result.ci_low[n])),
                    repr(float(result.ci_high[n])),
                ]
            )
