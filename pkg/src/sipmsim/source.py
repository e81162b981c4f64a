"""Photon arrival-time generation for pulsed and continuous-wave sources.

A pulsed source emits a Poisson-distributed number of photons per trigger,
spread uniformly over the optical pulse width (10 ps for a mode-locked laser,
of order 10 ns for a block-pulsed LED).  A CW source is a homogeneous Poisson
process sampled through exponential inter-arrival times.  Both are fully
reproducible from (config, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .rng import rng_from_seed

SOURCE_KINDS = ("pulsed", "cw")


@dataclass(frozen=True)
class SourceConfig:
    """Parameters of a photon source.

    kind="pulsed" uses mu, rep_rate and pulse_width; kind="cw" uses
    photon_rate.  duration is the emission window in seconds and seed the
    default RNG seed for generation.
    """

    kind: str = "pulsed"
    mu: float = 0.2
    rep_rate: float = 430e6
    pulse_width: float = 10e-12
    photon_rate: float = 1e6
    duration: float = 100e-6
    seed: int | None = 0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"kind must be one of {SOURCE_KINDS}, got {self.kind!r}")
        if self.duration < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if self.kind == "pulsed":
            if self.mu < 0:
                raise ValueError(f"mu must be >= 0, got {self.mu}")
            if self.rep_rate <= 0:
                raise ValueError(f"rep_rate must be > 0, got {self.rep_rate}")
            if not 0.0 <= self.pulse_width < 1.0 / self.rep_rate:
                raise ValueError(
                    "pulse_width must satisfy 0 <= pulse_width < 1/rep_rate "
                    f"(got {self.pulse_width} at rep_rate {self.rep_rate})"
                )
        else:
            if self.photon_rate < 0:
                raise ValueError(f"photon_rate must be >= 0, got {self.photon_rate}")


@dataclass(frozen=True)
class PhotonArrivals:
    """Sorted photon arrival timestamps plus the source that produced them."""

    times: np.ndarray
    source: SourceConfig

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.times, dtype=np.float64))
        if arr.ndim != 1:
            raise ValueError("times must be 1-d")
        if arr.size:
            if not np.all(np.isfinite(arr)):
                raise ValueError("times must be finite")
            if np.any(np.diff(arr) < 0):
                raise ValueError("times must be sorted ascending")
            if arr[0] < 0 or arr[-1] > self.source.duration:
                raise ValueError("times must lie within [0, duration]")
        arr.setflags(write=False)
        object.__setattr__(self, "times", arr)

    def __len__(self) -> int:
        return self.times.size

    @property
    def duration(self) -> float:
        return self.source.duration


def generate_pulsed(config: SourceConfig, seed=None) -> PhotonArrivals:
    """Photon arrivals of a pulsed source over [0, duration].

    Pulse i is centred on its trigger at t_i = i / rep_rate; each photon lands
    at t_i plus a uniform offset within the pulse width.  Photon counts per
    pulse are independent Poisson(mu) draws.
    """
    if config.kind != "pulsed":
        raise ValueError(f"generate_pulsed needs kind='pulsed', got {config.kind!r}")
    rng = rng_from_seed(config.seed if seed is None else seed)
    n_pulses = int(np.floor(config.duration * config.rep_rate))
    # A pulse whose start lands exactly on the duration boundary is excluded.
    while n_pulses > 0 and (n_pulses - 1) / config.rep_rate + config.pulse_width > config.duration:
        n_pulses -= 1
    if n_pulses <= 0 or config.mu == 0.0:
        return PhotonArrivals(np.empty(0), config)
    counts = rng.poisson(config.mu, n_pulses)
    total = int(counts.sum())
    base = np.repeat(np.arange(n_pulses, dtype=np.float64) / config.rep_rate, counts)
    if config.pulse_width > 0.0:
        base = base + rng.random(total) * config.pulse_width
    times = np.sort(base, kind="stable")
    return PhotonArrivals(times, config)


def generate_cw(config: SourceConfig, seed=None) -> PhotonArrivals:
    """Photon arrivals of a CW source: homogeneous Poisson process on [0, duration]."""
    if config.kind != "cw":
        raise ValueError(f"generate_cw needs kind='cw', got {config.kind!r}")
    rng = rng_from_seed(config.seed if seed is None else seed)
    rate = config.photon_rate
    if rate == 0.0 or config.duration == 0.0:
        return PhotonArrivals(np.empty(0), config)
    chunks = []
    t = 0.0
    mean_count = rate * config.duration
    while True:
        block = max(int(mean_count * 1.05) + 64, 1024)
        gaps = rng.exponential(1.0 / rate, block)
        times = t + np.cumsum(gaps)
        inside = times[times <= config.duration]
        chunks.append(inside)
        if inside.size < times.size:
            break
        t = float(times[-1])
        mean_count = rate * (config.duration - t)
    all_times = np.concatenate(chunks) if chunks else np.empty(0)
    return PhotonArrivals(all_times, config)


def generate(config: SourceConfig, seed=None) -> PhotonArrivals:
    """Dispatch on config.kind."""
    if config.kind == "pulsed":
        return generate_pulsed(config, seed)
    return generate_cw(config, seed)


ARRIVALS_HEADER = "timestamp_seconds"


def save_arrivals_csv(arrivals: PhotonArrivals, path) -> None:
    """Write one timestamp per row under a ``timestamp_seconds`` header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([ARRIVALS_HEADER])
        for t in arrivals.times:
            writer.writerow([repr(float(t))])


def load_arrivals_csv(path, source: SourceConfig | None = None) -> PhotonArrivals:
    """Read timestamps written by save_arrivals_csv.

    If no source config is given, a CW stub covering the data is attached so
    the duration is still well defined.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != ARRIVALS_HEADER:
            raise ValueError(f"{path}: expected header {ARRIVALS_HEADER!r}, got {header!r}")
        times = np.array([float(row[0]) for row in reader if row], dtype=np.float64)
    if source is None:
        duration = float(times[-1]) if times.size else 0.0
        source = SourceConfig(kind="cw", photon_rate=0.0, duration=duration, seed=None)
    return PhotonArrivals(times, source)


def with_duration(config: SourceConfig, duration: float) -> SourceConfig:
    """Convenience copy-with-new-duration used by the experiment drivers."""
    return replace(config, duration=duration)
