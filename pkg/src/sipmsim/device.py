"""Event-level Monte Carlo of the pixel array and of a single reference diode.

The array is a rectangular lattice of Geiger-mode pixels wired in parallel.
Each photon lands on a uniformly random pixel and fires it with probability
eta provided the pixel has been quiet for at least its recovery time.  Dark
events are a homogeneous Poisson process over the run, assigned to uniform
pixels, and fire whenever the pixel is live (the configured dark rate is the
generation rate of thermal avalanches).

Optical cross-talk is applied per avalanche bunch: accepted avalanches that
share one timestamp (a zero-width pulse, or any isolated event) form a bunch
of size s, and the number of cross-talk secondaries is drawn from the
first-order redistribution law conditioned on s seeds.  Because that law is
linear in the seed distribution, the simulated multiplicities follow
stats.crosstalk_redistribute of the seed statistics exactly, for any source.
Secondaries are placed one at a time on a uniformly chosen live lattice
neighbour (4-neighbourhood, non-periodic edges) of the growing fired
cluster, weighted by adjacency; only when every neighbour of the cluster is
recovering is the secondary silently absorbed.  Per-neighbour Bernoulli
trials cannot reproduce the first-order law — they overfill the n=2 bin by
~20 sigma at 1e6 trials — hence the calibrated draw.  With cascade_crosstalk enabled a geometric branching
variant replaces it (every avalanche, cross-talk included, fires one live
neighbour with probability p_ct); that mode produces roughly (1 + p_ct)
times more secondaries and exists for sensitivity studies only.

The simulation is deterministic given (arrivals, config, seed).
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import SizeError
from .rng import rng_from_seed
from .source import PhotonArrivals
from .stats import DetectionDistribution, crosstalk_redistribute

CAUSE_PHOTON = 0
CAUSE_DARK = 1
CAUSE_CROSSTALK = 2
CAUSE_NAMES = ("photon", "dark", "crosstalk")

#: Two-point dark-rate table: (temperature_c, dark_rate_hz).  The rate is
#: clamped at the outer anchors and interpolated linearly between them.
DEFAULT_DARK_RATE_TABLE = ((-14.0, 30e3), (-7.0, 50e3))

#: Above this many candidate events a single call refuses to run; chunk the
#: arrivals instead.
MAX_CANDIDATES = 50_000_000


def dark_rate_from_temperature(temperature_c: float, table=DEFAULT_DARK_RATE_TABLE) -> float:
    """Total dark rate at a given temperature from a monotone anchor table."""
    pts = sorted((float(t), float(r)) for t, r in table)
    if len(pts) < 2:
        raise ValueError("table needs at least two anchors")
    temps = [t for t, _ in pts]
    rates = [r for _, r in pts]
    increasing = all(b >= a for a, b in zip(rates, rates[1:]))
    decreasing = all(b <= a for a, b in zip(rates, rates[1:]))
    if not (increasing or decreasing):
        raise ValueError("table must be monotone in dark rate")
    return float(np.interp(temperature_c, temps, rates))


@dataclass(frozen=True)
class SipmConfig:
    """Array parameters.  Defaults describe the reference 132-pixel device."""

    n_pixels: int = 132
    grid: tuple[int, int] = (12, 11)
    fill_factor: float = 0.31
    eta: float = 0.083
    p_ct: float = 0.097
    dark_rate_total: float = 50e3
    recovery_time: float = 50e-9
    cascade_crosstalk: bool = False
    v_bias: float = 32.0
    v_bd: float = 28.0
    temperature: float | None = None

    def __post_init__(self):
        rows, cols = self.grid
        if rows < 1 or cols < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {self.grid}")
        if self.n_pixels != rows * cols:
            raise ValueError(
                f"n_pixels={self.n_pixels} does not match grid {rows}x{cols} = {rows * cols}"
            )
        if not 0.0 < self.fill_factor <= 1.0:
            raise ValueError(f"fill_factor must lie in (0, 1], got {self.fill_factor}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not 0.0 <= self.p_ct < 1.0:
            raise ValueError(f"p_ct must lie in [0, 1), got {self.p_ct}")
        if self.dark_rate_total < 0:
            raise ValueError(f"dark_rate_total must be >= 0, got {self.dark_rate_total}")
        if self.recovery_time < 0:
            raise ValueError(f"recovery_time must be >= 0, got {self.recovery_time}")
        if self.v_bias <= self.v_bd:
            raise ValueError(
                f"v_bias={self.v_bias} must exceed breakdown v_bd={self.v_bd}"
            )

    @classmethod
    def for_temperature(cls, temperature_c: float, table=DEFAULT_DARK_RATE_TABLE, **kwargs):
        """Config with the dark rate resolved from a temperature table."""
        rate = dark_rate_from_temperature(temperature_c, table)
        return cls(dark_rate_total=rate, temperature=temperature_c, **kwargs)


@dataclass(frozen=True)
class ApdConfig:
    """Single Geiger-mode diode with a non-paralyzable dead time."""

    eta: float = 0.083
    dead_time: float = 50e-9
    dark_rate: float = 227.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.dead_time < 0:
            raise ValueError(f"dead_time must be >= 0, got {self.dead_time}")
        if self.dark_rate < 0:
            raise ValueError(f"dark_rate must be >= 0, got {self.dark_rate}")


@dataclass(frozen=True)
class AvalancheEvent:
    """One fired pixel: absolute time, pixel index, and what caused it."""

    time: float
    pixel: int
    cause: str

    def __post_init__(self):
        if self.cause not in CAUSE_NAMES:
            raise ValueError(f"cause must be one of {CAUSE_NAMES}, got {self.cause!r}")


class EventStream:
    """Time-ordered avalanche events in structure-of-arrays form.

    Behaves as a sequence of AvalancheEvent while keeping times / pixels /
    causes as numpy arrays for fast downstream processing.
    """

    __slots__ = ("times", "pixels", "causes", "duration")

    def __init__(self, times, pixels, causes, duration: float):
        self.times = np.ascontiguousarray(times, dtype=np.float64)
        self.pixels = np.ascontiguousarray(pixels, dtype=np.int32)
        self.causes = np.ascontiguousarray(causes, dtype=np.uint8)
        if not (self.times.size == self.pixels.size == self.causes.size):
            raise ValueError("times, pixels and causes must have equal length")
        if self.times.size and np.any(np.diff(self.times) < 0):
            raise ValueError("events must be time ordered")
        self.duration = float(duration)

    def __len__(self) -> int:
        return self.times.size

    def __getitem__(self, i):
        if isinstance(i, slice):
            return EventStream(self.times[i], self.pixels[i], self.causes[i], self.duration)
        return AvalancheEvent(
            float(self.times[i]), int(self.pixels[i]), CAUSE_NAMES[self.causes[i]]
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def count_by_cause(self) -> dict[str, int]:
        return {
            name: int(np.count_nonzero(self.causes == code))
            for code, name in enumerate(CAUSE_NAMES)
        }


EVENTS_HEADER = ("time_s", "pixel", "cause")


def save_events_csv(events: EventStream, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENTS_HEADER)
        for t, p, c in zip(events.times, events.pixels, events.causes):
            writer.writerow([repr(float(t)), int(p), CAUSE_NAMES[c]])


def load_events_csv(path, duration: float | None = None) -> EventStream:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != EVENTS_HEADER:
            raise ValueError(f"{path}: expected header {EVENTS_HEADER}, got {header!r}")
        times, pixels, causes = [], [], []
        for row in reader:
            if not row:
                continue
            times.append(float(row[0]))
            pixels.append(int(row[1]))
            causes.append(CAUSE_NAMES.index(row[2]))
    if duration is None:
        duration = times[-1] if times else 0.0
    return EventStream(times, pixels, causes, duration)


def build_neighbor_map(grid: tuple[int, int]) -> list[list[int]]:
    """4-neighbourhood of each pixel on a row-major lattice, non-periodic edges."""
    rows, cols = grid
    nbrs: list[list[int]] = []
    for r in range(rows):
        for c in range(cols):
            cell = []
            if r > 0:
                cell.append((r - 1) * cols + c)
            if r < rows - 1:
                cell.append((r + 1) * cols + c)
            if c > 0:
                cell.append(r * cols + c - 1)
            if c < cols - 1:
                cell.append(r * cols + c + 1)
            nbrs.append(cell)
    return nbrs


@lru_cache(maxsize=1024)
def _extras_cdf(s: int, p_ct: float) -> tuple[float, ...]:
    """CDF of the secondary count for a bunch of s seed avalanches.

    Conditional form of the first-order redistribution law: the seed
    distribution is a point mass at s, and entry e of the result is
    P(at most e secondaries).  The support is widened until the truncated
    tail is negligible, then the cumulative sum is normalised so inverse-CDF
    sampling is well defined.
    """
    width = 64
    while True:
        p_th = np.zeros(s + width + 1)
        p_th[s] = 1.0
        probs = crosstalk_redistribute(DetectionDistribution(p_th), p_ct).probs
        if 1.0 - probs.sum() < 1e-10 or width >= 4096:
            break
        width *= 2
    cdf = np.cumsum(probs[s:])
    cdf /= cdf[-1]
    return tuple(cdf)


def _dark_candidates(rng, rate: float, duration: float) -> np.ndarray:
    if rate <= 0.0 or duration <= 0.0:
        return np.empty(0)
    n = rng.poisson(rate * duration)
    return np.sort(rng.random(n) * duration, kind="stable")


def simulate_sipm(arrivals: PhotonArrivals, config: SipmConfig, seed=None) -> EventStream:
    """Run the array Monte Carlo over the arrival stream's window.

    Returns the time-ordered avalanche events.  Candidates at identical
    timestamps are processed photons-first in arrival order, which makes
    simultaneous-bunch runs reproducible.
    """
    rng = rng_from_seed(seed)
    duration = arrivals.duration
    photon_times = arrivals.times
    dark_times = _dark_candidates(rng, config.dark_rate_total, duration)

    n_ph, n_dk = photon_times.size, dark_times.size
    n_all = n_ph + n_dk
    if n_all > MAX_CANDIDATES:
        raise SizeError(
            f"{n_all} candidate events exceed the per-call budget of {MAX_CANDIDATES}; "
            "split the run into shorter windows"
        )
    if n_all == 0:
        return EventStream(np.empty(0), np.empty(0, np.int32), np.empty(0, np.uint8), duration)

    t_all = np.concatenate([photon_times, dark_times])
    is_photon = np.concatenate([np.ones(n_ph, bool), np.zeros(n_dk, bool)])
    order = np.argsort(t_all, kind="stable")
    t_all = t_all[order]
    is_photon = is_photon[order]

    pix_all = rng.integers(0, config.n_pixels, n_all)
    u_eta = rng.random(n_all)
    u_ct = rng.random(n_all)
    u_nb = rng.random(n_all)

    # Hot loop: plain-python scalars beat numpy indexing here by a wide margin.
    t_list = t_all.tolist()
    ph_list = is_photon.tolist()
    pix_list = pix_all.tolist()
    eta_list = u_eta.tolist()
    ct_list = u_ct.tolist()
    nb_list = u_nb.tolist()
    neighbors = build_neighbor_map(config.grid)
    eta = config.eta
    p_ct = config.p_ct
    recovery = config.recovery_time
    cascade = config.cascade_crosstalk
    last = [-np.inf] * config.n_pixels

    out_t: list[float] = []
    out_p: list[int] = []
    out_c: list[int] = []
    append_t, append_p, append_c = out_t.append, out_p.append, out_c.append

    def close_bunch(first: int, t: float, u: float) -> None:
        # Draw the secondary count for the bunch that started at index
        # `first` and fired entirely at time t; u is the reserved uniform.
        s = len(out_t) - first
        if s == 0:
            return
        extras = bisect_right(_extras_cdf(s, p_ct), u)
        if extras == 0:
            return
        cluster = out_p[first:]
        for _ in range(extras):
            # Live lattice neighbours of the fired cluster, adjacency-weighted;
            # rebuilt every draw because each secondary shrinks the pool.
            live = [
                q
                for member in cluster
                for q in neighbors[member]
                if t - last[q] >= recovery
            ]
            if not live:
                break
            q = live[int(rng.random() * len(live))]
            append_t(t)
            append_p(q)
            append_c(CAUSE_CROSSTALK)
            last[q] = t
            cluster.append(q)

    bunch_t = None
    bunch_first = 0
    bunch_u = 0.0

    for i in range(n_all):
        p = pix_list[i]
        t = t_list[i]
        # recovery check uses >= so a pixel exactly at its boundary can fire
        if t - last[p] < recovery:
            continue
        if ph_list[i]:
            if eta_list[i] >= eta:
                continue
            cause = CAUSE_PHOTON
        else:
            cause = CAUSE_DARK
        if not cascade and p_ct > 0.0 and t != bunch_t:
            if bunch_t is not None:
                close_bunch(bunch_first, bunch_t, bunch_u)
            bunch_t = t
            bunch_first = len(out_t)
            bunch_u = ct_list[i]
        append_t(t)
        append_p(p)
        append_c(cause)
        last[p] = t
        if cascade and p_ct > 0.0 and ct_list[i] < p_ct:
            fired_from = p
            cell = neighbors[fired_from]
            q = cell[int(nb_list[i] * len(cell))]
            if t - last[q] >= recovery:
                append_t(t)
                append_p(q)
                append_c(CAUSE_CROSSTALK)
                last[q] = t
                fired_from = q
                while rng.random() < p_ct:
                    cell = neighbors[fired_from]
                    q = cell[int(rng.random() * len(cell))]
                    if t - last[q] < recovery:
                        break
                    append_t(t)
                    append_p(q)
                    append_c(CAUSE_CROSSTALK)
                    last[q] = t
                    fired_from = q

    if bunch_t is not None:
        close_bunch(bunch_first, bunch_t, bunch_u)

    return EventStream(out_t, out_p, out_c, duration)


def simulate_apd(arrivals: PhotonArrivals, config: ApdConfig, seed=None) -> np.ndarray:
    """Detection times of a single diode with non-paralyzable dead time.

    A photon is detected with probability eta when at least dead_time has
    elapsed since the previous detection; dark avalanches need only a live
    diode.  Returns sorted detection timestamps.
    """
    rng = rng_from_seed(seed)
    duration = arrivals.duration
    dark_times = _dark_candidates(rng, config.dark_rate, duration)
    n_ph, n_dk = arrivals.times.size, dark_times.size
    n_all = n_ph + n_dk
    if n_all == 0:
        return np.empty(0)
    t_all = np.concatenate([arrivals.times, dark_times])
    is_photon = np.concatenate([np.ones(n_ph, bool), np.zeros(n_dk, bool)])
    order = np.argsort(t_all, kind="stable")
    t_list = t_all[order].tolist()
    ph_list = is_photon[order].tolist()
    u = rng.random(n_all).tolist()

    eta = config.eta
    dead = config.dead_time
    last = -np.inf
    out: list[float] = []
    for i in range(n_all):
        t = t_list[i]
        if t - last < dead:
            continue
        if ph_list[i] and u[i] >= eta:
            continue
        out.append(t)
        last = t
    return np.array(out)


def occupancy_distribution(k: int, n_pixels: int, eta: float) -> DetectionDistribution:
    """Distribution of distinct fired pixels for k photons on n_pixels.

    Photons land on uniform pixels one by one; a photon on a quiet pixel
    fires it with probability eta, a photon on an already-fired pixel is
    absorbed.  Exact dynamic program over (photons placed, pixels fired).
    """
    if k < 0 or n_pixels < 1:
        raise ValueError("need k >= 0 and n_pixels >= 1")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if k > 10_000 or n_pixels > 10_000:
        raise SizeError(
            f"occupancy_distribution limited to k, n_pixels <= 10000 (got k={k}, n={n_pixels})"
        )
    limit = min(k, n_pixels)
    probs = np.zeros(limit + 1)
    probs[0] = 1.0
    m = np.arange(limit + 1, dtype=float)
    grow = (n_pixels - m) / n_pixels * eta  # P(m -> m+1) for one photon
    for _ in range(k):
        moved = probs * grow
        probs = probs - moved
        probs[1:] += moved[:-1]
    return DetectionDistribution(probs)


def multiplicities_per_trigger(events: EventStream, trigger_times: np.ndarray, half_window: float) -> np.ndarray:
    """Count events within +-half_window of each trigger time."""
    trigger_times = np.asarray(trigger_times, dtype=float)
    lo = np.searchsorted(events.times, trigger_times - half_window, side="left")
    hi = np.searchsorted(events.times, trigger_times + half_window, side="right")
    return (hi - lo).astype(np.int64)
