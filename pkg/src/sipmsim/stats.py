"""Analytic counting statistics for a multi-pixel Geiger-mode photon counter.

This module collects the closed-form models the rest of the package is checked
against: Poisson photon statistics, first-order optical cross-talk
redistribution of a multiplicity distribution, detection probability of a
coherent pulse, an empirical rate-dependent efficiency model, dead-time and
pile-up rate transfer, photon-rate/optical-power conversion, and the
least-squares fits that extract efficiency parameters from measured count
rates.

Conventions: probabilities are dimensionless floats in [0, 1], rates are Hz,
times are seconds, wavelengths are metres, amplitudes are millivolts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import EstimationError, FitError, NegativeCrosstalkWarning
from .fitting import levenberg_least_squares

# Exact SI values (2019 redefinition).
PLANCK_CONSTANT = 6.62607015e-34  # J s
SPEED_OF_LIGHT = 299_792_458.0  # m / s

#: Poisson pmf switches to log-space evaluation above this k to avoid
#: overflow in mu**k / k!.
_LOG_SPACE_K = 20

#: Default truncation order for multiplicity distributions.
DEFAULT_N_MAX = 30


def poisson_pmf(k: int, mu: float) -> float:
    """Probability of ``k`` events for a Poisson distribution of mean ``mu``.

    Small orders use the direct ratio; beyond k=20 the term is evaluated in
    log-space so large means stay finite.
    """
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    if k < 0 or k != int(k):
        raise ValueError(f"k must be a non-negative integer, got {k}")
    k = int(k)
    if mu == 0.0:
        return 1.0 if k == 0 else 0.0
    if k <= _LOG_SPACE_K:
        return math.exp(-mu) * mu**k / math.factorial(k)
    return math.exp(k * math.log(mu) - mu - math.lgamma(k + 1.0))


@dataclass(frozen=True)
class DetectionDistribution:
    """Truncated distribution of the number of simultaneous avalanches.

    ``probs[n]`` is the probability of multiplicity ``n`` for n = 0..n_max.
    The distribution may sum to slightly less than one because of truncation;
    it must never exceed one beyond floating error.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("probs must be a non-empty 1-d array")
        if np.any(~np.isfinite(arr)):
            raise ValueError("probs must be finite")
        if np.any(arr < -1e-15) or np.any(arr > 1.0 + 1e-12):
            raise ValueError("each probability must lie in [0, 1]")
        total = float(arr.sum())
        if total > 1.0 + 1e-9:
            raise ValueError(f"probabilities sum to {total}, above 1")
        arr = np.clip(arr, 0.0, 1.0)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def prob(self, n: int) -> float:
        """p(n), zero beyond the truncation order."""
        if n < 0:
            raise ValueError("multiplicity must be >= 0")
        if n > self.n_max:
            return 0.0
        return float(self.probs[n])

    def total(self) -> float:
        return float(self.probs.sum())

    def mean(self) -> float:
        """Mean multiplicity of the truncated distribution."""
        return float(np.arange(self.probs.size) @ self.probs)

    @classmethod
    def from_poisson(cls, mean: float, n_max: int = DEFAULT_N_MAX) -> "DetectionDistribution":
        if mean < 0:
            raise ValueError(f"mean must be >= 0, got {mean}")
        if n_max < 0:
            raise ValueError("n_max must be >= 0")
        return cls(np.array([poisson_pmf(n, mean) for n in range(n_max + 1)]))

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "DetectionDistribution":
        arr = np.asarray(counts, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("counts must be a non-empty 1-d sequence")
        if np.any(arr < 0):
            raise ValueError("counts must be non-negative")
        total = arr.sum()
        if total <= 0:
            raise ValueError("counts must not be all zero")
        return cls(arr / total)


@dataclass(frozen=True)
class CrosstalkModel:
    """Single-generation optical cross-talk with per-avalanche probability p_ct."""

    p_ct: float

    def __post_init__(self):
        if not 0.0 <= self.p_ct < 1.0:
            raise ValueError(f"p_ct must lie in [0, 1), got {self.p_ct}")


@dataclass(frozen=True)
class CoherentPulseModel:
    """Photon-number statistics of one coherent pulse of mean ``mu``."""

    mu: float

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")

    def pmf(self, k: int) -> float:
        return poisson_pmf(k, self.mu)


@dataclass(frozen=True)
class EfficiencyModel:
    """Detection efficiency versus mean photons per pulse.

    eta(mu) = p1 * exp(-p2 * mu) + p3.  A constant efficiency is the
    degenerate member p1 = p2 = 0, p3 = eta.  The default parameters are the
    fitted intensity-dependent curve of the reference module.
    """

    p1: float = 0.03
    p2: float = 0.157
    p3: float = 0.044

    def __post_init__(self):
        if self.p2 < 0 or self.p3 < 0:
            raise ValueError("p2 and p3 must be >= 0")
        if not 0.0 < self.p1 + self.p3 <= 1.0:
            raise ValueError(
                f"zero-power efficiency p1 + p3 must lie in (0, 1], got {self.p1 + self.p3}"
            )

    @classmethod
    def constant(cls, eta: float) -> "EfficiencyModel":
        if not 0.0 < eta <= 1.0:
            raise ValueError(f"constant efficiency must lie in (0, 1], got {eta}")
        return cls(0.0, 0.0, eta)

    @classmethod
    def exponential(cls, p1: float, p2: float, p3: float) -> "EfficiencyModel":
        return cls(p1, p2, p3)

    @property
    def is_constant(self) -> bool:
        return self.p1 == 0.0 or self.p2 == 0.0

    @property
    def asymptote(self) -> float:
        """Efficiency in the strong-pulse limit mu -> infinity."""
        return self.p3 if not self.is_constant else self.p1 + self.p3


@dataclass(frozen=True)
class DeadTimeModel:
    """Rate transfer of a counter that is blind for ``tau`` after each count."""

    tau: float
    kind: str = "non-paralyzable"

    _KINDS = ("non-paralyzable", "paralyzable")

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.kind not in self._KINDS:
            raise ValueError(f"kind must be one of {self._KINDS}, got {self.kind!r}")


def crosstalk_redistribute(
    thermal: DetectionDistribution,
    model: CrosstalkModel | float,
    renormalize: bool = False,
) -> DetectionDistribution:
    """Fold single-generation cross-talk into a multiplicity distribution.

    Each of the n avalanches of an n-fold event may promote it to (n+1)-fold
    with probability p_ct, giving the forward recursion

        p(0) = p_th(0)
        p(n) = [p_th(n) + (n - 1) * p(n - 1) * p_ct] / (1 + n * p_ct)

    evaluated up to the truncation order of the input.  The output is not
    renormalized by default; pass renormalize=True to divide by the total.
    """
    if not isinstance(model, CrosstalkModel):
        model = CrosstalkModel(float(model))
    p_ct = model.p_ct
    p_th = thermal.probs
    out = np.empty_like(p_th)
    out[0] = p_th[0]
    for n in range(1, p_th.size):
        out[n] = (p_th[n] + (n - 1) * out[n - 1] * p_ct) / (1.0 + n * p_ct)
    if renormalize:
        out = out / out.sum()
    return DetectionDistribution(out)


def mean_from_p0(p0: float) -> float:
    """Poisson mean inferred from the empty-event probability: a0 = -ln p(0)."""
    if not 0.0 < p0 <= 1.0:
        raise ValueError(f"p0 must lie in (0, 1], got {p0}")
    return -math.log(p0)


def estimate_pct(p0: float, p1_measured: float) -> float:
    """Estimate the cross-talk probability from the first two multiplicity bins.

    The empty bin fixes the Poisson mean a0 = -ln p0 and therefore the
    cross-talk-free one-fold probability p_th(1) = a0 * p0.  Cross-talk only
    depletes that bin, by the factor (1 + p_ct), so

        p_ct = p_th(1) / p1_measured - 1.

    A slightly negative result (statistical fluctuation) is clamped to zero;
    beyond -1e-6 the clamp also emits NegativeCrosstalkWarning.  A result of
    1 or larger cannot come from a probability and raises EstimationError.
    """
    if not 0.0 < p1_measured <= 1.0:
        raise ValueError(f"p1_measured must lie in (0, 1], got {p1_measured}")
    a0 = mean_from_p0(p0)
    p_th1 = a0 * p0
    p_ct = p_th1 / p1_measured - 1.0
    if p_ct >= 1.0:
        raise EstimationError(
            f"measured one-fold bin {p1_measured} implies p_ct = {p_ct:.4f} >= 1; "
            "the first two bins are inconsistent with a cross-talk probability"
        )
    if p_ct < 0.0:
        if p_ct < -1e-6:
            warnings.warn(
                f"cross-talk estimate {p_ct:.3e} is negative; clamping to 0",
                NegativeCrosstalkWarning,
                stacklevel=2,
            )
        return 0.0
    return p_ct


def detection_probability(pulse: CoherentPulseModel | float, eta: float) -> float:
    """Probability that a coherent pulse of mean ``mu`` yields at least one detection.

    Summing the Poisson photon-number pmf against the per-photon detection
    probability collapses to the closed form 1 - exp(-mu * eta).
    """
    mu = pulse.mu if isinstance(pulse, CoherentPulseModel) else float(pulse)
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    return -math.expm1(-mu * eta)


def efficiency_at(model, mu: float) -> float:
    """Evaluate the efficiency model at mean photons-per-pulse ``mu``.

    A bare number is taken as a constant efficiency.
    """
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    if isinstance(model, (int, float)):
        eta = float(model)
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"constant efficiency must lie in [0, 1], got {eta}")
        return eta
    return model.p1 * math.exp(-model.p2 * mu) + model.p3


def pulsed_count_rate(rep_rate: float, mu: float, model) -> float:
    """Expected count rate of a pulsed source: f_rep * (1 - exp(-mu * eta(mu)))."""
    if rep_rate <= 0:
        raise ValueError(f"rep_rate must be > 0, got {rep_rate}")
    eta = efficiency_at(model, mu)
    return rep_rate * detection_probability(mu, eta)


def dead_time_rate(true_rate: float, model: DeadTimeModel) -> float:
    """Registered rate for a true event rate seen by a dead-time-limited counter.

    non-paralyzable: r / (1 + r * tau), saturating at 1/tau.
    paralyzable:     r * exp(-r * tau), which rolls over and decays.
    """
    if true_rate < 0:
        raise ValueError(f"true_rate must be >= 0, got {true_rate}")
    if model.kind == "non-paralyzable":
        return true_rate / (1.0 + true_rate * model.tau)
    return true_rate * math.exp(-true_rate * model.tau)


def photon_rate_to_power(rate: float, wavelength: float) -> float:
    """Optical power in watts carried by ``rate`` photons/s at ``wavelength`` metres."""
    if rate < 0:
        raise ValueError(f"rate must be >= 0, got {rate}")
    if wavelength <= 0:
        raise ValueError(f"wavelength must be > 0, got {wavelength}")
    return rate * PLANCK_CONSTANT * SPEED_OF_LIGHT / wavelength


def power_to_photon_rate(power: float, wavelength: float) -> float:
    """Inverse of photon_rate_to_power."""
    if power < 0:
        raise ValueError(f"power must be >= 0, got {power}")
    if wavelength <= 0:
        raise ValueError(f"wavelength must be > 0, got {wavelength}")
    return power * wavelength / (PLANCK_CONSTANT * SPEED_OF_LIGHT)


class RatePoint(NamedTuple):
    """One measured point of a rate sweep: mean photons per pulse and count rate."""

    mu: float
    rate: float


class EfficiencyFit(NamedTuple):
    model: EfficiencyModel
    residual_norm: float
    iterations: int
    degenerate: bool


def _as_points(points: Iterable) -> list[RatePoint]:
    out = []
    for p in points:
        mu, rate = (p.mu, p.rate) if isinstance(p, RatePoint) else (p[0], p[1])
        if mu < 0 or rate < 0:
            raise ValueError(f"points must have mu >= 0 and rate >= 0, got ({mu}, {rate})")
        out.append(RatePoint(float(mu), float(rate)))
    return out


def fit_constant_efficiency(
    points: Iterable,
    rep_rate: float,
    rate_cutoff: float = 3e6,
) -> float:
    """Fit a single constant efficiency to low-rate pulsed count-rate data.

    Only points with measured rate <= ``rate_cutoff`` enter the fit, because a
    constant efficiency is only a faithful description below the regime where
    pulse-height droop sets in.  Returns the fitted efficiency.
    """
    if rep_rate <= 0:
        raise ValueError(f"rep_rate must be > 0, got {rep_rate}")
    pts = [p for p in _as_points(points) if p.rate <= rate_cutoff]
    if len(pts) < 2:
        raise FitError(
            f"need at least 2 points with rate <= {rate_cutoff:g} Hz, got {len(pts)}"
        )
    mu = np.array([p.mu for p in pts])
    rate = np.array([p.rate for p in pts])

    def residuals(x):
        return rep_rate * -np.expm1(-mu * x[0]) - rate

    def jacobian(x):
        return (rep_rate * mu * np.exp(-mu * x[0]))[:, None]

    # Moment start: invert the closed form at the highest usable point.
    frac = min(max(rate[-1] / rep_rate, 1e-12), 1.0 - 1e-12)
    x0 = [max(-math.log1p(-frac) / max(mu[-1], 1e-12), 1e-6)]
    result = levenberg_least_squares(residuals, jacobian, x0, bounds=[(1e-9, 1.0)])
    eta = float(result.params[0])
    if not 0.0 < eta <= 1.0:
        raise FitError(f"fitted efficiency {eta} outside (0, 1]", best_params=result.params)
    return eta


def fit_efficiency_model(
    points: Iterable,
    rep_rate: float,
    initial: Sequence[float] = (0.05, 0.1, 0.02),
) -> EfficiencyFit:
    """Fit the three-parameter efficiency model to a pulsed count-rate sweep.

    Requires at least four points spanning a decade in mu.  Returns the fitted
    model, the residual norm, and a degeneracy flag that is set when the data
    cannot separate the decaying term from the constant term (p1 or p2 pinned
    near zero, as happens for rate curves generated by a constant efficiency).
    """
    if rep_rate <= 0:
        raise ValueError(f"rep_rate must be > 0, got {rep_rate}")
    pts = _as_points(points)
    if len(pts) < 4:
        raise FitError(f"need at least 4 points for a 3-parameter fit, got {len(pts)}")
    mu = np.array([p.mu for p in pts])
    rate = np.array([p.rate for p in pts])
    positive = mu[mu > 0]
    if positive.size < 4 or positive.max() / positive.min() < 10.0:
        raise FitError("points must span at least one decade in mu")

    def predict(x):
        eta = x[0] * np.exp(-x[1] * mu) + x[2]
        return rep_rate * -np.expm1(-mu * eta)

    def residuals(x):
        return predict(x) - rate

    def jacobian(x):
        eta = x[0] * np.exp(-x[1] * mu) + x[2]
        outer = rep_rate * mu * np.exp(-mu * eta)  # d rate / d eta
        de_dp1 = np.exp(-x[1] * mu)
        de_dp2 = -x[0] * mu * np.exp(-x[1] * mu)
        de_dp3 = np.ones_like(mu)
        return np.column_stack([outer * de_dp1, outer * de_dp2, outer * de_dp3])

    bounds = [(0.0, 1.0), (0.0, 100.0), (0.0, 1.0)]
    result = levenberg_least_squares(residuals, jacobian, initial, bounds=bounds)
    p1, p2, p3 = (float(v) for v in result.params)
    if p1 + p3 <= 0:
        raise FitError("fitted efficiency is identically zero", best_params=result.params)
    degenerate = p1 < 1e-6 or p2 < 1e-6
    if not degenerate:
        # A Jacobian that has lost a direction also means the decay term is
        # unconstrained even if the parameter values look reasonable.
        singvals = np.linalg.svd(result.jacobian, compute_uv=False)
        if singvals[0] > 0 and singvals[-1] / singvals[0] < 1e-10:
            degenerate = True
    model = EfficiencyModel(p1, p2, p3)
    return EfficiencyFit(model, math.sqrt(2.0 * result.cost), result.iterations, degenerate)
