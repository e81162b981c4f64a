"""sipmsim: Monte Carlo and analytic models of a photon-counting SiPM module.

A silicon photomultiplier — a parallel array of Geiger-mode avalanche
photodiodes — summed into one fast analog output, simulated end to end:
photon sources, per-pixel avalanche statistics (dark counts, optical
cross-talk, recovery), the analog pulse chain, threshold counting and
pulse-height analysis, plus the analytic counting models the simulations are
checked against.
"""

__version__ = "0.1.0"

from .analog import (  # noqa: F401
    ChainConfig,
    ChainStream,
    PulseTemplate,
    Waveform,
    add_noise,
    amplify,
    high_pass,
    load_waveform_binary,
    load_waveform_csv,
    save_waveform_binary,
    save_waveform_csv,
    synthesize,
)
from .config import (  # noqa: F401
    SimulationConfig,
    default_config,
    load_config,
    save_config,
)
from .device import (  # noqa: F401
    ApdConfig,
    EventStream,
    SipmConfig,
    dark_rate_from_temperature,
    multiplicities_per_trigger,
    occupancy_distribution,
    simulate_apd,
    simulate_sipm,
)
from .discriminate import (  # noqa: F401
    DiscriminatorConfig,
    PeakScanner,
    classify_amplitudes,
    count_peaks,
    estimate_gain,
    measure_amplitudes,
    rate_estimate,
    threshold_crossings,
)
from .errors import (  # noqa: F401
    ClassificationError,
    ConfigError,
    EstimationError,
    FitError,
    NegativeCrosstalkWarning,
    SipmSimError,
    SizeError,
)
from .experiments import (  # noqa: F401
    exp_cw,
    exp_multiphoton,
    exp_power_meter,
    exp_pulsed_430,
    exp_saturation,
    run_experiment,
    run_from_manifest,
)
from .rng import RNG_ALGORITHM, rng_from_seed, spawn_seeds  # noqa: F401
from .source import PhotonArrivals, SourceConfig, generate  # noqa: F401
from .stats import (  # noqa: F401
    CoherentPulseModel,
    CrosstalkModel,
    DeadTimeModel,
    DetectionDistribution,
    EfficiencyModel,
    RatePoint,
    crosstalk_redistribute,
    dead_time_rate,
    detection_probability,
    estimate_pct,
    fit_constant_efficiency,
    fit_efficiency_model,
    photon_rate_to_power,
    poisson_pmf,
    power_to_photon_rate,
    pulsed_count_rate,
)
