"""Command-line front end.

Subcommands::

    simulate     source -> device -> analog chain; writes events + waveform
    count        threshold-count a stored waveform, report the rate
    histogram    pulse-height spectrum and photon-number classes from a waveform
    fit          fit efficiency models to (mu, rate) tables
    experiment   run one of the named experiments (or replay a manifest)
    defaults     print the canonical all-defaults config

Exit codes: 0 success, 2 configuration/usage problems, 1 runtime failures.
On failure the last stderr line is a single JSON object with ``error`` and
``message`` fields.  ``--out-dir`` falls back to the ``SIPMSIM_OUT_DIR``
environment variable, then the current directory.
"""

from __future__ import annotations

import argparse
import csv as _csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analog import (
    ChainStream,
    Waveform,
    load_waveform_binary,
    load_waveform_csv,
    save_waveform_binary,
    save_waveform_csv,
)
from .config import SimulationConfig, default_config, load_config, save_config
from .device import save_events_csv, simulate_sipm
from .discriminate import (
    DiscriminatorConfig,
    classify_amplitudes,
    count_peaks,
    estimate_gain,
    measure_amplitudes,
    rate_estimate,
    save_classified_csv,
    save_histogram_csv,
)
from .errors import SipmSimError
from .experiments import EXPERIMENT_NAMES, run_experiment, run_from_manifest
from .rng import spawn_seeds
from .source import generate, load_arrivals_csv, save_arrivals_csv
from .stats import RatePoint, fit_constant_efficiency, fit_efficiency_model


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip() != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _out_dir(args) -> Path:
    if args.out_dir is not None:
        return Path(args.out_dir)
    env = os.environ.get("SIPMSIM_OUT_DIR")
    return Path(env) if env else Path(".")


def _load_sim_config(args) -> tuple[SimulationConfig, list[str]]:
    if getattr(args, "config", None):
        return load_config(args.config)
    from .config import defaulted_field_names

    return default_config(), defaulted_field_names()


def _load_waveform(path) -> Waveform:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic == b"SIPMWAV1":
        return load_waveform_binary(path)
    return load_waveform_csv(path)


def _emit(args, payload: dict) -> None:
    """One result record to stdout, as JSON or a two-line CSV."""
    if getattr(args, "format", "csv") == "json":
        print(json.dumps(payload, sort_keys=True))
    else:
        keys = list(payload)
        print(",".join(keys))
        print(",".join(repr(v) if isinstance(v, float) else str(v) for v in (payload[k] for k in keys)))


# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    config, defaulted = _load_sim_config(args)
    if args.seed is not None:
        master = args.seed
    elif config.source.seed is not None:
        master = config.source.seed
    else:
        master = 0
    src_seed, dev_seed, noise_seed = spawn_seeds(master, 3)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)

    arrivals = generate(config.source, seed=src_seed)
    events = simulate_sipm(arrivals, config.device, seed=dev_seed)
    save_arrivals_csv(arrivals, out / "arrivals.csv")
    save_events_csv(events, out / "events.csv")

    paths = {"arrivals": "arrivals.csv", "events": "events.csv"}
    if not args.no_waveform:
        chain = config.chain
        template = chain.template()
        stream = ChainStream(events.times, template, chain, noise_seed=noise_seed)
        n_samples = int(np.floor(arrivals.duration / chain.sample_period)) + 1
        samples = np.concatenate(
            [stream.next_block(min(1 << 22, n_samples - i)) for i in range(0, n_samples, 1 << 22)]
        ) if n_samples else np.zeros(1)
        wave = Waveform(samples, chain.sample_period)
        if args.waveform_format == "binary":
            save_waveform_binary(wave, out / "waveform.bin")
            paths["waveform"] = "waveform.bin"
        else:
            save_waveform_csv(wave, out / "waveform.csv")
            paths["waveform"] = "waveform.csv"

    _emit(
        args,
        {
            "photons": len(arrivals),
            "avalanches": len(events),
            "duration_s": float(arrivals.duration),
            "seed": master,
            "defaulted_fields": len(defaulted),
            "out_dir": str(out),
            **{f"file_{k}": v for k, v in sorted(paths.items())},
        },
    )
    return 0


def _cmd_count(args) -> int:
    wave = _load_waveform(args.waveform)
    disc = DiscriminatorConfig(threshold_mv=args.threshold, min_separation=args.min_separation)
    count = count_peaks(wave, disc)
    duration = wave.samples.size * wave.sample_period
    rate = rate_estimate(count, duration, dead_time=args.dead_time, kind=args.dead_time_kind)
    _emit(
        args,
        {
            "count": count,
            "duration_s": float(duration),
            "rate_hz": float(rate),
            "threshold_mv": float(args.threshold),
        },
    )
    return 0


def _cmd_histogram(args) -> int:
    wave = _load_waveform(args.waveform)
    if args.triggers:
        triggers = load_arrivals_csv(args.triggers).times
    elif args.rep_rate:
        period = 1.0 / args.rep_rate
        n = int(np.floor((wave.duration - args.gate) / period)) + 1
        triggers = wave.t0 + np.arange(max(n, 0)) * period
    else:
        raise SipmSimError("histogram needs --triggers FILE or --rep-rate HZ")
    measured = measure_amplitudes(wave, triggers, gate=args.gate)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    save_histogram_csv(measured.amplitudes, out / "amplitudes.csv", bin_width=args.bin_width)
    gain = args.gain if args.gain else estimate_gain(
        measured.amplitudes[measured.amplitudes > 0], bin_width=args.bin_width
    )
    result = classify_amplitudes(measured.amplitudes, gain, noise_rms=args.noise_rms)
    save_classified_csv(result, out / "classified.csv")
    _emit(
        args,
        {
            "triggers": int(len(triggers)),
            "gain_mv": float(gain),
            "windows_overlap": measured.windows_overlap,
            "out_dir": str(out),
        },
    )
    return 0


def _read_points(path) -> list[RatePoint]:
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["mu", "rate_hz"]:
            raise SipmSimError(f"{path}: expected header 'mu,rate_hz', got {header!r}")
        return [RatePoint(float(r[0]), float(r[1])) for r in reader if r]


def _cmd_fit(args) -> int:
    points = _read_points(args.input)
    if args.model == "constant-eta":
        eta = fit_constant_efficiency(points, args.rep_rate, rate_cutoff=args.rate_cutoff)
        payload = {
            "model": "constant-eta",
            "eta": float(eta),
            "points_used": sum(1 for p in points if p.rate <= args.rate_cutoff),
        }
    else:
        fit = fit_efficiency_model(points, args.rep_rate)
        payload = {
            "model": "efficiency-model",
            "p1": float(fit.model.p1),
            "p2": float(fit.model.p2),
            "p3": float(fit.model.p3),
            "residual_norm": float(fit.residual_norm),
            "iterations": fit.iterations,
            "degenerate": fit.degenerate,
        }
    _emit(args, payload)
    return 0


def _cmd_experiment(args) -> int:
    out = _out_dir(args)
    if args.manifest:
        paths = run_from_manifest(args.manifest, out_dir=args.out_dir, plot=args.plot)
        _emit(args, {"replayed": str(args.manifest), **{k: str(v) for k, v in paths.items()}})
        return 0
    if not args.name:
        raise SipmSimError("experiment needs a name or --manifest FILE")
    params: dict = {}
    if args.name == "multiphoton":
        if args.a0:
            params["a0_list"] = args.a0
        if args.pct is not None:
            params["p_ct"] = args.pct
        params["trials"] = args.trials
    elif args.name == "saturation":
        if args.freqs:
            params["freqs"] = args.freqs
        if args.mu is not None:
            params["mu"] = args.mu
    elif args.name == "pulsed_430":
        if args.mu_sweep:
            params["mu_sweep"] = args.mu_sweep
    elif args.name == "cw":
        if args.rates:
            params["rate_sweep"] = args.rates
    elif args.name == "power_meter":
        if args.count_rates:
            params["count_rates"] = args.count_rates
    result = run_experiment(args.name, seed=args.seed, **params)
    paths = result.write(out, plot=args.plot)
    _emit(args, {"experiment": args.name, **{k: str(v) for k, v in sorted(paths.items())}})
    return 0


def _cmd_defaults(args) -> int:
    if args.output:
        save_config(default_config(), args.output)
    else:
        from .config import config_to_dict

        print(json.dumps(config_to_dict(default_config()), sort_keys=True, indent=2))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sipmsim",
        description="Photon-counting SiPM simulation: sources, pixel array, "
        "analog chain, counting, and the canned experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--out-dir", default=None, help="output directory (default: $SIPMSIM_OUT_DIR or .)")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="stdout record format")
        if config:
            p.add_argument("--config", default=None, help="JSON config file")
            p.add_argument("--seed", type=int, default=None, help="master seed override")

    p = sub.add_parser("simulate", help="run source -> device -> chain, write data files")
    common(p)
    p.add_argument("--waveform-format", choices=("csv", "binary"), default="csv")
    p.add_argument("--no-waveform", action="store_true", help="write events only")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("count", help="count threshold crossings in a waveform file")
    common(p, config=False)
    p.add_argument("waveform", help="waveform file (CSV or binary)")
    p.add_argument("--threshold", type=float, default=40.0, help="threshold in mV")
    p.add_argument("--min-separation", type=float, default=0.0, help="hold-off in seconds")
    p.add_argument("--dead-time", type=float, default=0.0, help="correct the rate for this dead time")
    p.add_argument("--dead-time-kind", choices=("non-paralyzable", "paralyzable"),
                   default="non-paralyzable")
    p.set_defaults(func=_cmd_count)

    p = sub.add_parser("histogram", help="pulse-height spectrum + classification")
    common(p, config=False)
    p.add_argument("waveform", help="waveform file (CSV or binary)")
    p.add_argument("--triggers", default=None, help="CSV of trigger times (timestamp_seconds)")
    p.add_argument("--rep-rate", type=float, default=None, help="periodic triggers at this rate")
    p.add_argument("--gate", type=float, default=5e-9, help="gate length in seconds")
    p.add_argument("--gain", type=float, default=None, help="mV per fired cell (default: auto)")
    p.add_argument("--bin-width", type=float, default=2.0, help="histogram bin width in mV")
    p.add_argument("--noise-rms", type=float, default=0.0, help="noise RMS for the resolvability check")
    p.set_defaults(func=_cmd_histogram)

    p = sub.add_parser("fit", help="fit an efficiency model to a mu,rate_hz table")
    common(p, config=False)
    p.add_argument("model", choices=("constant-eta", "efficiency-model"))
    p.add_argument("--input", required=True, help="CSV with header mu,rate_hz")
    p.add_argument("--rep-rate", type=float, default=430e6)
    p.add_argument("--rate-cutoff", type=float, default=3e6,
                   help="constant-eta: use only points at or below this rate")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("experiment", help="run a named experiment or replay a manifest")
    common(p, config=False)
    p.add_argument("name", nargs="?", choices=EXPERIMENT_NAMES, default=None)
    p.add_argument("--manifest", default=None, help="replay this manifest instead")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--plot", action="store_true", help="also write an SVG plot")
    p.add_argument("--trials", type=int, default=100_000, help="multiphoton: triggers per a0")
    p.add_argument("--a0", type=_float_list, default=None, help="multiphoton: comma-separated bunch means")
    p.add_argument("--pct", type=float, default=None, help="multiphoton: cross-talk probability")
    p.add_argument("--freqs", type=_float_list, default=None, help="saturation: pulse rates, Hz")
    p.add_argument("--mu", type=float, default=None, help="saturation: photons per pulse")
    p.add_argument("--mu-sweep", type=_float_list, default=None, help="pulsed_430: mean photons per pulse")
    p.add_argument("--rates", type=_float_list, default=None, help="cw: incident photon rates, Hz")
    p.add_argument("--count-rates", type=_float_list, default=None, help="power_meter: observed rates, Hz")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("defaults", help="print (or write) the canonical default config")
    p.add_argument("--output", default=None, help="write to this path instead of stdout")
    p.set_defaults(func=_cmd_defaults)

    return parser


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": str(message)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SipmSimError as exc:
        # ConfigError is a usage problem (exit 2); the rest are runtime (exit 1).
        from .errors import ConfigError

        return _fail(2 if isinstance(exc, ConfigError) else 1, type(exc).__name__, str(exc))
    except (ValueError, OSError) as exc:
        return _fail(1, type(exc).__name__, str(exc))


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
