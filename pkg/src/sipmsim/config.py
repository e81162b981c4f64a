"""JSON configuration for the full simulation stack.

One file holds four sections — ``source``, ``device``, ``chain``,
``discriminator`` — whose keys mirror the corresponding dataclass fields.
Parsing is strict: unknown sections or keys are errors, not warnings, so a
typo in a physics parameter cannot silently fall back to a default.  Every
omitted key is reported back as a defaulted field so run manifests can record
which numbers were assumptions rather than inputs.

Saving is canonical (sorted keys, two-space indent, trailing newline), so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .analog import ChainConfig
from .device import SipmConfig
from .discriminate import DiscriminatorConfig
from .errors import ConfigError
from .source import SourceConfig

_SECTIONS = {
    "source": SourceConfig,
    "device": SipmConfig,
    "chain": ChainConfig,
    "discriminator": DiscriminatorConfig,
}

# Fields that accept JSON null.
_OPTIONAL_FIELDS = {("source", "seed"), ("device", "temperature")}
# Fields stored as a JSON array of integers.
_INT_PAIR_FIELDS = {("device", "grid")}


@dataclass(frozen=True)
class SimulationConfig:
    source: SourceConfig = SourceConfig()
    device: SipmConfig = SipmConfig()
    chain: ChainConfig = ChainConfig()
    discriminator: DiscriminatorConfig = DiscriminatorConfig()


def _coerce(section: str, name: str, value, annotation):
    """Check a raw JSON value against a field and return the typed value."""
    key = f"{section}.{name}"
    if (section, name) in _INT_PAIR_FIELDS:
        if (
            not isinstance(value, list)
            or len(value) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
        ):
            raise ConfigError(f"{key}: expected a two-element integer array, got {value!r}")
        return tuple(value)
    if value is None:
        if (section, name) in _OPTIONAL_FIELDS:
            return None
        raise ConfigError(f"{key}: null is not allowed here")
    if annotation is bool or annotation == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number or string, got {value!r}")
    basis = str(annotation)
    if "str" in basis:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if "float" in basis:
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if "int" in basis:
        if not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported field type {annotation!r}")  # pragma: no cover


def _build_section(section: str, raw: dict) -> tuple[object, list[str]]:
    cls = _SECTIONS[section]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: {', '.join(unknown)}; "
            f"valid keys are {', '.join(sorted(fields))}"
        )
    kwargs = {}
    defaulted = []
    for name, f in fields.items():
        if name in raw:
            kwargs[name] = _coerce(section, name, raw[name], f.type)
        else:
            defaulted.append(f"{section}.{name}")
    try:
        return cls(**kwargs), defaulted
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def config_from_dict(data: dict) -> tuple[SimulationConfig, list[str]]:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(
            f"unknown section(s): {', '.join(unknown)}; "
            f"valid sections are {', '.join(sorted(_SECTIONS))}"
        )
    sections = {}
    defaulted: list[str] = []
    for name in _SECTIONS:
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"section [{name}] must be an object, got {type(raw).__name__}")
        built, missing = _build_section(name, raw)
        sections[name] = built
        defaulted.extend(missing)
    return SimulationConfig(**sections), defaulted


def load_config(path) -> tuple[SimulationConfig, list[str]]:
    """Parse a JSON config file; returns (config, dotted names of defaulted fields).

    An empty file (or the empty object) yields the all-defaults configuration
    with every field reported as defaulted.
    """
    path = Path(path)
    text = path.read_text()
    if text.strip() == "":
        data = {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_to_dict(config: SimulationConfig) -> dict:
    out: dict = {}
    for name, cls in _SECTIONS.items():
        section = getattr(config, name)
        entry = {}
        for f in dataclasses.fields(cls):
            value = getattr(section, f.name)
            if isinstance(value, tuple):
                value = list(value)
            entry[f.name] = value
        out[name] = entry
    return out


def save_config(config: SimulationConfig, path) -> None:
    """Write the canonical form: sorted keys, indent 2, newline at end."""
    text = json.dumps(config_to_dict(config), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text)


def default_config() -> SimulationConfig:
    return SimulationConfig()


def defaulted_field_names() -> list[str]:
    """Dotted names of every config field (== defaulted list for an empty file)."""
    names = []
    for name, cls in _SECTIONS.items():
        names.extend(f"{name}.{f.name}" for f in dataclasses.fields(cls))
    return names
