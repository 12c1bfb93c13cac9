"""Flat ``key = value`` configuration files with module-namespaced keys.

Example::

    # experiment settings
    train.lr = 0.001
    model.heads = 4
    synth.gamma = 0.5

CLI flags override file values. Unknown keys are rejected so typos fail
loudly.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, Mapping, TypeVar

from .explain import ExplainConfig
from .model import ModelConfig
from .synthdata import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


# Short aliases accepted in files and on the command line.
_ALIASES = {
    "train.lr": "train.learning_rate",
    "train.wd": "train.weight_decay",
    "synth.nodes": "synth.num_segments",
    "synth.years": "synth.num_years",
}

_SECTIONS = {
    "train": TrainConfig,
    "model": ModelConfig,
    "synth": SynthConfig,
    "explain": ExplainConfig,
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat config file into namespaced string values."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        key = _ALIASES.get(key, key)
        section = key.split(".", 1)[0]
        if section not in _SECTIONS:
            raise ConfigError(f"{path}:{lineno}: unknown section {section!r}")
        values[key] = value
    return values


def _coerce(value: Any, target_type: type) -> Any:
    if target_type is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {value!r}")
    if target_type is int:
        return int(str(value))
    if target_type is float:
        return float(str(value))
    return value


T = TypeVar("T")


def build_section(
    section: str,
    file_values: Mapping[str, str] | None = None,
    **overrides: Any,
) -> Any:
    """Construct one section's config dataclass from file values + overrides.

    ``overrides`` use bare field names and win over file entries; ``None``
    overrides are ignored (unset CLI flags).
    """
    cls = _SECTIONS[section]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, raw in (file_values or {}).items():
        sec, _, name = key.partition(".")
        if sec != section:
            continue
        if name not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[name] = raw
    for name, value in overrides.items():
        if value is None:
            continue
        if name not in fields:
            raise ConfigError(f"unknown {section} option {name!r}")
        kwargs[name] = value
    typed = {}
    for name, value in kwargs.items():
        ftype = fields[name].type
        base = {"int": int, "float": float, "bool": bool, "str": str}.get(
            str(ftype).removeprefix("builtins."), None
        )
        if base is None:
            if isinstance(value, str):
                raise ConfigError(f"{section}.{name} cannot be set from a config file")
            typed[name] = value
        else:
            typed[name] = _coerce(value, base)
    return cls(**typed)
