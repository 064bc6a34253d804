"""Run configuration: one TOML or JSON file per run, plus flag overrides."""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

from ..errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_config(path) -> dict:
    """Parse a .toml or .json config file into a nested dict."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    if p.suffix.lower() == ".toml":
        with open(p, "rb") as fh:
            try:
                return tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"invalid TOML in {p}: {exc}") from exc
    if p.suffix.lower() == ".json":
        with open(p, "r", encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON in {p}: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"config root must be an object: {p}")
        return payload
    raise ConfigError(f"config file must be .toml or .json, got {p.suffix!r}")


def config_hash(payload: dict) -> str:
    """Stable short hash of the effective run configuration."""
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]


def section(cfg: dict, name: str) -> dict:
    value = cfg.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section [{name}] must be a table/object")
    return value


def pick(flag_value, cfg_section: dict, key: str, default):
    """Priority: explicit CLI flag, then config file, then built-in default."""
    if flag_value is not None:
        return flag_value
    if key in cfg_section:
        return cfg_section[key]
    return default
