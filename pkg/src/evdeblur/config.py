"""Run configuration with layered sources.

Precedence, highest first: explicit flags, ``EVBLUR_*`` environment
variables, a TOML config file, built-in defaults.
"""
from __future__ import annotations

import glob
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

ENV_PREFIX = "EVBLUR_"


class ConfigError(ValueError):
    """Bad or missing configuration; the CLI maps it to a usage error."""


@dataclass(frozen=True)
class PipelineConfig:
    frames: str | None = None
    out_dir: str | None = None
    n: int = 3
    mu_c: float = 0.2
    sigma_c: float = 0.03
    eps: float = 1e-3
    seed: int | None = None
    c: float = 0.2
    oracle_c: bool = False
    t0: int = 0
    t1: int = 60000
    hot_pixels: int = 0
    noise_std: float = 0.0
    hot_value: float = 10.0
    clamp: bool = True

    @property
    def stochastic(self) -> bool:
        return self.sigma_c > 0 or self.hot_pixels > 0 or self.noise_std > 0

    def validate(self) -> "PipelineConfig":
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not self.mu_c > 0 or self.sigma_c < 0:
            raise ConfigError("need mu_c > 0 and sigma_c >= 0")
        if not self.c > 0 or not self.eps > 0:
            raise ConfigError("c and eps must be positive")
        if self.t1 <= self.t0 or self.t0 < 0:
            raise ConfigError("need 0 <= t0 < t1")
        if self.hot_pixels < 0 or self.noise_std < 0:
            raise ConfigError("augmentation settings must be non-negative")
        return self


_FIELD_TYPES = {
    "frames": str, "out_dir": str, "n": int, "mu_c": float, "sigma_c": float,
    "eps": float, "seed": int, "c": float, "oracle_c": bool, "t0": int, "t1": int,
    "hot_pixels": int, "noise_std": float, "hot_value": float, "clamp": bool,
}
assert set(_FIELD_TYPES) == {f.name for f in fields(PipelineConfig)}


def _coerce(key: str, value: Any, source: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{source}: {key} expects {kind.__name__}, got {value!r}") from None


def load_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    data = data.get("evblur", data)
    unknown = set(data) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"config file {path}: unknown keys {sorted(unknown)}")
    return {k: _coerce(k, v, str(path)) for k, v in data.items()}


def from_env(env: Mapping[str, str]) -> dict:
    out = {}
    for key in _FIELD_TYPES:
        name = ENV_PREFIX + key.upper()
        if name in env:
            out[key] = _coerce(key, env[name], name)
    return out


def parse_config(flags: Mapping[str, Any] | None = None, env: Mapping[str, str] | None = None,
                 config_file=None) -> PipelineConfig:
    """Merge the sources. ``flags`` holds only values the user set explicitly
    (``None`` entries are ignored)."""
    env = os.environ if env is None else env
    merged: dict[str, Any] = {}
    if config_file is None:
        config_file = env.get(ENV_PREFIX + "CONFIG")
    if config_file:
        merged.update(load_file(config_file))
    merged.update(from_env(env))
    for key, value in (flags or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown option {key!r}")
        merged[key] = _coerce(key, value, "flag")
    return PipelineConfig(**merged).validate()


def require_paths(config: PipelineConfig, *keys: str) -> None:
    for key in keys:
        if getattr(config, key) is None:
            raise ConfigError(f"missing required setting {key!r}")


def frame_paths(pattern: str) -> list[Path]:
    """Files matching ``pattern``, sorted lexicographically (temporal order)."""
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise ConfigError(f"no frames match {pattern!r}")
    return [Path(p) for p in paths]
