"""Experiment configuration: dataclasses, strict YAML loading, overrides, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .predictors import DegradationSchedule
from .scenarios import BUILTIN

SCHEMA_VERSION = 1
MODES = ("conservative", "balanced", "aggressive")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class PlannerSettings:
    rollouts: int = 200
    horizon: int = 50
    dt: float = 0.1
    inverse_temperature: float = 0.02
    momentum: float = 0.75
    accel_noise: float = 1.0
    noise_hold: int = 10


@dataclass(frozen=True)
class PredictorSettings:
    modalities: int = 6
    horizon: int = 50
    baseline_sigma: float = 0.05
    modality_spread: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "junction"
    mode: str = "balanced"
    noise: float = 1.0
    trustmhe: bool = True
    t_est: int = 5
    beta_est: float = 0.25
    alpha: float = 1.0
    divide_by_modalities: bool = True
    seed: int = 0
    state_dt: float = 0.005
    replan_interval: float = 0.1
    prediction_interval: float = 0.25
    duration: float | None = None
    planner: PlannerSettings = field(default_factory=PlannerSettings)
    predictor: PredictorSettings = field(default_factory=PredictorSettings)
    degradation: DegradationSchedule | None = None

    def __post_init__(self):
        if self.scenario not in BUILTIN:
            raise ConfigError("scenario", f"must be one of {sorted(BUILTIN)}, got {self.scenario!r}")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.t_est < 1:
            raise ConfigError("t_est", f"must be >= 1, got {self.t_est}")
        if not 0.0 <= self.beta_est < 1.0:
            raise ConfigError("beta_est", f"must lie in [0, 1), got {self.beta_est}")
        if not self.noise > 0:
            raise ConfigError("noise", f"must be positive, got {self.noise}")
        if self.alpha <= 0:
            raise ConfigError("alpha", "must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.state_dt <= 0:
            raise ConfigError("state_dt", "must be positive")
        for name in ("replan_interval", "prediction_interval"):
            ratio = getattr(self, name) / self.state_dt
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError(name, "must be an integer multiple of state_dt")
        if self.duration is not None and self.duration <= 0:
            raise ConfigError("duration", "must be positive")

    @property
    def replan_ticks(self) -> int:
        return int(round(self.replan_interval / self.state_dt))

    @property
    def prediction_ticks(self) -> int:
        return int(round(self.prediction_interval / self.state_dt))

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data, path: str = ""):
    """Build dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown key")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            sub = f"{path}.{f.name}" if path else f.name
            kwargs[f.name] = _convert(hints[f.name], data[f.name], sub)
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if path:
            raise ConfigError(f"{path}.{exc.path}", str(exc).split(": ", 1)[-1]) from None
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as YAML scalars."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            if node.get(p) is None:
                node[p] = {}
            node = node[p]
            if not isinstance(node, dict):
                raise ConfigError(key, "cannot descend into a scalar")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load_config(path: str | Path | None = None, overrides: list[str] | None = None,
                seed: int | None = None) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigError("", "config file must hold a mapping")
        version = raw.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {version}")
        data = raw
    data = apply_overrides(data, overrides or [])
    if seed is not None:
        data["seed"] = seed
    return from_dict(ExperimentConfig, data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump({"schema_version": SCHEMA_VERSION, **cfg.to_dict()}, sort_keys=True)
