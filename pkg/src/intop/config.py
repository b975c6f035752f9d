"""Strict JSON configuration covering every module.

Unknown keys anywhere are rejected: on a hundred-spectrum dataset a silently
ignored hyperparameter is worse than a crash.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .baselines.genetic import GAConfig
from .baselines.neural import CNNConfig, FFNNConfig
from .operator import OperatorConfig
from .quadrature import MCConfig
from .training import TrainConfig

ROSTER = ("IO", "DT", "SVM", "FFNN", "CNN+FFNN")


class ConfigError(ValueError):
    pass


@dataclass
class TreeSettings:
    criterion: str = "gini"


@dataclass
class MetricSettings:
    average: str = "macro"

    def __post_init__(self):
        if self.average not in ("macro", "weighted"):
            raise ConfigError(f"metrics.average must be 'macro' or 'weighted', got {self.average!r}")


@dataclass
class BenchSettings:
    runs: int = 10
    roster: list = field(default_factory=lambda: list(ROSTER))
    jobs: int = 1

    def __post_init__(self):
        unknown = [m for m in self.roster if m not in ROSTER]
        if unknown or not self.roster:
            raise ConfigError(f"roster entries must be drawn from {ROSTER}, got {self.roster}")
        if self.runs < 1 or self.jobs < 1:
            raise ConfigError("runs and jobs must be positive")


def _io_train():
    return TrainConfig(batch_size=8, lr=3e-3)


def _io_operator():
    return OperatorConfig(latent_scale=16.0, coordinate_scale=20.0)


@dataclass
class Config:
    seed: int = 0
    operator: OperatorConfig = field(default_factory=_io_operator)
    mc: MCConfig = field(default_factory=MCConfig)
    train: TrainConfig = field(default_factory=_io_train)
    baseline_train: TrainConfig = field(default_factory=TrainConfig)
    ffnn: FFNNConfig = field(default_factory=FFNNConfig)
    cnn: CNNConfig = field(default_factory=CNNConfig)
    ga: GAConfig = field(default_factory=GAConfig)
    tree: TreeSettings = field(default_factory=TreeSettings)
    metrics: MetricSettings = field(default_factory=MetricSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            merged = {**to_dict(default), **value} if isinstance(value, dict) else value
            kwargs[name] = _build(type(default), merged, f"{path}{name}.")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path or 'config'}: {e}") from None


def from_dict(data) -> Config:
    return _build(Config, data, "")


def to_dict(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def load_config(path) -> Config:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return from_dict(data)


def fingerprint(*parts) -> str:
    """SHA-256 over the canonical JSON of ``parts`` (bytes are hashed first)."""
    canon = []
    for p in parts:
        if isinstance(p, bytes):
            canon.append(hashlib.sha256(p).hexdigest())
        elif dataclasses.is_dataclass(p):
            canon.append(to_dict(p))
        else:
            canon.append(p)
    return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()
