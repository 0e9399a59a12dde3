"""Run configurations: flat YAML files mapped onto dataclasses."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class GenerateGasConfig:
    seed: int = 0
    n_samples: int = 10_000
    h: float = 0.01
    substeps: int = 10
    noise: float = 0.2
    chunk_length: int = 250
    train_fraction: float = 0.8
    forcing_amplitude: float = 2.0
    forcing_frequency: float = 0.2
    T0: float = 290.0


@dataclass
class GenerateBuildingConfig:
    seed: int = 0
    n_zones: int = 3
    edges: list | None = None
    n_samples: int = 28_900
    h: float = 900.0
    substeps: int = 10
    noise: float = 0.2
    chunk_length: int = 289
    train_fraction: float = 0.8
    T0: float = 293.0
    heat_power: float = 30.0
    cool_power: float = 25.0
    solar_peak: float = 40.0


@dataclass
class TrainRunConfig:
    data: str = ""
    model: str = "building"  # building | gas | vanilla
    seed: int = 0
    chunk_length: int | None = None
    epochs: int = 200
    learning_rate: float | None = None
    batch_size: int = 8
    l1_weight: float = 0.0
    gradient_clip: float | None = None
    loss_space: str | None = None
    edges: list | None = None
    n_hidden: int = 16
    gamma_scale: float = 10.0
    hidden: list = dataclasses.field(default_factory=lambda: [32, 32])
    use_inputs: bool | None = None


@dataclass
class ArxRunConfig:
    data: str = ""
    seed: int = 0
    chunk_length: int | None = None
    lags: int = 12


@dataclass
class EvaluateConfig:
    data: str = ""
    checkpoint: str = ""
    baseline: str | None = None
    reference_metrics: str | None = None
    seed: int = 0
    chunk_length: int | None = None
    split: str = "val"


@dataclass
class CheckPhysicsConfig:
    data: str = ""
    checkpoint: str = ""
    seed: int = 0
    chunk_length: int | None = None
    split: str = "val"
    probes: int = 200
    entropy_index: int | None = None


COMMAND_CONFIGS = {
    "generate-gas": GenerateGasConfig,
    "generate-building": GenerateBuildingConfig,
    "train": TrainRunConfig,
    "baseline-node": TrainRunConfig,
    "baseline-arx": ArxRunConfig,
    "evaluate": EvaluateConfig,
    "check-physics": CheckPhysicsConfig,
}


def _coerce(name: str, value, default):
    """Light type check: ints may stand in for floats, None is allowed for optional keys."""
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{name}: expected a list, got {value!r}")
    return value


def read_config_file(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: {err}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of keys to values")
    for k, v in data.items():
        if isinstance(v, dict):
            raise ConfigError(f"{path}: key {k!r} is nested; configs are flat")
    return data


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError:
        raise ConfigError(f"cannot parse value of override {text!r}") from None


def build_config(cls, values: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    defaults = cls()
    kwargs = {k: _coerce(k, v, getattr(defaults, k)) for k, v in values.items()}
    return cls(**kwargs)


def load_config(command: str, path=None, overrides: dict | None = None):
    cls = COMMAND_CONFIGS[command]
    values = read_config_file(path) if path else {}
    values.update(overrides or {})
    return build_config(cls, values)


def dump_config(cfg, path) -> Path:
    """Resolved-config echo written into every run directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(dataclasses.asdict(cfg), sort_keys=True))
    return path
