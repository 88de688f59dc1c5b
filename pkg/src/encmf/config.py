"""Experiment configuration and its YAML file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .ann import TrainConfig
from .errors import ConfigError, DomainError
from .models import DEFAULT_DT, make_model, n_steps

FILTERS = ("enkf", "genkf", "mlencmf")
DEMO_FILTER = "cmf-oracle-1d"
PRESET_DIR = Path(__file__).parent / "presets"


@dataclass
class ExperimentConfig:
    model: str = "lorenz63"
    model_params: dict = field(default_factory=dict)
    filter: str = "mlencmf"
    n_ens: int = 200
    dt: float = DEFAULT_DT
    dt_obs: float = 0.5
    steps: int = 500
    seed: int = 0
    burn_in: bool = False
    force_a: str = "auto"
    out_dir: Optional[str] = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if isinstance(self.train, dict):
            try:
                self.train = TrainConfig(**self.train)
            except (TypeError, DomainError) as exc:
                raise ConfigError(f"invalid train section: {exc}") from exc
        self.force_a = str(self.force_a)
        self.validate()

    @property
    def m_aug(self) -> int:
        return self.train.M

    def validate(self) -> None:
        if self.filter == DEMO_FILTER:
            raise ConfigError(f"filter {DEMO_FILTER!r} is only available through demo1d")
        if self.filter not in FILTERS:
            raise ConfigError(f"unknown filter {self.filter!r}; expected one of {FILTERS}")
        try:
            make_model(self.model, **self.model_params)
        except TypeError as exc:
            raise ConfigError(f"bad model_params: {exc}") from exc
        n_steps(self.dt_obs, self.dt)
        if self.n_ens < 2:
            raise ConfigError("n_ens must be >= 2")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.force_a not in ("auto", "0", "1"):
            raise ConfigError(f"force_a must be auto, 0 or 1, got {self.force_a!r}")

    def replace(self, **changes) -> "ExperimentConfig":
        train_changes = {k[6:]: changes.pop(k) for k in list(changes) if k.startswith("train.")}
        try:
            train = dataclasses.replace(self.train, **train_changes) if train_changes else self.train
            return dataclasses.replace(self, train=train, **changes)
        except (TypeError, DomainError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        return cls.from_dict(_read_yaml(path))

    def to_yaml(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


@dataclass
class Demo1DConfig:
    """Static 1-D problem: prior N(0, 2^2), piecewise observation map, noise N(0, 0.5^2)."""

    n_ens: int = 10_000
    n_prior: int = 10_000
    n_resample: int = 10_000
    q_true: tuple = (-2.0, 0.0, 2.0)
    prior_std: float = 2.0
    noise_std: float = 0.5
    y_grid: tuple = (-6.0, 12.0, 181)
    q_bins: tuple = (-5.0, 5.0, 101)
    seed: int = 0
    out_dir: Optional[str] = None

    def __post_init__(self):
        self.q_true = tuple(float(q) for q in self.q_true)
        self.y_grid = tuple(self.y_grid)
        self.q_bins = tuple(self.q_bins)
        if self.n_ens < 2 or self.n_prior < 1 or self.n_resample < 1:
            raise ConfigError("ensemble and sample sizes must be positive (n_ens >= 2)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("q_true", "y_grid", "q_bins"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Demo1DConfig":
        d = dict(d)
        d.pop("filter", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown demo1d config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path) -> "Demo1DConfig":
        return cls.from_dict(_read_yaml(path))


def _read_yaml(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def preset_path(name: str) -> Path:
    p = PRESET_DIR / (name if name.endswith(".yaml") else name + ".yaml")
    if not p.exists():
        raise ConfigError(f"no preset named {name!r}")
    return p


def load_preset(name: str) -> ExperimentConfig:
    return ExperimentConfig.from_yaml(preset_path(name))
