"""
Experiment configuration.

A config is one JSON document:

    {
      "schema_version": 1,
      "data":  {"manifest": "data/office.json"}            # or
               {"synthetic": {"num_tasks": 4, "feature_dim": 20, ...}},
      "split": {"train_fraction": 0.1, "stratified": false, "seed": 0},
      "model": {"variant": "drn", "bottleneck_width": 32, "trunk_widths": [], "init_scale": 0.01},
      "train": {"learning_rate": 0.01, "momentum": 0.9, ...}
    }

Unknown keys anywhere are errors. Every section but `data` may be omitted.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional

from drn.errors import ConfigError

SCHEMA_VERSION = 1
VARIANTS = ("drn", "drn8", "stl", "mtl")
LR_SCHEDULES = ("constant", "inverse")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30
    epsilon_ridge: float = 1e-3
    prior_weight: float = 1.0
    shared_task_sigma: bool = False
    new_layer_lr_multiplier: float = 10.0
    lr_schedule: str = "constant"
    lr_gamma: float = 1e-3
    lr_power: float = 0.75
    seed: int = 0

    def __post_init__(self):
        positive = ("learning_rate", "epsilon_ridge", "new_layer_lr_multiplier", "lr_gamma", "lr_power")
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"train.{name} must be a positive number, got {value!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"train.momentum must lie in [0, 1), got {self.momentum!r}")
        if not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            raise ConfigError(f"train.batch_size must be a positive integer, got {self.batch_size!r}")
        if not (isinstance(self.epochs, int) and self.epochs >= 0):
            raise ConfigError(f"train.epochs must be a non-negative integer, got {self.epochs!r}")
        if not (isinstance(self.prior_weight, (int, float)) and self.prior_weight >= 0):
            raise ConfigError(f"train.prior_weight must be non-negative, got {self.prior_weight!r}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"train.lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"train.seed must be an integer, got {self.seed!r}")

    def learning_rate_at(self, iteration: int) -> float:
        if self.lr_schedule == "inverse":
            return self.learning_rate * (1.0 + self.lr_gamma * iteration) ** (-self.lr_power)
        return self.learning_rate


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "drn"
    bottleneck_width: int = 32
    trunk_widths: List[int] = field(default_factory=list)
    init_scale: float = 0.01
    shared_init: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"model.variant must be one of {VARIANTS}, got {self.variant!r}")
        widths = [self.bottleneck_width, *self.trunk_widths]
        if not all(isinstance(w, int) and w >= 1 for w in widths):
            raise ConfigError("model widths must be positive integers")
        if not self.init_scale > 0:
            raise ConfigError(f"model.init_scale must be positive, got {self.init_scale!r}")
        if not isinstance(self.shared_init, bool):
            raise ConfigError(f"model.shared_init must be true or false, got {self.shared_init!r}")

    @property
    def uses_prior(self) -> bool:
        return self.variant in ("drn", "drn8")

    def layer_widths(self):
        """(trunk widths, task-specific hidden widths) for this variant."""
        if self.variant in ("drn8", "mtl"):
            return [*self.trunk_widths, self.bottleneck_width], []
        if self.variant == "stl":
            return [], [*self.trunk_widths, self.bottleneck_width]
        return list(self.trunk_widths), [self.bottleneck_width]


@dataclass(frozen=True)
class SyntheticConfig:
    num_tasks: int = 4
    feature_dim: int = 20
    num_classes: int = 3
    samples_per_task: int = 530
    task_covariance: Optional[List[List[float]]] = None
    noise_scale: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: Optional[float] = None
    train_size: Optional[int] = None
    stratified: bool = False
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    train: TrainConfig
    split: SplitConfig
    manifest: Optional[str] = None
    synthetic: Optional[SyntheticConfig] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {"manifest": self.manifest} if self.manifest else {"synthetic": asdict(self.synthetic)}
        return {
            "schema_version": SCHEMA_VERSION,
            "data": data,
            "split": asdict(self.split),
            "model": asdict(self.model),
            "train": asdict(self.train),
        }


def _build(cls, section: str, values: Any):
    if values is None:
        values = {}
    if not isinstance(values, Mapping):
        raise ConfigError(f"{section} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {', '.join(unknown)}")
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"{section}: {e}") from e


def parse_experiment(document: Any) -> ExperimentConfig:
    if not isinstance(document, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(document) - {"schema_version", "data", "split", "model", "train"})
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")

    data = document.get("data")
    if not isinstance(data, Mapping) or len(data) != 1 or next(iter(data)) not in ("manifest", "synthetic"):
        raise ConfigError("data must hold exactly one of 'manifest' or 'synthetic'")
    manifest = data.get("manifest")
    if "manifest" in data and not isinstance(manifest, str):
        raise ConfigError("data.manifest must be a path string")
    synthetic = _build(SyntheticConfig, "data.synthetic", data["synthetic"]) if "synthetic" in data else None

    split = _build(SplitConfig, "split", document.get("split"))
    if (split.train_fraction is None) == (split.train_size is None):
        if split.train_fraction is None:
            split = SplitConfig(train_fraction=0.1, stratified=split.stratified, seed=split.seed)
        else:
            raise ConfigError("split takes either train_fraction or train_size, not both")

    return ExperimentConfig(
        model=_build(ModelConfig, "model", document.get("model")),
        train=_build(TrainConfig, "train", document.get("train")),
        split=split,
        manifest=manifest,
        synthetic=synthetic,
    )


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Re-seed training, the split and the synthetic generator together."""
    document = config.to_dict()
    document["train"]["seed"] = seed
    document["split"]["seed"] = seed
    if "synthetic" in document["data"]:
        document["data"]["synthetic"]["seed"] = seed
    return parse_experiment(document)
