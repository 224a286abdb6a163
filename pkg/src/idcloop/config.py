"""Declarative run configuration shared by every CLI command.

One JSON document holds the pipeline, model, training, experiment, and
service settings. Unknown keys are rejected at every level, and a single
top-level seed drives every seeded stage so a run is reproducible from
the document alone.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from idcloop.classifier.model import ModelConfig
from idcloop.classifier.training import TrainingConfig
from idcloop.data.augment import AugmentConfig
from idcloop.errors import ConfigError

SPLIT_ORDERS = ("faithful", "leak_free")


def _check_keys(payload: dict, allowed: set[str], where: str) -> None:
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _section(cls, payload: Optional[dict], where: str):
    if payload is None:
        return cls()
    if not isinstance(payload, dict):
        raise ConfigError(f"{where} section must be an object")
    _check_keys(payload, {f.name for f in fields(cls)}, where)
    return cls(**payload)


@dataclass(frozen=True)
class DataSection:
    """Where the raw patches live and how many to balance per class."""

    root: Optional[str] = None
    n_per_class: int = 7000
    pad: bool = False

    def __post_init__(self) -> None:
        if self.n_per_class < 1:
            raise ConfigError("data.n_per_class must be positive")


@dataclass(frozen=True)
class SplitSection:
    train_ratio: float = 0.7
    order: str = "leak_free"
    keep_originals: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.train_ratio < 1.0:
            raise ConfigError("split.train_ratio must be in (0, 1)")
        if self.order not in SPLIT_ORDERS:
            raise ConfigError(f"split.order must be one of {SPLIT_ORDERS}")


@dataclass(frozen=True)
class ProtocolSection:
    groups: int = 4
    n_fp: int = 20
    n_fn: int = 20

    def __post_init__(self) -> None:
        if self.groups < 1:
            raise ConfigError("protocol.groups must be positive")
        if self.n_fp < 0 or self.n_fn < 0 or self.n_fp + self.n_fn < 1:
            raise ConfigError("protocol needs a positive sample count")


@dataclass(frozen=True)
class ServiceSection:
    host: str = "127.0.0.1"
    port: int = 8000
    min_corrections: int = 1
    duplication: int = 1
    cold_start: bool = False
    # Epochs for service-triggered retrains; None reuses training.epochs.
    retrain_epochs: Optional[int] = None
    static_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if not 0 < self.port < 65536:
            raise ConfigError("service.port must be a valid TCP port")
        if self.min_corrections < 1:
            raise ConfigError("service.min_corrections must be positive")
        if self.duplication < 1:
            raise ConfigError("service.duplication must be positive")
        if self.retrain_epochs is not None and self.retrain_epochs < 1:
            raise ConfigError("service.retrain_epochs must be positive")


_SEEDED_SECTIONS = ("augment", "training")


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs, with defaults matching the reference setup."""

    seed: int = 0
    data_dir: str = "runs"
    data: DataSection = field(default_factory=DataSection)
    split: SplitSection = field(default_factory=SplitSection)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    service: ServiceSection = field(default_factory=ServiceSection)

    def __post_init__(self) -> None:
        # The master seed is authoritative; aligned copies live in the
        # seeded sections so their digests stay self-describing.
        object.__setattr__(self, "augment", self.augment.with_seed(self.seed))
        object.__setattr__(
            self, "training", replace(self.training, seed=self.seed)
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "data_dir": self.data_dir,
            "data": dataclasses.asdict(self.data),
            "split": dataclasses.asdict(self.split),
            "augment": self.augment.to_dict(),
            "model": self.model.to_dict(),
            "training": self.training.to_dict(),
            "protocol": dataclasses.asdict(self.protocol),
            "service": dataclasses.asdict(self.service),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        if not isinstance(payload, dict):
            raise ConfigError("run config must be a JSON object")
        allowed = {f.name for f in fields(cls)}
        _check_keys(payload, allowed, "run config")
        seed = payload.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed must be an integer")
        for name in _SEEDED_SECTIONS:
            section = payload.get(name)
            if isinstance(section, dict) and section.get("seed", seed) != seed:
                raise ConfigError(
                    f"{name}.seed is driven by the top-level seed; remove it"
                )
        augment_payload = dict(payload.get("augment") or {})
        training_payload = dict(payload.get("training") or {})
        augment_payload["seed"] = seed
        training_payload["seed"] = seed
        try:
            return cls(
                seed=seed,
                data_dir=str(payload.get("data_dir", "runs")),
                data=_section(DataSection, payload.get("data"), "data"),
                split=_section(SplitSection, payload.get("split"), "split"),
                augment=AugmentConfig.from_dict(augment_payload),
                model=ModelConfig.from_dict(payload.get("model") or {}),
                training=TrainingConfig.from_dict(training_payload),
                protocol=_section(ProtocolSection, payload.get("protocol"), "protocol"),
                service=_section(ServiceSection, payload.get("service"), "service"),
            )
        except TypeError as exc:
            raise ConfigError(f"malformed run config: {exc}") from exc

def load_run_config(
    path: Optional[Path] = None,
    seed: Optional[int] = None,
    data_dir: Optional[str] = None,
) -> RunConfig:
    """Load a config file (or defaults) and apply flag overrides."""
    if path is None:
        payload: dict = {}
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as handle:
                payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if seed is not None:
        payload = {**payload, "seed": seed}
    if data_dir is not None:
        payload = {**payload, "data_dir": data_dir}
    return RunConfig.from_dict(payload)
