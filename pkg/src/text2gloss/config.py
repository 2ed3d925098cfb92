"""Declarative run configuration (YAML) tying the pipeline together."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .model import TransformerConfig


@dataclass
class DataConfig:
    train: str = "data/train.tsv"
    dev: str = "data/dev.tsv"
    test: str | None = None
    monolingual: str | None = None
    lexicon: str | None = None  # zh rules: token + d floats per line
    lemmas: str | None = None  # de rules: surface TAB lemma
    format: str = "tsv"  # tsv | jsonl
    output_dir: str = "runs/default"


@dataclass
class ScheduleConfig:
    iterations: int = 4
    pretrain_epochs: int = 15
    epoch_growth: int = 10


@dataclass
class ConsistencyConfig:
    weight: float = 20.0
    ramp_steps: int | None = None  # default: stage-one steps of iteration 1
    during_finetune: bool = True


@dataclass
class OptimConfig:
    learning_rate: float = 5e-5
    batch_size: int = 32
    patience: int = 5
    max_finetune_epochs: int = 200
    eval_beam_width: int = 1


@dataclass
class AugmentConfig:
    drop_prob: float = 0.1
    shuffle_window: int = 3


@dataclass
class DecodeConfig:
    beam_width: int = 3
    length_penalty: float = 1.0


@dataclass
class RunConfig:
    language: str = "de"  # de | zh rule set
    data: DataConfig = field(default_factory=DataConfig)
    model: TransformerConfig = field(default_factory=TransformerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    consistency: ConsistencyConfig = field(default_factory=ConsistencyConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    min_count: int = 1
    seed: int = 13
    synthetic_source: str = "both"  # both | rule | model
    mono_max_len: int | None = None  # default: model.max_len - 1 (tag included)

    def validate(self, require: tuple[str, ...] = ()) -> None:
        if self.language not in ("zh", "de"):
            raise ValueError(f"language must be 'zh' or 'de', got {self.language!r}")
        if self.synthetic_source not in ("both", "rule", "model"):
            raise ValueError(f"bad synthetic_source: {self.synthetic_source!r}")
        self.model.validate()
        for name in require:
            value = getattr(self.data, name)
            if value is None:
                raise ValueError(f"config is missing required path data.{name}")
            if not Path(value).exists():
                raise ValueError(f"data.{name} does not exist: {value}")


_SECTIONS = {
    "data": DataConfig,
    "model": TransformerConfig,
    "schedule": ScheduleConfig,
    "consistency": ConsistencyConfig,
    "optim": OptimConfig,
    "augment": AugmentConfig,
    "decode": DecodeConfig,
}


def _build(cls, mapping: dict, context: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ValueError(f"unknown {context} keys: {sorted(unknown)}")
    return cls(**mapping)


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw or {})
    kwargs = {}
    for key, cls in _SECTIONS.items():
        section = raw.pop(key, {})
        if not isinstance(section, dict):
            raise ValueError(f"config section {key!r} must be a mapping")
        kwargs[key] = _build(cls, section, key)
    cfg = _build(RunConfig, {**raw, **kwargs}, "top-level config")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a YAML mapping")
    return config_from_dict(raw)


def save_config(config: RunConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(dataclasses.asdict(config), fh, sort_keys=True)
