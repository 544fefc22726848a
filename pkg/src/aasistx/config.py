"""Training configuration, ablation presets, and JSON/CLI-override loading."""

from __future__ import annotations

import copy
import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .augment.rawboost import RawBoostParams
from .augment.schedule import AugmentationSchedule
from .frontend import ConfigError
from .model import ModelConfig

PRESETS = ("baseline", "trainable_frontend", "frozen_frontend", "mha", "fusion", "full")


@dataclass
class AugmentationConfig:
    enabled: bool = False
    schedule: AugmentationSchedule = field(default_factory=AugmentationSchedule)
    codec_prob: float = 0.4
    codec_backend: str = "simulated"
    rawboost: bool = True
    rawboost_variants: list[int] = field(default_factory=lambda: list(range(1, 9)))
    rawboost_params: RawBoostParams = field(default_factory=RawBoostParams)


@dataclass
class LossConfig:
    gamma: float = 2.0
    alpha: float | None = 0.25
    trigger_threshold: float = 0.08
    ramp_epochs: int = 5


@dataclass
class DataConfig:
    train_manifest: str | None = None
    val_manifest: str | None = None
    out_dir: str = "runs/default"


@dataclass
class TrainConfig:
    preset: str = "full"
    batch_size: int = 48
    epochs: int = 20
    lr: float = 1e-4
    cosine_t_max: int = 300
    cosine_restart: bool = True
    warmup_no_val_epochs: int = 2
    seed: int = 0
    crop_seconds: float = 4.0
    dtype: str = "float32"
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.cosine_t_max < 1:
            raise ConfigError("cosine_t_max must be >= 1")
        if self.crop_seconds <= 0:
            raise ConfigError("crop_seconds must be > 0")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        bad = [v for v in self.augmentation.rawboost_variants if v not in range(1, 9)]
        if bad or (self.augmentation.rawboost and not self.augmentation.rawboost_variants):
            raise ConfigError(f"rawboost_variants must be a non-empty subset of 1..8, got {self.augmentation.rawboost_variants}")
        self.model.validate()


def apply_preset(cfg: TrainConfig, preset: str | None = None) -> TrainConfig:
    """Return a copy of ``cfg`` with the architecture switches of an ablation preset."""
    cfg = copy.deepcopy(cfg)
    preset = preset or cfg.preset
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")
    cfg.preset = preset
    fe, m = cfg.model.frontend, cfg.model
    if preset == "baseline":
        # no self-supervised pre-training: encoder trained from scratch
        fe.frozen, fe.pretrained = False, False
    elif preset == "trainable_frontend":
        fe.frozen, fe.pretrained = False, True
    else:
        fe.frozen, fe.pretrained = True, True
    m.attention.formalism = "pairwise_gat" if preset in ("baseline", "trainable_frontend", "frozen_frontend") else "mha"
    m.fusion.strategy = "attention" if preset in ("fusion", "full") else "max"
    cfg.augmentation.enabled = preset == "full"
    return cfg


def _build(tp, value):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"expected an object for {tp.__name__}, got {value!r}")
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp)}
        unknown = set(value) - names
        if unknown:
            raise ConfigError(f"unknown keys for {tp.__name__}: {sorted(unknown)}")
        return tp(**{k: _build(hints[k], v) for k, v in value.items()})
    if origin is tuple and isinstance(value, list):
        return tuple(value)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return None if value is None else _build(args[0], value)
    if tp is float and isinstance(value, int):
        return float(value)
    return value


def from_dict(data: dict) -> TrainConfig:
    return _build(TrainConfig, data)


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides to a raw config dict; values parse as JSON when possible."""
    data = copy.deepcopy(data)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like key.path=value")
        node = data
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} passes through a non-object")
        node[leaf] = _coerce(raw)
    return data


def load_config(path=None, overrides: list[str] | None = None) -> TrainConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from exc
    base = to_dict(TrainConfig())
    merged = _deep_merge(base, apply_overrides(data, overrides or []))
    return from_dict(merged)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out
