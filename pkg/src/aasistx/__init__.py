"""Spoofed-speech countermeasure: SSL-style front-end, ResNet, spectro-temporal graph attention."""

from .config import PRESETS, TrainConfig, apply_preset, load_config
from .data import Label, LabeledExample, Manifest, Waveform, load_manifest, load_waveform
from .loss import FocalParams, LossScheduleState, cross_entropy, focal_loss, hybrid_loss, update_schedule
from .metrics import ScoreRecord, ScoreSet, compute_eer, format_eer
from .model import CountermeasureModel, ModelConfig
from .trainer import Checkpoint, evaluate, run_ablation, seed_all, train

__version__ = "0.1.0"

__all__ = [
    "PRESETS", "TrainConfig", "apply_preset", "load_config", "Label", "LabeledExample", "Manifest",
    "Waveform", "load_manifest", "load_waveform", "FocalParams", "LossScheduleState", "cross_entropy",
    "focal_loss", "hybrid_loss", "update_schedule", "ScoreRecord", "ScoreSet", "compute_eer", "format_eer",
    "CountermeasureModel", "ModelConfig", "Checkpoint", "evaluate", "run_ablation", "seed_all", "train",
]
