"""Epoch loop, evaluation, checkpoints, and the ablation runner."""

from __future__ import annotations

import contextlib
import copy
import csv
import hashlib
import logging
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .augment.codec import apply_codec_corruption, make_backend
from .augment.effects import apply_effect_chain
from .augment.rawboost import rawboost
from .augment.schedule import AugmentationState, schedule_at
from .config import PRESETS, TrainConfig, apply_preset, from_dict, to_dict
from .data import SAMPLE_RATE, LabeledExample, Manifest, load_examples, load_manifest
from .frontend import ConfigError
from .fusion import bonafide_score
from .loss import FocalParams, LossScheduleState, hybrid_loss, update_schedule
from .metrics import ScoreRecord, ScoreSet, compute_eer, format_eer
from .model import CountermeasureModel

log = logging.getLogger(__name__)

METRICS_FIELDS = ("epoch", "train_loss", "val_eer", "lr", "p", "kappa", "lambda")


class TrainingDiverged(RuntimeError):
    pass


def derive_seed(*parts) -> int:
    """Process-independent 63-bit seed from arbitrary parts (unlike the salted builtin hash)."""
    digest = hashlib.sha256("/".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def utterance_seed(seed: int, utt_id: str, epoch: int) -> int:
    return derive_seed(seed, utt_id, epoch)


def seed_all(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    torch.manual_seed(seed)


def cosine_lr(step: int, base_lr: float, t_max: int, restart: bool = True) -> float:
    if restart:
        t = step % t_max
    else:
        t = min(step, t_max)
    return 0.5 * (1.0 + math.cos(math.pi * t / t_max)) * base_lr


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_eer: float | None
    lr: float
    p: float
    kappa: float
    blend_lambda: float

    def row(self) -> dict:
        return {
            "epoch": self.epoch, "train_loss": self.train_loss,
            "val_eer": "" if self.val_eer is None else self.val_eer,
            "lr": self.lr, "p": self.p, "kappa": self.kappa, "lambda": self.blend_lambda,
        }


@dataclass
class Checkpoint:
    model_state: dict
    config: dict
    optimizer_state: dict | None = None
    loss_state: dict = field(default_factory=dict)
    seed: int = 0
    epoch: int = 0  # completed epochs
    step: int = 0
    best_val_eer: float | None = None
    history: list = field(default_factory=list)
    best_model_state: dict | None = None

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        torch.save(asdict(self), path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls(**torch.load(path, map_location="cpu", weights_only=False))

    def train_config(self) -> TrainConfig:
        return from_dict(self.config)


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    history: list[EpochRecord]
    validations: int = 0

    @property
    def losses(self) -> list[float]:
        return [r.train_loss for r in self.history]


def _examples(source) -> list[LabeledExample]:
    if source is None:
        return []
    if isinstance(source, (str, Path)):
        source = load_manifest(source)
    if isinstance(source, Manifest):
        missing = source.unresolved()
        if missing:
            raise ConfigError(f"{len(missing)} manifest entries point to missing files, e.g. {missing[0].path}")
        return load_examples(source)
    return list(source)


def crop(x: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``n``-sample window; shorter inputs are tiled first."""
    if x.size < n:
        x = np.tile(x, n // x.size + 1)
    start = int(rng.integers(0, x.size - n + 1))
    return x[start:start + n]


class Augmenter:
    """Per-utterance training transform: crop, RawBoost, codec menu, effect chain."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.aug = cfg.augmentation
        self.crop_samples = int(round(cfg.crop_seconds * SAMPLE_RATE))
        self.backend = make_backend(self.aug.codec_backend) if self.aug.enabled else None

    def __call__(self, ex: LabeledExample, epoch: int) -> np.ndarray:
        rng = np.random.default_rng(utterance_seed(self.cfg.seed, ex.waveform.id, epoch))
        w = ex.waveform.replace(crop(ex.waveform.samples, self.crop_samples, rng))
        if not self.aug.enabled:
            return w.samples
        if self.aug.rawboost:
            variant = int(rng.choice(self.aug.rawboost_variants))
            params = replace(self.aug.rawboost_params, variant=variant)
            w = rawboost(w, params, rng)
        state = AugmentationState.at_epoch(self.aug.schedule, epoch, rng)
        w = apply_codec_corruption(w, state, backend=self.backend, prob=self.aug.codec_prob)
        w = apply_effect_chain(w, state)
        return w.samples


def score_examples(model: CountermeasureModel, examples: list[LabeledExample], batch_size: int = 16) -> ScoreSet:
    """Deterministic full-length scoring; equal-length utterances share a batch."""
    dtype = next(model.parameters()).dtype
    model.eval()
    scores: dict[int, float] = {}
    by_len: dict[int, list[int]] = {}
    for i, ex in enumerate(examples):
        by_len.setdefault(len(ex.waveform), []).append(i)
    with torch.no_grad():
        for idxs in by_len.values():
            for j in range(0, len(idxs), batch_size):
                chunk = idxs[j:j + batch_size]
                x = torch.from_numpy(np.stack([examples[i].waveform.samples for i in chunk])).to(dtype)
                for i, s in zip(chunk, bonafide_score(model(x)).tolist()):
                    scores[i] = s
    return ScoreSet([ScoreRecord(ex.waveform.id, scores[i], ex.label) for i, ex in enumerate(examples)])


def _preflight(cfg: TrainConfig, train_ex: list[LabeledExample]):
    cfg.validate()
    if not train_ex:
        raise ConfigError("training set is empty")
    frames = int(round(cfg.crop_seconds * SAMPLE_RATE)) // 320
    cfg.model.backbone.output_shape(cfg.model.adapter.out_dim, max(frames, 1))


def build_model(cfg: TrainConfig) -> CountermeasureModel:
    model = CountermeasureModel(cfg.model)
    return model.to(getattr(torch, cfg.dtype))


@contextlib.contextmanager
def default_dtype(dtype: torch.dtype):
    # optimizer scalar state (e.g. NAdam's momentum product) is created in the default dtype
    # but reloaded in the parameter dtype; matching them keeps resumed runs exact
    prev = torch.get_default_dtype()
    torch.set_default_dtype(dtype)
    try:
        yield
    finally:
        torch.set_default_dtype(prev)


def train(cfg: TrainConfig, train_manifest, val_manifest=None, *, resume: Checkpoint | None = None,
          out_dir=None) -> TrainResult:
    """Train ``cfg`` as given (presets are applied by the caller)."""
    with default_dtype(getattr(torch, cfg.dtype)):
        return _train(cfg, train_manifest, val_manifest, resume, out_dir)


def _train(cfg, train_manifest, val_manifest, resume, out_dir) -> TrainResult:
    train_ex, val_ex = _examples(train_manifest), _examples(val_manifest)
    _preflight(cfg, train_ex)
    dtype = getattr(torch, cfg.dtype)

    seed_all(cfg.seed)
    model = build_model(cfg)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.NAdam(params, lr=cfg.lr)
    loss_state = LossScheduleState(trigger_threshold=cfg.loss.trigger_threshold, ramp_epochs=cfg.loss.ramp_epochs)
    focal = FocalParams(cfg.loss.gamma, cfg.loss.alpha)
    augment = Augmenter(cfg)

    start, step, best_eer, best_state, history, n_val = 0, 0, None, None, [], 0
    if resume is not None:
        model.load_state_dict(resume.model_state)
        opt.load_state_dict(resume.optimizer_state)
        loss_state = LossScheduleState(**resume.loss_state)
        start, step, best_eer = resume.epoch, resume.step, resume.best_val_eer
        best_state = resume.best_model_state
        history = [EpochRecord(**r) for r in resume.history]

    labels_all = torch.tensor([ex.label.index for ex in train_ex])
    lr = cfg.lr
    for epoch in range(start, cfg.epochs):
        loss_state = update_schedule(loss_state, epoch, best_eer)
        p, kappa = schedule_at(cfg.augmentation.schedule, epoch)
        torch.manual_seed(derive_seed(cfg.seed, "torch", epoch))
        order = np.random.default_rng(derive_seed(cfg.seed, "order", epoch)).permutation(len(train_ex))

        model.train()
        total = 0.0
        for j in range(0, len(order), cfg.batch_size):
            idx = order[j:j + cfg.batch_size]
            x = torch.from_numpy(np.stack([augment(train_ex[i], epoch) for i in idx])).to(dtype)
            y = labels_all[idx]
            lr = cosine_lr(step, cfg.lr, cfg.cosine_t_max, cfg.cosine_restart)
            for group in opt.param_groups:
                group["lr"] = lr
            loss = hybrid_loss(model(x), y, loss_state, focal)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at step {step} (epoch {epoch})")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            step += 1
            total += loss.item() * len(idx)

        val_eer = None
        if epoch >= cfg.warmup_no_val_epochs and val_ex:
            val_eer, _ = compute_eer(score_examples(model, val_ex))
            n_val += 1
            if best_eer is None or val_eer < best_eer:
                best_eer = val_eer
                best_state = copy.deepcopy(model.state_dict())
        record = EpochRecord(epoch, total / len(train_ex), val_eer, lr, p, kappa, loss_state.blend_lambda)
        history.append(record)
        log.info("epoch %d loss %.5f val_eer %s lr %.3g", epoch, record.train_loss,
                 "-" if val_eer is None else format_eer(val_eer), lr)

    config = to_dict(cfg)
    hist = [asdict(r) for r in history]
    last_state = copy.deepcopy(model.state_dict())
    last = Checkpoint(last_state, config, copy.deepcopy(opt.state_dict()), loss_state.to_dict(), cfg.seed,
                      cfg.epochs, step, best_eer, hist, best_state)
    best = Checkpoint(best_state if best_state is not None else last_state, config, None, loss_state.to_dict(),
                      cfg.seed, cfg.epochs, step, best_eer, hist)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        best.save(out / "best.pt")
        last.save(out / "last.pt")
        write_metrics_log(history, out / "metrics.csv")
    return TrainResult(best, last, history, n_val)


def write_metrics_log(history: list[EpochRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        writer.writeheader()
        for r in history:
            writer.writerow(r.row())


def load_model(ckpt: Checkpoint, cfg: TrainConfig | None = None) -> CountermeasureModel:
    cfg = cfg or ckpt.train_config()
    model = build_model(cfg)
    expected = {k: tuple(v.shape) for k, v in model.state_dict().items()}
    found = {k: tuple(v.shape) for k, v in ckpt.model_state.items()}
    mismatched = sorted(k for k in expected.keys() | found.keys() if expected.get(k) != found.get(k))
    if mismatched:
        raise ConfigError(f"checkpoint does not match the model architecture; mismatched parameters: {mismatched}")
    model.load_state_dict(ckpt.model_state)
    return model


def evaluate(ckpt: Checkpoint, manifest, cfg: TrainConfig | None = None) -> ScoreSet:
    examples = _examples(manifest)
    model = load_model(ckpt, cfg)
    if not examples:
        return ScoreSet([])
    return score_examples(model, examples)


ROW_LABELS = {
    "baseline": "Baseline AASIST",
    "trainable_frontend": "Trainable Wav2Vec front-end",
    "frozen_frontend": "Frozen Wav2Vec front-end",
    "mha": "Multi-head self-attention in place of bespoke graph attention",
    "fusion": "Learnable soft fusion implemented with MHA",
    "full": "Full Proposed Modifications",
}

# (title, [(row label, preset)]) for the three grouped ablation tables
TABLES = [
    ("Front-end: trainable versus frozen", [
        ("Baseline AASIST", "baseline"),
        ("Trainable Wav2Vec front-end", "trainable_frontend"),
        ("Frozen Wav2Vec front-end", "frozen_frontend"),
        ("Full Proposed Modifications", "full"),
    ]),
    ("Attention formalism", [
        ("Baseline AASIST + Frozen Wav2Vec (bespoke graph attention)", "frozen_frontend"),
        ("Multi-head self-attention in place of bespoke graph attention", "mha"),
        ("Full Proposed Modifications", "full"),
    ]),
    ("Fusion strategy", [
        ("Baseline AASIST + Frozen Wav2Vec + MHA (heuristic torch.max fusion)", "mha"),
        ("Learnable soft fusion implemented with MHA", "fusion"),
        ("Full Proposed Modifications", "full"),
    ]),
]


@dataclass
class AblationRow:
    preset: str
    label: str
    eer: float | None = None
    error: str | None = None

    @property
    def eer_text(self) -> str:
        if self.eer is None:
            return f"failed: {self.error}" if self.error else "n/a"
        return format_eer(self.eer)


@dataclass
class AblationReport:
    rows: list[AblationRow]

    def row(self, preset: str) -> AblationRow | None:
        return next((r for r in self.rows if r.preset == preset), None)

    def tables(self) -> list[tuple[str, list[tuple[str, AblationRow]]]]:
        """Paper-layout tables restricted to rows whose preset was executed."""
        out = []
        for title, entries in TABLES:
            rows = [(label, self.row(p)) for label, p in entries if self.row(p) is not None]
            if rows:
                out.append((title, rows))
        return out

    def render_text(self) -> str:
        width = max(len(r.label) for r in self.rows)
        lines = [f"{'Configuration':<{width}}  EER (%)", "-" * (width + 9)]
        lines += [f"{r.label:<{width}}  {r.eer_text}" for r in self.rows]
        for title, rows in self.tables():
            w = max(len(label) for label, _ in rows)
            lines += ["", title, f"{'Configuration':<{w}}  EER (%)", "-" * (w + 9)]
            lines += [f"{label:<{w}}  {r.eer_text}" for label, r in rows]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["preset,configuration,eer_percent,error"]
        for r in self.rows:
            eer = "" if r.eer is None else format_eer(r.eer)
            err = (r.error or "").replace(",", ";").replace("\n", " ")
            lines.append(f"{r.preset},\"{r.label}\",{eer},{err}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> tuple[Path, Path]:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        csv_path = path.with_suffix(".csv")
        path.write_text(self.render_text(), encoding="utf-8")
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        return path, csv_path


def run_ablation(presets: list[str], base_cfg: TrainConfig, train_manifest, dev_manifest,
                 out_dir=None) -> AblationReport:
    """Train and score each preset under the same seed and data; failures stay in their row."""
    if not presets:
        raise ConfigError("run_ablation needs at least one preset")
    train_ex, dev_ex = _examples(train_manifest), _examples(dev_manifest)
    rows = []
    for preset in presets:
        row = AblationRow(preset, ROW_LABELS.get(preset, preset))
        try:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}")
            cfg = apply_preset(base_cfg, preset)
            run_dir = None if out_dir is None else Path(out_dir) / preset
            result = train(cfg, train_ex, dev_ex, out_dir=run_dir)
            row.eer, _ = compute_eer(evaluate(result.best, dev_ex))
        except Exception as exc:  # recorded in the report, remaining presets still run
            log.exception("preset %s failed", preset)
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return AblationReport(rows)
