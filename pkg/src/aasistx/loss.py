"""Cross-entropy, focal loss, and the EER-triggered hybrid blend between them."""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class FocalParams:
    gamma: float = 2.0
    # weight of the bonafide class (index 0); spoof gets 1 - alpha. None disables weighting.
    alpha: float | None = 0.25

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("focal gamma must be >= 0")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ValueError("focal alpha must be in [0, 1]")


@dataclass(frozen=True)
class LossScheduleState:
    triggered: bool = False
    trigger_epoch: int | None = None
    blend_lambda: float = 0.0
    trigger_threshold: float = 0.08
    ramp_epochs: int = 5

    def to_dict(self) -> dict:
        return {
            "triggered": self.triggered,
            "trigger_epoch": self.trigger_epoch,
            "blend_lambda": self.blend_lambda,
            "trigger_threshold": self.trigger_threshold,
            "ramp_epochs": self.ramp_epochs,
        }


def _true_class_log_prob(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return F.log_softmax(logits, dim=-1).gather(-1, labels.long().unsqueeze(-1)).squeeze(-1)


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return -_true_class_log_prob(logits, labels).mean()


def focal_loss(logits: torch.Tensor, labels: torch.Tensor, fp: FocalParams = FocalParams()) -> torch.Tensor:
    logp = _true_class_log_prob(logits, labels)
    modulating = (1.0 - logp.exp()) ** fp.gamma if fp.gamma else torch.ones_like(logp)
    loss = -modulating * logp
    if fp.alpha is not None:
        alpha_t = torch.where(labels == 0, fp.alpha, 1.0 - fp.alpha).to(loss.dtype)
        loss = alpha_t * loss
    return loss.mean()


def hybrid_loss(logits: torch.Tensor, labels: torch.Tensor, state: LossScheduleState,
                fp: FocalParams = FocalParams()) -> torch.Tensor:
    lam = state.blend_lambda
    if lam == 0.0:
        return cross_entropy(logits, labels)
    if lam == 1.0:
        return focal_loss(logits, labels, fp)
    return (1.0 - lam) * cross_entropy(logits, labels) + lam * focal_loss(logits, labels, fp)


def update_schedule(state: LossScheduleState, epoch: int, best_val_eer: float | None) -> LossScheduleState:
    """Latch the trigger once the best EER drops below threshold, then ramp lambda per epoch."""
    if not state.triggered and best_val_eer is not None and best_val_eer < state.trigger_threshold:
        state = replace(state, triggered=True, trigger_epoch=epoch)
    if not state.triggered:
        return replace(state, blend_lambda=0.0)
    lam = min(max(epoch - state.trigger_epoch, 0) / state.ramp_epochs, 1.0)
    return replace(state, blend_lambda=lam)
