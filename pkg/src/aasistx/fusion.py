"""Branch fusion (element-wise max or learnable MHA), readout and the linear classifier."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .attention import AttentionConfig, MHABlock
from .frontend import ConfigError
from .nodes import Modality, NodeSet

STRATEGIES = ("max", "attention")


@dataclass
class FusionConfig:
    strategy: str = "attention"
    num_heads: int = 4
    ffn: bool = True
    # feed the stack node to the readout when the back-end has one
    use_stack: bool = True

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown fusion strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.strategy == "attention" and self.num_heads < 1:
            raise ConfigError("attention fusion needs num_heads >= 1")


def max_fusion(a: NodeSet, b: NodeSet) -> NodeSet:
    if a.nodes.shape != b.nodes.shape:
        raise ValueError(f"max fusion needs equal shapes, got {tuple(a.nodes.shape)} and {tuple(b.nodes.shape)}")
    return NodeSet(torch.maximum(a.nodes, b.nodes), Modality.MIXED)


class AttentionFusion(nn.Module):
    """Self-attention over the spectral and temporal nodes concatenated along the node axis."""

    def __init__(self, d: int, cfg: FusionConfig | None = None, dropout: float = 0.1):
        super().__init__()
        cfg = cfg or FusionConfig()
        self.block = MHABlock(d, AttentionConfig(num_heads=cfg.num_heads, dropout=dropout), ffn=cfg.ffn)

    def forward(self, spectral: NodeSet, temporal: NodeSet, return_attention: bool = False):
        if spectral.dim != temporal.dim:
            raise ValueError(f"fusion inputs differ in width: {spectral.dim} vs {temporal.dim}")
        joint = NodeSet(torch.cat([spectral.nodes, temporal.nodes], dim=1), Modality.MIXED)
        return self.block(joint, return_attention=return_attention)


def readout(fused: NodeSet, stack: torch.Tensor | None = None) -> torch.Tensor:
    """Node-wise max and mean over the fused set, plus the stack node if given: ``(B, 2d[+d])``."""
    h = fused.nodes
    parts = [h.max(dim=1).values, h.mean(dim=1)]
    if stack is not None:
        parts.append(stack.reshape(h.shape[0], -1))
    return torch.cat(parts, dim=-1)


class Classifier(nn.Module):
    def __init__(self, in_dim: int):
        super().__init__()
        self.linear = nn.Linear(in_dim, 2)

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        return self.linear(u)


def bonafide_score(logits: torch.Tensor) -> torch.Tensor:
    """Higher means more bonafide: ``logit(bonafide) - logit(spoof)``."""
    return logits[..., 0] - logits[..., 1]
