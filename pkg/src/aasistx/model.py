"""End-to-end countermeasure: encoder -> adapter -> ResNet -> graph attention -> fusion -> classifier."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .attention import AttentionConfig, GraphPool, make_branch_attention, make_hetero_attention, mixed
from .backbone import Backbone, BackboneConfig
from .frontend import Adapter, AdapterConfig, EncoderConfig, build_encoder, encode
from .fusion import AttentionFusion, Classifier, FusionConfig, max_fusion, readout
from .nodes import Modality, NodeSet

# parameters that may train while the encoder is frozen
TRAINABLE_PREFIXES = ("adapter.", "backbone.", "attention.", "fusion.", "classifier.")


@dataclass
class ModelConfig:
    frontend: EncoderConfig = field(default_factory=EncoderConfig)
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    branch_pool: float = 0.5
    hetero_pool: float = 0.5

    def validate(self):
        self.frontend.validate()
        self.backbone.validate()
        self.attention.validate(self.backbone.node_dim)
        self.fusion.validate()
        if self.fusion.strategy == "attention":
            AttentionConfig(num_heads=self.fusion.num_heads).validate(self.backbone.node_dim)

    @property
    def has_stack(self) -> bool:
        return self.attention.formalism == "pairwise_gat" or self.attention.stack_node


class HeteroBranch(nn.Module):
    """Cross-modal attention, pooling, cross-modal attention."""

    def __init__(self, d: int, cfg: ModelConfig):
        super().__init__()
        self.residual = cfg.attention.formalism == "pairwise_gat"
        self.hetero1 = make_hetero_attention(d, cfg.attention)
        self.pool_temporal = GraphPool(d, cfg.hetero_pool)
        self.pool_spectral = GraphPool(d, cfg.hetero_pool)
        self.hetero2 = make_hetero_attention(d, cfg.attention)

    def forward(self, temporal: NodeSet, spectral: NodeSet, stack):
        t, s, m = self.hetero1(temporal, spectral, stack)
        t, s = self.pool_temporal(t), self.pool_spectral(s)
        t2, s2, m2 = self.hetero2(t, s, m)
        if self.residual:
            # HS-GAL layers are not internally residual
            t2, s2, m2 = t.with_nodes(t.nodes + t2.nodes), s.with_nodes(s.nodes + s2.nodes), m + m2
        return t2, s2, m2


class GraphAttentionStack(nn.Module):
    def __init__(self, d: int, cfg: ModelConfig):
        super().__init__()
        self.spectral = make_branch_attention(d, cfg.attention)
        self.temporal = make_branch_attention(d, cfg.attention)
        self.pool_spectral = GraphPool(d, cfg.branch_pool)
        self.pool_temporal = GraphPool(d, cfg.branch_pool)
        self.branches = nn.ModuleList(HeteroBranch(d, cfg) for _ in range(2))
        if cfg.has_stack:
            self.stack_init = nn.Parameter(torch.randn(2, 1, 1, d))
        else:
            self.stack_init = None

    def forward(self, spectral: NodeSet, temporal: NodeSet):
        s = self.pool_spectral(self.spectral(spectral))
        t = self.pool_temporal(self.temporal(temporal))
        outs = []
        for i, branch in enumerate(self.branches):
            stack = None
            if self.stack_init is not None:
                stack = self.stack_init[i].expand(s.nodes.shape[0], -1, -1)
            outs.append(branch(t, s, stack))
        return outs


class CountermeasureModel(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        cfg = cfg or ModelConfig()
        cfg.validate()
        self.cfg = cfg
        d = cfg.backbone.node_dim
        self.encoder = build_encoder(cfg.frontend)
        self.adapter = Adapter(self.encoder.embedding_dim, cfg.adapter)
        self.backbone = Backbone(cfg.backbone)
        self.attention = GraphAttentionStack(d, cfg)
        if cfg.fusion.strategy == "attention":
            self.fusion = AttentionFusion(d, cfg.fusion, dropout=cfg.attention.dropout)
        else:
            self.fusion = nn.Module()
        self.use_stack = cfg.has_stack and cfg.fusion.use_stack
        self.classifier = Classifier(d * (3 if self.use_stack else 2))

    @property
    def frozen(self) -> bool:
        return self.cfg.frontend.frozen

    def train(self, mode: bool = True):
        super().train(mode)
        if self.frozen:
            self.encoder.eval()
        return self

    def fuse(self, outs):
        (t1, s1, m1), (t2, s2, m2) = outs
        if self.cfg.fusion.strategy == "max":
            t, s = max_fusion(t1, t2), max_fusion(s1, s2)
            fused = mixed(torch.cat([t.nodes, s.nodes], dim=1))
            stack = torch.maximum(m1, m2) if m1 is not None else None
        else:
            spectral = NodeSet(torch.cat([s1.nodes, s2.nodes], dim=1), Modality.SPECTRAL)
            temporal = NodeSet(torch.cat([t1.nodes, t2.nodes], dim=1), Modality.TEMPORAL)
            fused = self.fusion(spectral, temporal)
            stack = 0.5 * (m1 + m2) if m1 is not None else None
        return fused, stack

    def embed(self, wav: torch.Tensor) -> torch.Tensor:
        emb = encode(wav, self.encoder, self.frozen)
        spectral, temporal = self.backbone(self.adapter(emb))
        fused, stack = self.fuse(self.attention(spectral, temporal))
        return readout(fused, stack if self.use_stack else None)

    def forward(self, wav: torch.Tensor) -> torch.Tensor:
        """``(B, L)`` waveforms to ``(B, 2)`` logits ordered (bonafide, spoof)."""
        return self.classifier(self.embed(wav))

    def trainable_parameter_names(self) -> list[str]:
        return [n for n, p in self.named_parameters() if p.requires_grad]

    def encoder_parameters(self):
        return list(self.encoder.parameters())
