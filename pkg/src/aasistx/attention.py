"""Graph attention operators over NodeSets.

Two formalisms are available for every attention site: the pairwise graph
attention of the original AASIST back-end (``pairwise_gat``) and standard
multi-head self-attention (``mha``). Cross-modal layers come in matching
pairs: :class:`PairwiseHeteroGAT` (HS-GAL) and the type-aware
:class:`HeteroMHA`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .frontend import ConfigError
from .nodes import Modality, NodeSet

FORMALISMS = ("pairwise_gat", "mha")


@dataclass
class AttentionConfig:
    num_heads: int = 4
    formalism: str = "mha"
    dropout: float = 0.1
    stack_node: bool = True
    ffn_mult: int = 2

    def validate(self, node_dim: int):
        if self.formalism not in FORMALISMS:
            raise ConfigError(f"unknown attention formalism {self.formalism!r}; choose from {FORMALISMS}")
        if self.num_heads < 1:
            raise ConfigError("num_heads must be >= 1")
        if node_dim % self.num_heads:
            raise ConfigError(f"node_dim {node_dim} is not divisible by num_heads {self.num_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("attention dropout must be in [0, 1)")

    def head_dim(self, node_dim: int) -> int:
        return node_dim // self.num_heads


def multi_head_attention(q, k, v, num_heads: int, dropout: float = 0.0, training: bool = False):
    """Scaled dot-product attention over ``(B, N, d)`` projections.

    Returns the merged ``(B, N, d)`` output and the ``(B, H, N, N)`` weights.
    """
    b, n, d = q.shape
    if d % num_heads:
        raise ConfigError(f"dimension {d} is not divisible by {num_heads} heads")
    hd = d // num_heads

    def split(t):
        return t.reshape(b, t.shape[1], num_heads, hd).transpose(1, 2)

    qh, kh, vh = split(q), split(k), split(v)
    scores = qh @ kh.transpose(-2, -1) / math.sqrt(hd)
    weights = torch.softmax(scores, dim=-1)
    attn = F.dropout(weights, dropout, training) if dropout > 0 else weights
    out = (attn @ vh).transpose(1, 2).reshape(b, n, d)
    return out, weights


class FeedForward(nn.Module):
    def __init__(self, d: int, mult: int = 2):
        super().__init__()
        self.norm = nn.LayerNorm(d)
        self.fc1 = nn.Linear(d, mult * d)
        self.fc2 = nn.Linear(mult * d, d)

    def forward(self, x):
        return x + self.fc2(F.gelu(self.fc1(self.norm(x))))


class MHABlock(nn.Module):
    """Pre-norm multi-head self-attention with a GELU feed-forward sublayer."""

    def __init__(self, d: int, cfg: AttentionConfig | None = None, ffn: bool = True):
        super().__init__()
        cfg = cfg or AttentionConfig()
        cfg.validate(d)
        self.num_heads, self.dropout = cfg.num_heads, cfg.dropout
        self.norm = nn.LayerNorm(d)
        self.q = nn.Linear(d, d, bias=False)
        self.k = nn.Linear(d, d, bias=False)
        self.v = nn.Linear(d, d, bias=False)
        self.out = nn.Linear(d, d, bias=False)
        self.ffn = FeedForward(d, cfg.ffn_mult) if ffn else None

    def forward(self, x: NodeSet, return_attention: bool = False):
        h = self.norm(x.nodes)
        att, weights = multi_head_attention(self.q(h), self.k(h), self.v(h), self.num_heads,
                                            self.dropout, self.training)
        y = x.nodes + self.out(att)
        if self.ffn is not None:
            y = self.ffn(y)
        result = x.with_nodes(y)
        return (result, weights) if return_attention else result


class HeteroMHA(nn.Module):
    """Type-aware MHA over temporal + spectral (+ stack) nodes.

    Queries and keys use a per-modality projection; a single value projection
    is shared by every node type.
    """

    def __init__(self, d: int, cfg: AttentionConfig | None = None, ffn: bool = True,
                 stack_node: bool | None = None):
        super().__init__()
        cfg = cfg or AttentionConfig()
        cfg.validate(d)
        self.num_heads, self.dropout = cfg.num_heads, cfg.dropout
        self.use_stack = cfg.stack_node if stack_node is None else stack_node
        self.norm = nn.LayerNorm(d)
        self.q_temporal = nn.Linear(d, d, bias=False)
        self.q_spectral = nn.Linear(d, d, bias=False)
        self.k_temporal = nn.Linear(d, d, bias=False)
        self.k_spectral = nn.Linear(d, d, bias=False)
        self.v_shared = nn.Linear(d, d, bias=False)
        if self.use_stack:
            self.q_stack = nn.Linear(d, d, bias=False)
            self.k_stack = nn.Linear(d, d, bias=False)
        self.out = nn.Linear(d, d, bias=False)
        self.ffn = FeedForward(d, cfg.ffn_mult) if ffn else None

    def forward(self, temporal: NodeSet, spectral: NodeSet, stack: torch.Tensor | None = None,
                return_attention: bool = False):
        if temporal.modality == spectral.modality:
            raise ValueError(f"hetero attention needs two modalities, got {temporal.modality.value} twice")
        nt, ns = temporal.num_nodes, spectral.num_nodes
        parts = [temporal.nodes, spectral.nodes]
        if self.use_stack:
            if stack is None:
                stack = torch.cat(parts, dim=1).mean(dim=1, keepdim=True)
            parts.append(stack)
        x = torch.cat(parts, dim=1)
        h = self.norm(x)
        ht, hs = h[:, :nt], h[:, nt:nt + ns]
        q = [self.q_temporal(ht), self.q_spectral(hs)]
        k = [self.k_temporal(ht), self.k_spectral(hs)]
        if self.use_stack:
            hm = h[:, nt + ns:]
            q.append(self.q_stack(hm))
            k.append(self.k_stack(hm))
        att, weights = multi_head_attention(torch.cat(q, 1), torch.cat(k, 1), self.v_shared(h),
                                            self.num_heads, self.dropout, self.training)
        y = x + self.out(att)
        if self.ffn is not None:
            y = self.ffn(y)
        out = (
            temporal.with_nodes(y[:, :nt]),
            spectral.with_nodes(y[:, nt:nt + ns]),
            y[:, nt + ns:] if self.use_stack else None,
        )
        return (*out, weights) if return_attention else out


def _pairwise_products(x):
    # (B, N, d) -> (B, N, N, d) with entry [i, j] = x_i * x_j
    return x.unsqueeze(2) * x.unsqueeze(1)


class PairwiseGAT(nn.Module):
    """AASIST graph attention: tanh-projected element-wise node products score each edge."""

    def __init__(self, d: int, dropout: float = 0.2, temperature: float = 1.0):
        super().__init__()
        self.att_proj = nn.Linear(d, d)
        self.att_weight = nn.Parameter(torch.empty(d, 1))
        nn.init.xavier_normal_(self.att_weight)
        self.proj_with_att = nn.Linear(d, d)
        self.proj_without_att = nn.Linear(d, d)
        self.bn = nn.BatchNorm1d(d)
        self.input_drop = nn.Dropout(dropout)
        self.temperature = temperature

    def attention_map(self, x: torch.Tensor) -> torch.Tensor:
        scores = torch.tanh(self.att_proj(_pairwise_products(x))) @ self.att_weight
        return torch.softmax(scores.squeeze(-1) / self.temperature, dim=-1)

    def forward(self, x: NodeSet, return_attention: bool = False):
        h = self.input_drop(x.nodes)
        att = self.attention_map(h)
        y = self.proj_with_att(att @ h) + self.proj_without_att(h)
        y = F.gelu(self.bn(y.reshape(-1, y.shape[-1])).reshape(y.shape))
        result = x.with_nodes(y)
        return (result, att) if return_attention else result


class PairwiseHeteroGAT(nn.Module):
    """HS-GAL: pairwise attention with per-edge-type score vectors and a stack node."""

    def __init__(self, d: int, dropout: float = 0.2, temperature: float = 1.0):
        super().__init__()
        self.proj_type1 = nn.Linear(d, d)
        self.proj_type2 = nn.Linear(d, d)
        self.att_proj = nn.Linear(d, d)
        self.att_proj_stack = nn.Linear(d, d)
        self.att_weight11 = nn.Parameter(torch.empty(d, 1))
        self.att_weight22 = nn.Parameter(torch.empty(d, 1))
        self.att_weight12 = nn.Parameter(torch.empty(d, 1))
        self.att_weight_stack = nn.Parameter(torch.empty(d, 1))
        for p in (self.att_weight11, self.att_weight22, self.att_weight12, self.att_weight_stack):
            nn.init.xavier_normal_(p)
        self.proj_with_att = nn.Linear(d, d)
        self.proj_without_att = nn.Linear(d, d)
        self.proj_with_att_stack = nn.Linear(d, d)
        self.proj_without_att_stack = nn.Linear(d, d)
        self.bn = nn.BatchNorm1d(d)
        self.input_drop = nn.Dropout(dropout)
        self.temperature = temperature

    def attention_map(self, x: torch.Tensor, n1: int) -> torch.Tensor:
        e = torch.tanh(self.att_proj(_pairwise_products(x)))
        s11 = e[:, :n1, :n1] @ self.att_weight11
        s22 = e[:, n1:, n1:] @ self.att_weight22
        s12 = e[:, :n1, n1:] @ self.att_weight12
        s21 = e[:, n1:, :n1] @ self.att_weight12
        scores = torch.cat([torch.cat([s11, s12], 2), torch.cat([s21, s22], 2)], 1).squeeze(-1)
        return torch.softmax(scores / self.temperature, dim=-1)

    def forward(self, temporal: NodeSet, spectral: NodeSet, stack: torch.Tensor | None = None,
                return_attention: bool = False):
        if temporal.modality == spectral.modality:
            raise ValueError(f"hetero attention needs two modalities, got {temporal.modality.value} twice")
        nt = temporal.num_nodes
        x = torch.cat([self.proj_type1(temporal.nodes), self.proj_type2(spectral.nodes)], dim=1)
        if stack is None:
            stack = x.mean(dim=1, keepdim=True)
        x = self.input_drop(x)
        att = self.attention_map(x, nt)

        stack_scores = torch.tanh(self.att_proj_stack(x * stack)) @ self.att_weight_stack
        stack_att = torch.softmax(stack_scores / self.temperature, dim=1).transpose(1, 2)
        stack = self.proj_with_att_stack(stack_att @ x) + self.proj_without_att_stack(stack)

        y = self.proj_with_att(att @ x) + self.proj_without_att(x)
        y = F.gelu(self.bn(y.reshape(-1, y.shape[-1])).reshape(y.shape))
        out = temporal.with_nodes(y[:, :nt]), spectral.with_nodes(y[:, nt:]), stack
        return (*out, att) if return_attention else out


def keep_count(n: int, keep_ratio: float) -> int:
    return max(1, math.ceil(keep_ratio * n - 1e-9))


class GraphPool(nn.Module):
    """Keep the top ``ceil(keep_ratio * N)`` nodes by a learned gate, scaled by sigmoid(gate)."""

    def __init__(self, d: int, keep_ratio: float, dropout: float = 0.0):
        super().__init__()
        if not 0.0 < keep_ratio <= 1.0:
            raise ConfigError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
        self.keep_ratio = keep_ratio
        self.gate = nn.Linear(d, 1)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: NodeSet, return_indices: bool = False):
        h = x.nodes
        scores = self.gate(self.drop(h)).squeeze(-1)
        k = keep_count(h.shape[1], self.keep_ratio)
        # stable sort: equal scores keep ascending node order
        idx = torch.sort(scores, dim=1, descending=True, stable=True).indices[:, :k]
        gated = h * torch.sigmoid(scores).unsqueeze(-1)
        kept = torch.gather(gated, 1, idx.unsqueeze(-1).expand(-1, -1, h.shape[-1]))
        result = x.with_nodes(kept)
        return (result, idx) if return_indices else result


def make_branch_attention(d: int, cfg: AttentionConfig) -> nn.Module:
    if cfg.formalism == "mha":
        return MHABlock(d, cfg)
    return PairwiseGAT(d, dropout=cfg.dropout)


def make_hetero_attention(d: int, cfg: AttentionConfig) -> nn.Module:
    if cfg.formalism == "mha":
        return HeteroMHA(d, cfg)
    return PairwiseHeteroGAT(d, dropout=cfg.dropout)


def mixed(nodes: torch.Tensor) -> NodeSet:
    return NodeSet(nodes, Modality.MIXED)
