"""Six-block residual encoder and the spectral/temporal bifurcation."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .frontend import ConfigError
from .nodes import Modality, NodeSet


@dataclass
class BackboneConfig:
    block_channels: list[int] = field(default_factory=lambda: [16, 16, 24, 24, 32, 64])
    # per-block pooling factors along (frequency, time)
    freq_pool: list[int] = field(default_factory=lambda: [1, 2, 1, 2, 1, 2])
    time_pool: list[int] = field(default_factory=lambda: [1, 1, 1, 2, 1, 1])
    node_dim: int = 64
    in_channels: int = 1

    def validate(self):
        for name in ("block_channels", "freq_pool", "time_pool"):
            if len(getattr(self, name)) != 6:
                raise ConfigError(f"backbone.{name} needs exactly 6 entries")
        if min(self.block_channels) < 1 or self.node_dim < 1:
            raise ConfigError("backbone channels and node_dim must be >= 1")
        if min(self.freq_pool) < 1 or min(self.time_pool) < 1:
            raise ConfigError("backbone pooling factors must be >= 1")

    def output_shape(self, freq: int, time: int) -> tuple[int, int, int]:
        """Trace ``(C, F, T)`` through the blocks, failing on a collapsed axis."""
        for i, (fp, tp) in enumerate(zip(self.freq_pool, self.time_pool)):
            freq, time = freq // fp, time // tp
            if freq < 1 or time < 1:
                raise ConfigError(f"backbone block {i} pools the feature map to zero size ({freq} x {time})")
        return self.block_channels[-1], freq, time


class ResBlock(nn.Module):
    """conv-BN-GELU-conv-BN plus skip, then max pooling."""

    def __init__(self, in_ch: int, out_ch: int, pool: tuple[int, int] = (1, 1)):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()
        self.pool = tuple(pool)

    def forward(self, x):
        h = self.bn2(self.conv2(F.gelu(self.bn1(self.conv1(x)))))
        out = self.skip(x) + h
        if self.pool != (1, 1):
            out = F.max_pool2d(out, self.pool)
        return out


class ResNetEncoder(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        chans = [cfg.in_channels] + list(cfg.block_channels)
        self.blocks = nn.ModuleList(
            ResBlock(chans[i], chans[i + 1], (cfg.freq_pool[i], cfg.time_pool[i])) for i in range(6)
        )

    def forward(self, x):
        # x: (B, C, F, T)
        if x.shape[1] != self.cfg.in_channels:
            raise ConfigError(f"backbone expects {self.cfg.in_channels} input channels, got {x.shape[1]}")
        self.cfg.output_shape(x.shape[2], x.shape[3])
        for block in self.blocks:
            x = block(x)
        return x


def collapse_axes(fmap: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Max over time gives ``(B, F', C)`` spectral nodes; max over frequency gives ``(B, T', C)``."""
    spectral = fmap.max(dim=3).values.transpose(1, 2)
    temporal = fmap.max(dim=2).values.transpose(1, 2)
    return spectral, temporal


class Bifurcation(nn.Module):
    def __init__(self, channels: int, node_dim: int):
        super().__init__()
        self.spectral_proj = nn.Linear(channels, node_dim)
        self.temporal_proj = nn.Linear(channels, node_dim)

    def forward(self, fmap: torch.Tensor) -> tuple[NodeSet, NodeSet]:
        spectral, temporal = collapse_axes(fmap)
        return (
            NodeSet(self.spectral_proj(spectral), Modality.SPECTRAL),
            NodeSet(self.temporal_proj(temporal), Modality.TEMPORAL),
        )


class Backbone(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.resnet = ResNetEncoder(cfg)
        self.bifurcate = Bifurcation(cfg.block_channels[-1], cfg.node_dim)

    def forward(self, fmap):
        return self.bifurcate(self.resnet(fmap))
