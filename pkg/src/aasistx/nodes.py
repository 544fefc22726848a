from __future__ import annotations

import enum
from dataclasses import dataclass

import torch


class Modality(str, enum.Enum):
    SPECTRAL = "spectral"
    TEMPORAL = "temporal"
    MIXED = "mixed"


@dataclass(frozen=True)
class NodeSet:
    """A batch of graph nodes, ``nodes`` shaped ``(B, N, d)``, tagged with its modality."""

    nodes: torch.Tensor
    modality: Modality

    def __post_init__(self):
        if self.nodes.dim() != 3 or self.nodes.shape[1] < 1:
            raise ValueError(f"NodeSet needs a (B, N>=1, d) tensor, got {tuple(self.nodes.shape)}")

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[1]

    @property
    def dim(self) -> int:
        return self.nodes.shape[2]

    def with_nodes(self, nodes: torch.Tensor) -> "NodeSet":
        return NodeSet(nodes, self.modality)
