"""Waveform encoders and the MLP adapter feeding the residual backbone."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import SAMPLE_RATE

FRAME_SAMPLES = 320  # 20 ms at 16 kHz
SSL_DIM = 1024
# fixed seed standing in for "pretrained" synthetic encoder weights
PRETRAINED_SEED = 20240


class ConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    kind: str = "synthetic"  # synthetic | external_ssl
    frozen: bool = True
    embedding_dim: int = 128
    # synthetic only: start from the fixed "pretrained" projection, or from the run seed
    pretrained: bool = True
    n_bands: int = 40
    weights_path: str | None = None

    def validate(self):
        if self.kind not in ("synthetic", "external_ssl"):
            raise ConfigError(f"unknown encoder kind {self.kind!r}")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if self.kind == "external_ssl":
            if self.embedding_dim != SSL_DIM:
                raise ConfigError(f"external_ssl encoders produce {SSL_DIM}-dim embeddings")
            if not self.frozen:
                raise ConfigError("external_ssl encoders are load-only; set frozen=true")


@dataclass
class AdapterConfig:
    hidden_dim: int = 256
    out_dim: int = 128


def gelu(x: torch.Tensor) -> torch.Tensor:
    return F.gelu(x)


def _band_matrix(n_bands: int, n_fft: int, sr: int) -> np.ndarray:
    """Triangular filters on a mel-spaced grid over 0..sr/2."""
    n_bins = n_fft // 2 + 1

    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    edges_mel = np.linspace(0.0, mel(sr / 2), n_bands + 2)
    edges = 700.0 * (10 ** (edges_mel / 2595.0) - 1.0)
    freqs = np.linspace(0, sr / 2, n_bins)
    fb = np.zeros((n_bands, n_bins))
    for m in range(n_bands):
        lo, c, hi = edges[m:m + 3]
        up = (freqs - lo) / max(c - lo, 1e-9)
        down = (hi - freqs) / max(hi - c, 1e-9)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
        if not fb[m].any():
            # narrower than one FFT bin: take the nearest bin
            fb[m, np.argmin(np.abs(freqs - c))] = 1.0
    return fb


class SyntheticEncoder(nn.Module):
    """Seeded linear projection of 20 ms log-band-energy frames, squashed by tanh.

    Input ``(B, L)`` waveforms, output ``(B, T, D)`` with ``T = L // 320``.
    """

    frame_rate = SAMPLE_RATE / FRAME_SAMPLES

    def __init__(self, embedding_dim: int, n_bands: int = 40, seed: int | None = PRETRAINED_SEED):
        super().__init__()
        self.embedding_dim = embedding_dim
        self.register_buffer("window", torch.hann_window(FRAME_SAMPLES, periodic=True, dtype=torch.float64))
        self.register_buffer("bands", torch.from_numpy(_band_matrix(n_bands, FRAME_SAMPLES, SAMPLE_RATE)))
        self.proj = nn.Linear(n_bands, embedding_dim)
        if seed is not None:
            g = torch.Generator().manual_seed(seed)
            bound = 1.0 / math.sqrt(n_bands)
            with torch.no_grad():
                self.proj.weight.copy_(torch.empty_like(self.proj.weight).uniform_(-bound, bound, generator=g) * 3.0)
                self.proj.bias.copy_(torch.empty_like(self.proj.bias).uniform_(-bound, bound, generator=g))

    def log_bands(self, wav: torch.Tensor) -> torch.Tensor:
        if wav.shape[-1] < FRAME_SAMPLES:
            wav = F.pad(wav, (0, FRAME_SAMPLES - wav.shape[-1]))
        n_frames = wav.shape[-1] // FRAME_SAMPLES
        frames = wav[..., :n_frames * FRAME_SAMPLES].reshape(*wav.shape[:-1], n_frames, FRAME_SAMPLES)
        spec = torch.fft.rfft(frames * self.window.to(frames.dtype), dim=-1)
        power = spec.real ** 2 + spec.imag ** 2
        logs = torch.log(power @ self.bands.to(power.dtype).T + 1e-8)
        # per-utterance standardization makes the features gain invariant
        mean = logs.mean(dim=(-2, -1), keepdim=True)
        std = logs.std(dim=(-2, -1), keepdim=True, unbiased=False).clamp_min(1e-5)
        return (logs - mean) / std

    def forward(self, wav: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.proj(self.log_bands(wav)))


class ExternalSSLEncoder(nn.Module):
    """Read-only wrapper around a locally stored Wav2Vec 2.0 checkpoint."""

    frame_rate = 50.0

    def __init__(self, weights_path: str | None):
        super().__init__()
        if not weights_path or not Path(weights_path).exists():
            raise ConfigError(
                f"external SSL encoder weights not found at {weights_path!r}; download a Wav2Vec 2.0 "
                "XLS-R 300M checkpoint (e.g. facebook/wav2vec2-xls-r-300m) and set frontend.weights_path, "
                "or use frontend.kind='synthetic'"
            )
        try:
            from transformers import Wav2Vec2Model
        except ImportError as exc:
            raise ConfigError("external SSL encoder requires the 'transformers' package") from exc
        self.model = Wav2Vec2Model.from_pretrained(weights_path)
        self.embedding_dim = self.model.config.hidden_size

    def forward(self, wav: torch.Tensor) -> torch.Tensor:
        return self.model(wav).last_hidden_state


def build_encoder(cfg: EncoderConfig) -> nn.Module:
    cfg.validate()
    if cfg.kind == "external_ssl":
        enc = ExternalSSLEncoder(cfg.weights_path)
    else:
        enc = SyntheticEncoder(cfg.embedding_dim, cfg.n_bands, PRETRAINED_SEED if cfg.pretrained else None)
    if cfg.frozen:
        enc.requires_grad_(False)
    return enc


def encode(wav: torch.Tensor, encoder: nn.Module, frozen: bool) -> torch.Tensor:
    """``(B, L)`` waveforms to ``(B, T, D)`` embeddings; no graph is built when frozen."""
    if frozen:
        encoder.eval()
        with torch.no_grad():
            return encoder(wav)
    return encoder(wav)


class Adapter(nn.Module):
    """Two-layer GELU MLP applied per frame; returns a ``(B, 1, F_out, T)`` feature map."""

    def __init__(self, in_dim: int, cfg: AdapterConfig | None = None):
        super().__init__()
        cfg = cfg or AdapterConfig()
        self.in_dim, self.out_dim = in_dim, cfg.out_dim
        self.fc1 = nn.Linear(in_dim, cfg.hidden_dim)
        self.fc2 = nn.Linear(cfg.hidden_dim, cfg.out_dim)

    def forward(self, emb: torch.Tensor) -> torch.Tensor:
        if emb.shape[-1] != self.in_dim:
            raise ConfigError(f"adapter expects {self.in_dim}-dim embeddings, got {emb.shape[-1]}")
        h = self.fc2(gelu(self.fc1(emb)))
        return h.transpose(1, 2).unsqueeze(1)
