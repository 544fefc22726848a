"""Separable synthetic corpus: bonafide = low-pass tones, spoof = white noise."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import SAMPLE_RATE, Label, LabeledExample, Manifest, ManifestEntry, Waveform, write_manifest, write_waveform


def tone(rng: np.random.Generator, n: int, sr: int = SAMPLE_RATE, max_hz: float = 1000.0) -> np.ndarray:
    t = np.arange(n) / sr
    x = np.zeros(n)
    for _ in range(int(rng.integers(1, 4))):
        f = rng.uniform(100.0, max_hz)
        x += rng.uniform(0.2, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return (0.5 * x / np.max(np.abs(x))).astype(np.float32)


def white_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.standard_normal(n)
    return (0.5 * x / np.max(np.abs(x))).astype(np.float32)


def toy_examples(n_per_class: int = 64, seconds: float = 1.0, seed: int = 0, prefix: str = "toy") -> list[LabeledExample]:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * SAMPLE_RATE))
    out = []
    for i in range(n_per_class):
        out.append(LabeledExample(Waveform(tone(rng, n), SAMPLE_RATE, f"{prefix}_bona_{i:03d}"), Label.BONAFIDE))
        out.append(LabeledExample(Waveform(white_noise(rng, n), SAMPLE_RATE, f"{prefix}_spoof_{i:03d}"), Label.SPOOF))
    return out


def write_toy_corpus(root, n_train: int = 64, n_dev: int = 32, seconds: float = 1.0, seed: int = 0) -> tuple[Path, Path]:
    """Write train/dev WAVs plus manifests under ``root``; returns the two manifest paths."""
    root = Path(root)
    paths = []
    for split, count, split_seed in (("train", n_train, seed), ("dev", n_dev, seed + 1)):
        wav_dir = root / split
        wav_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for ex in toy_examples(count, seconds, split_seed, prefix=split):
            rel = f"{split}/{ex.waveform.id}.wav"
            write_waveform(root / rel, ex.waveform)
            entries.append(ManifestEntry(ex.waveform.id, root / rel, ex.label, rel))
        path = root / f"{split}.tsv"
        write_manifest(Manifest(entries, root), path)
        paths.append(path)
    return paths[0], paths[1]
