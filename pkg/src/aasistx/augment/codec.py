"""One-of-four "codec" corruption: MP3-like, telephone, low-rate resampling, coloured noise."""

from __future__ import annotations

import shutil
import subprocess
import tempfile
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import signal
from scipy.io import wavfile

from ..data import Waveform, resample
from .effects import MIN_FILTER_SAMPLES
from .schedule import AugmentationConfigError, AugmentationState, lerp_window, uniform

CODEC_PROB = 0.4
CODECS = ("mp3", "telephone", "lowrate", "coloured_noise")

# (low, high) windows at kappa0 and at kappa_max
MP3_KBPS = ((64.0, 128.0), (32.0, 64.0))
NOISE_SNR_DB = ((10.0, 20.0), (3.0, 10.0))
LOWRATE_HZ = ((8000.0, 12000.0), (4000.0, 8000.0))
NOISE_DECAY = (-2.0, 2.0)


class CodecBackend(Protocol):
    def compress(self, x: np.ndarray, sr: int, kbps: float) -> np.ndarray: ...


def mu_law_quantize(x: np.ndarray, bits: int, mu: float = 255.0) -> np.ndarray:
    x = np.clip(x, -1.0, 1.0)
    companded = np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)
    levels = 2 ** (bits - 1)
    q = np.round(companded * levels) / levels
    return np.sign(q) * np.expm1(np.abs(q) * np.log1p(mu)) / mu


class SimulatedMP3:
    """Bitrate-driven low-pass plus mu-law quantization; no native codec needed."""

    def compress(self, x, sr, kbps):
        cutoff = min(3000.0 + 35.0 * kbps, 0.47 * sr)
        bits = int(np.clip(round(4 + kbps / 16.0), 4, 16))
        sos = signal.butter(6, cutoff, btype="low", fs=sr, output="sos")
        y = signal.sosfiltfilt(sos, x)
        peak = np.max(np.abs(y))
        if peak == 0:
            return y
        return mu_law_quantize(y / peak, bits) * peak


class ExternalMP3:
    """Round-trips audio through an external encoder binary (ffmpeg by default)."""

    def __init__(self, binary: str = "ffmpeg"):
        self.binary = binary

    def compress(self, x, sr, kbps):
        exe = shutil.which(self.binary)
        if exe is None:
            raise AugmentationConfigError(
                f"codec backend 'external' needs {self.binary!r} on PATH; use backend 'simulated' instead"
            )
        with tempfile.TemporaryDirectory() as tmp:
            src, enc, dst = Path(tmp, "in.wav"), Path(tmp, "enc.mp3"), Path(tmp, "out.wav")
            wavfile.write(src, sr, np.asarray(x, dtype=np.float32))
            run = dict(check=True, capture_output=True)
            subprocess.run([exe, "-y", "-i", str(src), "-b:a", f"{int(kbps)}k", str(enc)], **run)
            subprocess.run([exe, "-y", "-i", str(enc), "-ar", str(sr), "-ac", "1", "-f", "wav",
                            "-acodec", "pcm_f32le", str(dst)], **run)
            _, y = wavfile.read(dst)
        y = np.asarray(y, dtype=np.float64)
        if y.size >= x.size:
            return y[:x.size]
        return np.pad(y, (0, x.size - y.size))


BACKENDS = {"simulated": SimulatedMP3, "external": ExternalMP3}


def make_backend(name: str) -> CodecBackend:
    try:
        return BACKENDS[name]()
    except KeyError:
        raise AugmentationConfigError(f"unknown codec backend {name!r}; choose from {sorted(BACKENDS)}") from None


def _fit_length(y: np.ndarray, n: int) -> np.ndarray:
    if y.size >= n:
        return y[:n]
    return np.pad(y, (0, n - y.size))


def telephone_band(x: np.ndarray, sr: int) -> np.ndarray:
    sos = signal.butter(4, (300.0, 3400.0), btype="band", fs=sr, output="sos")
    y = signal.sosfiltfilt(sos, x)
    if sr > 8000:
        y = resample(resample(y, sr, 8000), 8000, sr)
    return _fit_length(y, x.size)


def lowrate_resample(x: np.ndarray, sr: int, rate: int, bits: int = 8) -> np.ndarray:
    low = resample(x, sr, rate)
    peak = np.max(np.abs(low))
    if peak > 0:
        levels = 2 ** (bits - 1)
        low = np.round(low / peak * levels) / levels * peak
    return _fit_length(resample(low, rate, sr), x.size)


def coloured_noise(n: int, rng: np.random.Generator, decay: float) -> np.ndarray:
    """Gaussian noise with power spectral density proportional to 1/f**decay."""
    white = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n)
    freqs[0] = freqs[1] if n > 1 else 1.0
    return np.fft.irfft(white / freqs ** (decay / 2.0), n=n)


def add_noise_at_snr(x: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    px = np.mean(x ** 2)
    pn = np.mean(noise ** 2)
    if px == 0 or pn == 0:
        return x
    return x + noise * np.sqrt(px / (pn * 10.0 ** (snr_db / 10.0)))


@dataclass(frozen=True)
class CodecDraw:
    kind: str | None
    # kind-specific: kbps for mp3, target rate for lowrate, SNR in dB for coloured_noise
    value: float | None = None
    decay: float = 0.0


def draw_codec(state: AugmentationState, prob: float = CODEC_PROB) -> CodecDraw:
    rng, t = state.rng, state.intensity
    if rng.random() >= prob:
        return CodecDraw(None)
    kind = CODECS[int(rng.integers(len(CODECS)))]
    if kind == "mp3":
        return CodecDraw(kind, uniform(rng, *lerp_window(*MP3_KBPS, t)))
    if kind == "lowrate":
        return CodecDraw(kind, float(round(uniform(rng, *lerp_window(*LOWRATE_HZ, t)))))
    if kind == "coloured_noise":
        return CodecDraw(kind, uniform(rng, *lerp_window(*NOISE_SNR_DB, t)), uniform(rng, *NOISE_DECAY))
    return CodecDraw(kind)


def render_codec(x: np.ndarray, sr: int, draw: CodecDraw, rng: np.random.Generator,
                 backend: CodecBackend | None = None) -> np.ndarray:
    if draw.kind is None or x.size < MIN_FILTER_SAMPLES:
        return x
    x = np.asarray(x, dtype=np.float64)
    if draw.kind == "mp3":
        return (backend or SimulatedMP3()).compress(x, sr, draw.value)
    if draw.kind == "telephone":
        return telephone_band(x, sr)
    if draw.kind == "lowrate":
        return lowrate_resample(x, sr, int(draw.value))
    if draw.kind == "coloured_noise":
        return add_noise_at_snr(x, coloured_noise(x.size, rng, draw.decay), draw.value)
    raise AugmentationConfigError(f"unknown codec {draw.kind!r}")


def apply_codec_corruption(w: Waveform, state: AugmentationState, *, draw: CodecDraw | None = None,
                           backend: CodecBackend | None = None, prob: float = CODEC_PROB,
                           stats: Counter | None = None) -> Waveform:
    """Apply at most one codec corruption; ``stats`` counts which branch fired."""
    if draw is None:
        draw = draw_codec(state, prob)
    if stats is not None:
        stats[draw.kind or "none"] += 1
    if draw.kind is None:
        return w
    return w.replace(render_codec(w.samples, w.sample_rate, draw, state.rng, backend))
