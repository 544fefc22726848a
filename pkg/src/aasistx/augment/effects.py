"""Gain, pitch, shift and low-pass effect chain followed by peak normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from ..data import Waveform
from .schedule import AugmentationState, uniform

GAIN_DB = 6.0
PITCH_SEMITONES = 2.0
SHIFT_FRACTION = 0.1
LOWPASS_HZ = (2000.0, 7500.0)
# shorter inputs skip pitch shifting and codec simulation
MIN_FILTER_SAMPLES = 1600


def gain(x: np.ndarray, db: float) -> np.ndarray:
    return x * 10.0 ** (db / 20.0)


def circular_shift(x: np.ndarray, k: int) -> np.ndarray:
    return np.roll(x, k)


def lowpass(x: np.ndarray, sr: int, cutoff_hz: float, order: int = 4) -> np.ndarray:
    cutoff_hz = min(cutoff_hz, 0.499 * sr)
    sos = signal.butter(order, cutoff_hz, btype="low", fs=sr, output="sos")
    return signal.sosfilt(sos, x)


def peak_normalize(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x))
    if peak == 0 or not np.isfinite(peak):
        return x
    return x / peak


def _stft(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    window = np.hanning(n_fft + 1)[:-1]
    xp = np.pad(x, (n_fft // 2, n_fft // 2 + n_fft), mode="reflect" if x.size > n_fft else "constant")
    n_frames = 1 + (xp.size - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return np.fft.rfft(xp[idx] * window, axis=1)


def _istft(spec: np.ndarray, n_fft: int, hop: int, length: int) -> np.ndarray:
    window = np.hanning(n_fft + 1)[:-1]
    frames = np.fft.irfft(spec, n=n_fft, axis=1) * window
    total = n_fft + hop * (frames.shape[0] - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    for i, frame in enumerate(frames):
        out[i * hop:i * hop + n_fft] += frame
        norm[i * hop:i * hop + n_fft] += window ** 2
    out /= np.maximum(norm, 1e-8)
    out = out[n_fft // 2:]
    if out.size < length:
        out = np.pad(out, (0, length - out.size))
    return out[:length]


def time_stretch(x: np.ndarray, rate: float, n_fft: int = 512, hop: int = 128) -> np.ndarray:
    """Phase-vocoder time stretch; ``rate > 1`` shortens the signal."""
    spec = _stft(x, n_fft, hop)
    spec = np.concatenate([spec, np.zeros((1, spec.shape[1]), dtype=spec.dtype)])
    steps = np.arange(0, spec.shape[0] - 1, rate)
    expected = 2 * np.pi * hop * np.arange(spec.shape[1]) / n_fft

    phase = np.angle(spec[0])
    out = np.empty((steps.size, spec.shape[1]), dtype=complex)
    for j, t in enumerate(steps):
        i = int(t)
        frac = t - i
        left, right = spec[i], spec[i + 1]
        mag = (1.0 - frac) * np.abs(left) + frac * np.abs(right)
        out[j] = mag * np.exp(1j * phase)
        dphi = np.angle(right) - np.angle(left) - expected
        dphi -= 2 * np.pi * np.round(dphi / (2 * np.pi))
        phase = phase + expected + dphi
    return _istft(out, n_fft, hop, int(round(x.size / rate)))


def pitch_shift(x: np.ndarray, sr: int, semitones: float) -> np.ndarray:
    """Stretch by the pitch ratio, then resample back to the input length."""
    if semitones == 0 or x.size < MIN_FILTER_SAMPLES:
        return x
    ratio = 2.0 ** (semitones / 12.0)
    stretched = time_stretch(x, 1.0 / ratio)
    return signal.resample(stretched, x.size)


@dataclass(frozen=True)
class EffectDraw:
    """Sampled parameters for one pass of the chain; ``None`` disables a stage."""

    gain_db: float | None = None
    semitones: float | None = None
    shift: int | None = None
    cutoff_hz: float | None = None


def draw_effects(state: AugmentationState, n_samples: int) -> EffectDraw:
    rng, p = state.rng, state.p
    fires = rng.random(4) < p
    gain_db = uniform(rng, -GAIN_DB, GAIN_DB)
    semis = uniform(rng, -PITCH_SEMITONES * state.kappa, PITCH_SEMITONES * state.kappa)
    max_shift = int(SHIFT_FRACTION * n_samples)
    shift = int(rng.integers(-max_shift, max_shift + 1))
    cutoff = uniform(rng, *LOWPASS_HZ)
    return EffectDraw(
        gain_db if fires[0] else None,
        semis if fires[1] else None,
        shift if fires[2] else None,
        cutoff if fires[3] else None,
    )


def render_effects(x: np.ndarray, sr: int, draw: EffectDraw, normalize: bool = True) -> np.ndarray:
    y = np.asarray(x, dtype=np.float64)
    if draw.gain_db is not None:
        y = gain(y, draw.gain_db)
    if draw.semitones is not None:
        y = pitch_shift(y, sr, draw.semitones)
    if draw.shift is not None:
        y = circular_shift(y, draw.shift)
    if draw.cutoff_hz is not None:
        y = lowpass(y, sr, draw.cutoff_hz)
    if normalize:
        # normalize in float32 so the peak sample is exactly 1.0 after the cast
        y = peak_normalize(y.astype(np.float32))
    return y


def apply_effect_chain(w: Waveform, state: AugmentationState, draw: EffectDraw | None = None) -> Waveform:
    if draw is None:
        draw = draw_effects(state, len(w))
    return w.replace(render_effects(w.samples, w.sample_rate, draw))
