"""RawBoost: convolutive, impulsive and coloured additive noise, in eight combinations.

Variants::

    1  convolutive (linear and non-linear)      5  1 then 3
    2  impulsive signal-dependent               6  2 then 3
    3  coloured stationary additive             7  1 then 2 then 3
    4  1 then 2                                 8  1 and 2 in parallel, summed

Each primitive draws from its own child stream of the call's seed, so a serial
variant is exactly the composition of single-primitive calls with that seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from ..data import SAMPLE_RATE, Waveform
from .schedule import AugmentationConfigError, uniform

VARIANTS = {
    1: ("conv",),
    2: ("impulse",),
    3: ("coloured",),
    4: ("conv", "impulse"),
    5: ("conv", "coloured"),
    6: ("impulse", "coloured"),
    7: ("conv", "impulse", "coloured"),
}
PARALLEL_VARIANT = 8
_STREAM = {"conv": 0, "impulse": 1, "coloured": 2}


@dataclass(frozen=True)
class RawBoostParams:
    variant: int = 1
    n_bands: int = 5
    centre_freq_hz: tuple[float, float] = (20.0, 8000.0)
    bandwidth_hz: tuple[float, float] = (100.0, 1000.0)
    coeff_count: tuple[int, int] = (10, 100)
    linear_gain_db: tuple[float, float] = (0.0, 0.0)
    bias_db: tuple[float, float] = (5.0, 20.0)
    nonlinear_order: int = 5
    impulse_percent: float = 10.0
    impulse_gain: float = 2.0
    snr_db: tuple[float, float] = (10.0, 40.0)

    def __post_init__(self):
        if self.variant not in range(1, 9):
            raise AugmentationConfigError(f"RawBoost variant must be in 1..8, got {self.variant}")
        for name in ("centre_freq_hz", "bandwidth_hz", "coeff_count", "linear_gain_db", "bias_db", "snr_db"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise AugmentationConfigError(f"RawBoost range {name} is empty: {lo} > {hi}")
        if self.n_bands < 1 or self.nonlinear_order < 1:
            raise AugmentationConfigError("n_bands and nonlinear_order must be >= 1")


def norm_wav(x: np.ndarray, always: bool) -> np.ndarray:
    peak = np.max(np.abs(x))
    if peak == 0:
        return x
    if always or peak > 1:
        return x / peak
    return x


def notch_coeffs(rng: np.random.Generator, params: RawBoostParams, gain_db: tuple[float, float],
                 sr: int) -> np.ndarray:
    """Cascade of ``n_bands`` random band-pass FIRs, normalized to a random gain."""
    b = np.ones(1)
    nyq = sr / 2.0
    for _ in range(params.n_bands):
        fc = uniform(rng, *params.centre_freq_hz)
        bw = uniform(rng, *params.bandwidth_hz)
        c = int(uniform(rng, *params.coeff_count))
        if c % 2 == 0:
            c += 1
        f1 = max(fc - bw / 2.0, 1e-3)
        f2 = min(fc + bw / 2.0, nyq - 1e-3)
        if f1 >= f2:
            f1 = max(f2 - 1.0, 1e-3)
        b = np.convolve(signal.firwin(c, [f1, f2], window="hamming", fs=sr), b)
    g = uniform(rng, *gain_db)
    _, h = signal.freqz(b, 1, fs=sr)
    return 10.0 ** (g / 20.0) * b / np.max(np.abs(h))


def fir_filter(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = b.size + 1
    y = signal.lfilter(b, 1, np.pad(x, (0, n)))
    return y[n // 2:n // 2 + x.size]


def convolutive_noise(x: np.ndarray, rng: np.random.Generator, params: RawBoostParams,
                      sr: int = SAMPLE_RATE) -> np.ndarray:
    y = np.zeros_like(x)
    gain_db = params.linear_gain_db
    for i in range(params.nonlinear_order):
        if i == 1:
            gain_db = (gain_db[0] - params.bias_db[0], gain_db[1] - params.bias_db[1])
        b = notch_coeffs(rng, params, (min(gain_db), max(gain_db)), sr)
        y = y + fir_filter(np.power(x, i + 1), b)
    y = y - np.mean(y)
    return norm_wav(y, always=False)


def impulsive_noise(x: np.ndarray, rng: np.random.Generator, params: RawBoostParams) -> np.ndarray:
    beta = uniform(rng, 0.0, params.impulse_percent)
    n = int(x.size * beta / 100.0)
    y = x.copy()
    if n == 0:
        return norm_wav(y, always=False)
    idx = rng.permutation(x.size)[:n]
    f_r = (2 * rng.random(n) - 1) * (2 * rng.random(n) - 1)
    y[idx] = x[idx] + params.impulse_gain * x[idx] * f_r
    return norm_wav(y, always=False)


def coloured_additive_noise(x: np.ndarray, rng: np.random.Generator, params: RawBoostParams,
                            sr: int = SAMPLE_RATE) -> np.ndarray:
    noise = rng.standard_normal(x.size)
    b = notch_coeffs(rng, params, params.linear_gain_db, sr)
    noise = norm_wav(fir_filter(noise, b), always=True)
    snr = uniform(rng, *params.snr_db)
    scale = 0.0 if np.isinf(snr) and snr > 0 else np.linalg.norm(x) / 10.0 ** (0.05 * snr)
    nn = np.linalg.norm(noise)
    if nn == 0 or scale == 0:
        return x
    return x + noise / nn * scale


def _streams(rng) -> list[np.random.Generator]:
    if isinstance(rng, np.random.Generator):
        rng = int(rng.integers(2 ** 63))
    return [np.random.default_rng(s) for s in np.random.SeedSequence(rng).spawn(3)]


def _primitive(name: str, x: np.ndarray, g: np.random.Generator, params: RawBoostParams, sr: int):
    if name == "conv":
        return convolutive_noise(x, g, params, sr)
    if name == "impulse":
        return impulsive_noise(x, g, params)
    return coloured_additive_noise(x, g, params, sr)


def rawboost_array(x: np.ndarray, params: RawBoostParams, rng, sr: int = SAMPLE_RATE) -> np.ndarray:
    streams = _streams(rng)
    x = np.asarray(x, dtype=np.float64)
    if params.variant == PARALLEL_VARIANT:
        y = convolutive_noise(x, streams[0], params, sr) + impulsive_noise(x, streams[1], params)
        return norm_wav(y, always=False)
    for name in VARIANTS[params.variant]:
        # round through float32 between stages, as a chain of Waveform calls would
        x = _primitive(name, x, streams[_STREAM[name]], params, sr).astype(np.float32).astype(np.float64)
    return x


def rawboost(w: Waveform, params: RawBoostParams, rng) -> Waveform:
    """Apply the configured variant; ``rng`` is a seed or a ``numpy`` Generator."""
    return w.replace(rawboost_array(w.samples, params, rng, w.sample_rate))
