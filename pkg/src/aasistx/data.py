"""Audio and label ingestion: TSV manifests and PCM WAV loading."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

SAMPLE_RATE = 16000

# Kaiser-windowed sinc used by every resampling call in the package.
RESAMPLE_WINDOW = ("kaiser", 5.0)


class DataError(Exception):
    """Raised for unreadable, malformed or inconsistent data inputs."""


class Label(str, enum.Enum):
    BONAFIDE = "bonafide"
    SPOOF = "spoof"

    @property
    def index(self) -> int:
        # class 0 is bonafide everywhere (logit order, focal alpha, scores)
        return 0 if self is Label.BONAFIDE else 1

    @classmethod
    def parse(cls, token: str) -> "Label":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise DataError(f"unknown label {token!r}") from None


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise DataError(f"waveform {self.id!r} must be 1-D, got shape {self.samples.shape}")
        if self.samples.size < 1:
            raise DataError(f"waveform {self.id!r} is empty")
        if not np.all(np.isfinite(self.samples)):
            raise DataError(f"waveform {self.id!r} contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def replace(self, samples: np.ndarray) -> "Waveform":
        return Waveform(samples, self.sample_rate, self.id)


@dataclass
class LabeledExample:
    waveform: Waveform
    label: Label


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: Path
    label: Label
    # path exactly as written in the file, kept for byte-stable re-serialization
    raw_path: str = field(default="", compare=False)


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    root: Path = Path(".")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def unresolved(self) -> list[ManifestEntry]:
        """Entries whose audio file does not exist."""
        return [e for e in self.entries if not e.path.is_file()]

    def to_text(self) -> str:
        return "".join(f"{e.id}\t{e.raw_path or e.path}\t{e.label.value}\n" for e in self.entries)


def load_manifest(path) -> Manifest:
    """Parse a ``<id>\\t<relative-path>\\t<label>`` manifest.

    Relative audio paths are resolved against the manifest's directory.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc

    root = path.parent
    entries = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.rstrip("\r\n").split("\t")
        if len(cols) != 3 or not cols[0] or not cols[1]:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated columns, got {line!r}")
        utt_id, rel, token = cols
        try:
            label = Label.parse(token)
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if utt_id in seen:
            raise DataError(f"duplicate id {utt_id}")
        seen.add(utt_id)
        p = Path(rel)
        entries.append(ManifestEntry(utt_id, p if p.is_absolute() else root / p, label, rel))
    return Manifest(entries, root)


def write_manifest(manifest: Manifest, path) -> None:
    Path(path).write_text(manifest.to_text(), encoding="utf-8")


def resample(x: np.ndarray, orig_rate: int, target_rate: int) -> np.ndarray:
    """Band-limited polyphase resampling (Kaiser-windowed sinc)."""
    if orig_rate == target_rate:
        return np.asarray(x)
    ratio = Fraction(int(target_rate), int(orig_rate))
    return signal.resample_poly(x, ratio.numerator, ratio.denominator, window=RESAMPLE_WINDOW)


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float64)
    raise DataError(f"unsupported WAV sample type {data.dtype}")


def load_waveform(path, target_rate: int = SAMPLE_RATE, id: str | None = None) -> Waveform:
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read WAV {path}: {exc}") from exc

    x = _to_float(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise DataError(f"{path}: zero-length audio")
    x = resample(x, rate, target_rate)
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path}: non-finite samples")
    return Waveform(x.astype(np.float32), target_rate, id if id is not None else path.stem)


def write_waveform(path, w: Waveform) -> None:
    wavfile.write(path, w.sample_rate, np.asarray(w.samples, dtype=np.float32))


def load_examples(manifest: Manifest, target_rate: int = SAMPLE_RATE) -> list[LabeledExample]:
    return [
        LabeledExample(load_waveform(e.path, target_rate, id=e.id), e.label)
        for e in manifest.entries
    ]
