"""Equal error rate and score-file I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DataError, Label

SCORE_HEADER = "id\tscore\tlabel"


@dataclass(frozen=True)
class ScoreRecord:
    id: str
    score: float
    label: Label


@dataclass
class ScoreSet:
    records: list[ScoreRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Bonafide and spoof score arrays."""
        bona = np.array([r.score for r in self.records if r.label is Label.BONAFIDE], dtype=float)
        spoof = np.array([r.score for r in self.records if r.label is Label.SPOOF], dtype=float)
        return bona, spoof


def error_curve(bonafide: np.ndarray, spoof: np.ndarray):
    """FRR/FAR staircase as the threshold sweeps upward past each score.

    Ties between classes are resolved pessimistically: at equal score the
    bonafide trial is rejected before the spoof trial stops being accepted.
    Returns ``(frr, far, thresholds)`` with one more point than trials.
    """
    scores = np.concatenate([bonafide, spoof])
    is_spoof = np.concatenate([np.zeros(bonafide.size), np.ones(spoof.size)])
    order = np.lexsort((is_spoof, scores))
    scores, is_spoof = scores[order], is_spoof[order]

    frr = np.concatenate([[0.0], np.cumsum(1.0 - is_spoof) / bonafide.size])
    far = np.concatenate([[1.0], 1.0 - np.cumsum(is_spoof) / spoof.size])
    # point k sits between sorted scores k-1 and k
    gaps = np.diff(scores)
    pad = max(float(np.max(gaps)) if gaps.size else 0.0, 1.0)
    thresholds = np.concatenate([[scores[0] - pad], (scores[:-1] + scores[1:]) / 2, [scores[-1] + pad]])
    return frr, far, thresholds


def compute_eer(scores: ScoreSet | tuple[np.ndarray, np.ndarray]) -> tuple[float, float]:
    """EER (a fraction) and its threshold; higher scores mean more bonafide."""
    bona, spoof = scores.arrays() if isinstance(scores, ScoreSet) else map(np.asarray, scores)
    if bona.size == 0 or spoof.size == 0:
        raise ValueError("EER needs at least one bonafide and one spoof score")
    if not (np.all(np.isfinite(bona)) and np.all(np.isfinite(spoof))):
        raise ValueError("scores must be finite")
    frr, far, thr = error_curve(bona, spoof)
    diff = frr - far
    k = int(np.argmax(diff >= 0))
    if diff[k] == 0 or k == 0:
        return float(frr[k]), float(thr[k])
    a = -diff[k - 1] / (diff[k] - diff[k - 1])
    eer = frr[k - 1] + a * (frr[k] - frr[k - 1])
    return float(eer), float(thr[k - 1] + a * (thr[k] - thr[k - 1]))


def format_eer(eer: float) -> str:
    return f"{100.0 * eer:.2f}"


def write_scores(scores: ScoreSet, path) -> None:
    path = Path(path)
    lines = [SCORE_HEADER] + [f"{r.id}\t{r.score:.6g}\t{r.label.value}" for r in scores.records]
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write scores to {path}: {exc}") from exc


def read_scores(path) -> ScoreSet:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read scores from {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or (lineno == 1 and line == SCORE_HEADER):
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 columns")
        records.append(ScoreRecord(cols[0], float(cols[1]), Label.parse(cols[2])))
    return ScoreSet(records)
