from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AugmentationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentationSchedule:
    p0: float = 0.5
    p_max: float = 0.9
    kappa0: float = 1.0
    kappa_max: float = 1.8
    ramp_epochs: int = 10

    def __post_init__(self):
        if not 0.0 <= self.p0 <= self.p_max <= 1.0:
            raise AugmentationConfigError(f"need 0 <= p0 <= p_max <= 1, got {self.p0}, {self.p_max}")
        if self.kappa0 > self.kappa_max:
            raise AugmentationConfigError(f"kappa0 {self.kappa0} exceeds kappa_max {self.kappa_max}")
        if self.ramp_epochs < 1:
            raise AugmentationConfigError("ramp_epochs must be >= 1")


def schedule_at(schedule: AugmentationSchedule, epoch: int) -> tuple[float, float]:
    """Linearly annealed ``(p, kappa)`` for a 0-based epoch, clamped after the ramp."""
    if epoch >= schedule.ramp_epochs:
        return schedule.p_max, schedule.kappa_max
    t = max(epoch, 0) / schedule.ramp_epochs
    return (
        schedule.p0 + (schedule.p_max - schedule.p0) * t,
        schedule.kappa0 + (schedule.kappa_max - schedule.kappa0) * t,
    )


@dataclass
class AugmentationState:
    p: float
    kappa: float
    rng: np.random.Generator
    schedule: AugmentationSchedule = field(default_factory=AugmentationSchedule)

    @classmethod
    def at_epoch(cls, schedule: AugmentationSchedule, epoch: int, rng) -> "AugmentationState":
        p, kappa = schedule_at(schedule, epoch)
        return cls(p, kappa, np.random.default_rng(rng), schedule)

    @property
    def intensity(self) -> float:
        """Position of kappa inside [kappa0, kappa_max], mapped to [0, 1]."""
        lo, hi = self.schedule.kappa0, self.schedule.kappa_max
        if hi <= lo:
            return 0.0
        return float(np.clip((self.kappa - lo) / (hi - lo), 0.0, 1.0))


def lerp_window(start: tuple[float, float], end: tuple[float, float], t: float) -> tuple[float, float]:
    return (
        start[0] + (end[0] - start[0]) * t,
        start[1] + (end[1] - start[1]) * t,
    )


def uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))
