"""Discrete anxiety scale, desired-level schedule, and the Gaussian-shaped reward.

Reward is an affine-scaled Gaussian of the distance between estimated and
desired anxiety: 1 at a perfect match, falling off toward -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MAX_LEVEL = 10


def check_level(level: int) -> int:
    if not isinstance(level, int) or not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"anxiety level {level!r} outside 0..{MAX_LEVEL}")
    return level


@dataclass(frozen=True)
class RewardParams:
    # Width in anxiety levels. 2.0 keeps one-off estimates rewarding
    # (~0.76) while 4+ levels of error are strongly negative.
    sigma: float = 2.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def reward(current: int, desired: int, params: RewardParams = RewardParams()) -> float:
    """2*exp(-(current-desired)^2 / (2 sigma^2)) - 1, in (-1, 1]."""
    check_level(current)
    check_level(desired)
    delta = current - desired
    return 2.0 * math.exp(-(delta * delta) / (2.0 * params.sigma * params.sigma)) - 1.0


@dataclass(frozen=True)
class Segment:
    target: int
    duration_s: float

    def __post_init__(self) -> None:
        check_level(self.target)
        if not self.duration_s > 0:
            raise ValueError(f"segment duration must be positive, got {self.duration_s}")


@dataclass(frozen=True)
class DesiredSchedule:
    """Ordered target segments covering one anxious phase."""

    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("schedule needs at least one segment")

    @property
    def total_duration_s(self) -> float:
        return sum(seg.duration_s for seg in self.segments)

    @classmethod
    def from_pairs(cls, pairs) -> "DesiredSchedule":
        return cls(tuple(Segment(int(t), float(d)) for t, d in pairs))

    def to_json(self) -> list[dict]:
        return [{"target": s.target, "duration_s": s.duration_s} for s in self.segments]

    @classmethod
    def from_json(cls, data) -> "DesiredSchedule":
        return cls(tuple(Segment(int(d["target"]), float(d["duration_s"])) for d in data))


# 280-s anxious phase split evenly between the low (3) and high (7) targets.
DEFAULT_SCHEDULE = DesiredSchedule.from_pairs([(3, 140.0), (7, 140.0)])


def desired_at(schedule: DesiredSchedule, t: float) -> int:
    """Target of the segment containing t; segments are left-closed."""
    if t < 0:
        raise ValueError(f"t={t} before schedule start")
    elapsed = 0.0
    for seg in schedule.segments:
        elapsed += seg.duration_s
        if t < elapsed:
            return seg.target
    raise ValueError(f"t={t} beyond schedule end {elapsed}")


def segment_index_at(schedule: DesiredSchedule, t: float) -> int:
    """Index of the segment containing t (same interval rule as desired_at)."""
    if t < 0:
        raise ValueError(f"t={t} before schedule start")
    elapsed = 0.0
    for i, seg in enumerate(schedule.segments):
        elapsed += seg.duration_s
        if t < elapsed:
            return i
    raise ValueError(f"t={t} beyond schedule end {elapsed}")
