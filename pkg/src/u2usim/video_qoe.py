"""Resolution ladder, frame transmission time, delay and the QoE reward."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Resolution:
    label: str
    pixels_x: int
    pixels_y: int
    min_rate: float  # bit/s

    @property
    def pixels(self) -> int:
        return self.pixels_x * self.pixels_y


DEFAULT_LADDER = (
    Resolution("144p", 256, 144, 80e3),
    Resolution("240p", 426, 240, 300e3),
    Resolution("360p", 640, 360, 700e3),
    Resolution("480p", 854, 480, 1000e3),
    Resolution("720p", 1280, 720, 2000e3),
    Resolution("1080p", 1920, 1080, 3000e3),
)


@dataclass(frozen=True)
class ResolutionLadder:
    entries: tuple[Resolution, ...] = DEFAULT_LADDER

    def __post_init__(self):
        if not self.entries:
            raise ValueError("resolution ladder is empty")
        for lo, hi in zip(self.entries, self.entries[1:]):
            if hi.min_rate <= lo.min_rate or hi.pixels <= lo.pixels:
                raise ValueError(f"ladder must be strictly increasing ({lo.label} -> {hi.label})")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> Resolution:
        return self.entries[i]

    @property
    def min_rates(self) -> np.ndarray:
        return np.array([e.min_rate for e in self.entries])

    @property
    def pixel_counts(self) -> np.ndarray:
        return np.array([e.pixels for e in self.entries], dtype=float)


@dataclass(frozen=True)
class QoeWeights:
    kappa: float = 1.0
    omega: float = 0.5
    frame_deadline: float = 1.0 / 30.0
    bits_per_pixel: float = 12.0

    def __post_init__(self):
        if not self.kappa > self.omega > 0:
            raise ValueError("QoE weights need kappa > omega > 0")
        if self.frame_deadline <= 0 or self.bits_per_pixel <= 0:
            raise ValueError("frame_deadline and bits_per_pixel must be positive")


def frame_tx_time(res: int, rate: float, w: QoeWeights,
                  ladder: ResolutionLadder = ResolutionLadder()) -> float:
    """Seconds to push one raw frame of ladder rung ``res`` at ``rate`` bit/s."""
    if rate <= 0:
        return math.inf
    return ladder[res].pixels * w.bits_per_pixel / rate


def slot_delay(times: Iterable[float], w: QoeWeights) -> float:
    """Lateness of the slowest frame past the deadline; never negative."""
    times = list(times)
    if not times:
        return 0.0
    return max(0.0, max(times) - w.frame_deadline)


def quality(rate: float, res: int, ladder: ResolutionLadder = ResolutionLadder()) -> float:
    if rate <= 0:
        return -math.inf
    return math.log(rate / ladder[res].min_rate)


def smoothness_penalty(per_ue: Sequence[tuple[float, float]]) -> float:
    """Sum of |q_now - q_prev| over UEs."""
    return float(sum(abs(now - prev) for now, prev in per_ue))


def qoe_reward(per_ue: Sequence[tuple[float, float]], delay: float, w: QoeWeights,
               n_areas: int, ues_per_area: int) -> float:
    """kappa/(I K) * sum(q_now - |q_now - q_prev|) - omega * delay."""
    n = n_areas * ues_per_area
    if n == 0 or not per_ue:
        return -w.omega * delay
    total = sum(now - abs(now - prev) for now, prev in per_ue)
    return w.kappa / n * total - w.omega * delay
