"""Incumbent occupancy, sensing observations and noise-driven link failure."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

IDLE = 0
BUSY = 1


class ChannelKind(str, Enum):
    AWGN = "awgn"
    RAYLEIGH = "rayleigh"


class FadingGranularity(str, Enum):
    PER_SLOT = "per-slot"
    PER_FRAME = "per-frame"


@dataclass(frozen=True)
class ChannelModel:
    """Sensing model: idle values are noise, busy values are ``h*s + noise``.

    ``h`` is 1 for AWGN and Rayleigh distributed with ``E[h^2] = rayleigh_scale``
    otherwise.
    """

    kind: ChannelKind = ChannelKind.AWGN
    noise_mean: float = 0.0
    noise_var: float = 1.0
    signal_mean: float = 3.0
    signal_var: float = 1.0
    rayleigh_scale: float = 1.0
    fading_granularity: FadingGranularity = FadingGranularity.PER_SLOT

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        object.__setattr__(self, "fading_granularity", FadingGranularity(self.fading_granularity))
        if self.noise_var <= 0 or self.signal_var <= 0:
            raise ValueError("variances must be positive")
        if self.rayleigh_scale <= 0:
            raise ValueError("rayleigh_scale must be positive")

    @classmethod
    def awgn(cls, **kw) -> "ChannelModel":
        return cls(ChannelKind.AWGN, **kw)

    @classmethod
    def rayleigh(cls, **kw) -> "ChannelModel":
        return cls(ChannelKind.RAYLEIGH, **kw)

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.noise_var)

    def draw_gains(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind is ChannelKind.AWGN:
            return np.ones(count)
        # Rayleigh(sigma) has E[h^2] = 2 sigma^2
        return rng.rayleigh(math.sqrt(self.rayleigh_scale / 2.0), count)


@dataclass(frozen=True)
class OccupancyProcess:
    p_busy: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p_busy <= 1.0:
            raise ValueError(f"p_busy must be in [0, 1], got {self.p_busy}")


@dataclass(frozen=True)
class TransmissionModel:
    """A transmission unit fails when its noise draw exceeds ``threshold``."""

    threshold: float = 5.0
    noise_std: float = 1.0


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def draw_occupancy(process: OccupancyProcess, num_slots: int, seed) -> np.ndarray:
    """Independent busy(1)/idle(0) label per slot."""
    if num_slots < 0:
        raise ValueError("num_slots must be >= 0")
    return (_rng(seed).random(num_slots) < process.p_busy).astype(np.int64)


def sense_slots(model: ChannelModel, truths, count: int, seed, frame_gain: float | None = None) -> np.ndarray:
    """Sensing values for many slots at once, shape ``(len(truths), count)``.

    With per-slot fading every busy slot gets its own gain; with per-frame
    fading all slots share ``frame_gain`` (drawn here if not given).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    truths = np.asarray(truths, dtype=np.int64).reshape(-1)
    rng = _rng(seed)
    n = truths.shape[0]
    values = rng.normal(model.noise_mean, model.noise_std, (n, count))
    signal = rng.normal(model.signal_mean, math.sqrt(model.signal_var), (n, count))
    if model.kind is ChannelKind.RAYLEIGH:
        if model.fading_granularity is FadingGranularity.PER_SLOT:
            gains = model.draw_gains(n, rng)
        else:
            g = frame_gain if frame_gain is not None else model.draw_gains(1, rng)[0]
            gains = np.full(n, g)
        signal *= gains[:, None]
    values += signal * truths[:, None]
    return values


def sense(model: ChannelModel, truth: int, count: int, seed) -> np.ndarray:
    """``count`` power levels observed during one slot with status ``truth``."""
    return sense_slots(model, [truth], count, seed)[0]


def unit_failure_probability(model: TransmissionModel) -> float:
    """P(noise > threshold) for a single transmission unit."""
    if math.isinf(model.threshold):
        return 0.0 if model.threshold > 0 else 1.0
    return float(ndtr(-model.threshold / model.noise_std))


def transmission_failure_probability(model: TransmissionModel, tx_duration: int) -> float:
    """Probability that at least one of ``tx_duration`` units fails."""
    if tx_duration < 1:
        raise ValueError("tx_duration must be >= 1")
    q = unit_failure_probability(model)
    # 1 - (1 - q)^d without cancellation for tiny q
    return float(-math.expm1(tx_duration * math.log1p(-q))) if q < 1 else 1.0
