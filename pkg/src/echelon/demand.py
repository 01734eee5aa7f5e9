"""Consumer demand generation and robustness-test noise injection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Rng


@dataclass(frozen=True)
class DemandSpec:
    base: float = 50.0
    seasonal_amp: float = 20.0
    seasonal_period: float = 90.0
    weekly_amp: float = 5.0
    weekly_period: float = 7.0
    noise_sd: float = 3.0
    seed: int = 42
    horizon: int = 1095

    def __post_init__(self):
        for name in ("seasonal_amp", "weekly_amp", "noise_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least one day")
        if self.seasonal_period <= 0 or self.weekly_period <= 0:
            raise ValueError("periods must be positive")


def generate(spec: DemandSpec) -> np.ndarray:
    """Daily consumer demand: base + two sinusoids + Gaussian noise, floored at 0."""
    t = np.arange(spec.horizon, dtype=float)
    noise = Rng(spec.seed).gaussians(spec.horizon, 0.0, spec.noise_sd)
    d = (spec.base
         + spec.seasonal_amp * np.sin(2 * math.pi * t / spec.seasonal_period)
         + spec.weekly_amp * np.sin(2 * math.pi * t / spec.weekly_period)
         + noise)
    return np.maximum(d, 0.0)


def inject_noise(series, level: float, rng: Rng) -> np.ndarray:
    """Add N(0, level * std(series)) and clamp to ``[0, 2 * max(series)]``.

    The std and cap come from the clean input, so apply this to the segment
    being perturbed (the validation demand).
    """
    if level < 0:
        raise ValueError("noise level must be non-negative")
    series = np.asarray(series, dtype=float)
    if level == 0 or len(series) == 0:
        return series.copy()
    sd = level * float(series.std())
    noisy = series + rng.gaussians(len(series), 0.0, sd)
    return np.clip(noisy, 0.0, 2.0 * float(series.max()))


def to_csv(series) -> str:
    lines = ["t,demand"]
    lines += [f"{t},{float(v)!r}" for t, v in enumerate(series)]
    return "\n".join(lines) + "\n"
