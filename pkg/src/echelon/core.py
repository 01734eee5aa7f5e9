"""Deterministic randomness, feature engineering, scaling and windowing.

Everything random in the package is drawn from :class:`Rng`, a SplitMix64
stream.  The algorithm and its constants are fixed so that a seed produces
the same numbers in any language that implements the same recipe:

* state advances by ``0x9E3779B97F4A7C15`` (mod 2**64) per draw;
* output is the SplitMix64 finalizer of the new state;
* a uniform is the top 53 bits of the output times ``2**-53``;
* Gaussians use Box-Muller on two consecutive uniforms ``u1, u2`` with
  ``r = sqrt(-2 ln(1 - u1))``; ``r cos(2 pi u2)`` is returned first and
  ``r sin(2 pi u2)`` is kept for the next call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_PI = 2.0 * math.pi

N_FEATURES = 10
WINDOW = 10
HORIZON = 7
VOLATILITY_WINDOW = 5
SEASONAL_PERIOD = 90
NORMAL_TIME = 1095

FEATURE_NAMES = (
    "demand",
    "order_lag1",
    "order_lag2",
    "inventory_lag1",
    "inventory_lag2",
    "sales_lag1",
    "order_std5",
    "demand_std5",
    "seasonal_index",
    "normalized_time",
)
ORDER_STD_INDEX = FEATURE_NAMES.index("order_std5")


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64, matching the masked int path
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """Seeded SplitMix64 generator.  Single owner; not thread-safe."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64
        self._spare: float | None = None

    @classmethod
    def derive(cls, seed: int, *tags: int) -> "Rng":
        """Independent stream keyed by ``seed`` and integer ``tags``."""
        z = mix64(int(seed) ^ 0x5EED5EED5EED5EED)
        for tag in tags:
            z = mix64(z ^ mix64(int(tag) + GOLDEN_GAMMA))
        return cls(z)

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` uniforms, bitwise equal to ``n`` calls of :meth:`uniform`."""
        if n <= 0:
            return np.zeros(0)
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN_GAMMA)
        states = np.uint64(self.state) + steps
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        out = _mix64_array(states) >> np.uint64(11)
        return out.astype(np.float64) * 2.0**-53

    def gaussian(self, mean: float = 0.0, sd: float = 1.0) -> float:
        if sd < 0:
            raise ValueError(f"negative standard deviation: {sd}")
        if self._spare is not None:
            z, self._spare = self._spare, None
        else:
            u1 = self.uniform()
            u2 = self.uniform()
            r = math.sqrt(-2.0 * math.log(1.0 - u1))
            z = r * math.cos(_TWO_PI * u2)
            self._spare = r * math.sin(_TWO_PI * u2)
        return mean + sd * z

    def gaussians(self, n: int, mean: float = 0.0, sd: float = 1.0) -> np.ndarray:
        """``n`` Gaussians, bitwise equal to ``n`` calls of :meth:`gaussian`."""
        if sd < 0:
            raise ValueError(f"negative standard deviation: {sd}")
        out = np.empty(n)
        i = 0
        if n > 0 and self._spare is not None:
            out[0], self._spare = self._spare, None
            i = 1
        pairs = (n - i + 1) // 2
        u = self.uniforms(2 * pairs)
        log, sqrt, cos, sin = math.log, math.sqrt, math.cos, math.sin
        for k in range(pairs):
            u1, u2 = u[2 * k], u[2 * k + 1]
            r = sqrt(-2.0 * log(1.0 - u1))
            out[i] = r * cos(_TWO_PI * u2)
            if i + 1 < n:
                out[i + 1] = r * sin(_TWO_PI * u2)
            else:
                self._spare = r * sin(_TWO_PI * u2)
            i += 2
        return mean + sd * out

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in ``[low, high]`` inclusive."""
        return low + min(int(self.uniform() * (high - low + 1)), high - low)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = np.arange(n)
        u = self.uniforms(max(n - 1, 0))
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


@dataclass
class MinMaxScaler:
    """Per-column min-max scaling fit on a training block.

    Values outside the fitted range are extrapolated linearly, not clamped.
    A degenerate column (max == min) maps to 0.
    """

    min: np.ndarray
    max: np.ndarray

    @classmethod
    def fit(cls, data) -> "MinMaxScaler":
        data = np.asarray(data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.shape[0] == 0:
            raise ValueError("cannot fit a scaler on an empty training range")
        return cls(data.min(axis=0), data.max(axis=0))

    @property
    def span(self) -> np.ndarray:
        return self.max - self.min

    def transform(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (data - self.min) / safe, 0.0)

    def inverse_transform(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        return data * self.span + self.min


def scaler_fit_transform(data, train_rows) -> tuple[MinMaxScaler, np.ndarray]:
    """Fit on ``train_rows`` (a slice, range or index array) and transform every row."""
    data = np.asarray(data, dtype=float)
    if isinstance(train_rows, range):
        train_rows = np.arange(train_rows.start, train_rows.stop, train_rows.step)
    train = data[train_rows]
    if len(train) == 0:
        raise ValueError("empty training range")
    scaler = MinMaxScaler.fit(train)
    return scaler, scaler.transform(data)


def _pstd(values) -> float:
    n = len(values)
    if n <= 1:
        return 0.0
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / n)


def build_features(demand, orders, inventory, sales, t: int,
                   normal_time: int = NORMAL_TIME) -> np.ndarray:
    """Raw 10-dimensional feature vector for one layer at day ``t``.

    ``demand`` must hold days ``0..t``; ``orders``, ``inventory`` and
    ``sales`` need days ``0..t-1`` only (longer sequences are cut).  Lags past
    the start of history are 0.  Order volatility is the population std of the
    last five placed orders (days ``t-5..t-1``); demand volatility covers
    days ``t-4..t``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")

    def lag(series, k):
        return float(series[t - k]) if t - k >= 0 else 0.0

    lo = max(0, t - VOLATILITY_WINDOW)
    recent_orders = [float(v) for v in orders[lo:t]]
    recent_demand = [float(v) for v in demand[max(0, t - VOLATILITY_WINDOW + 1):t + 1]]
    return np.array([
        float(demand[t]),
        lag(orders, 1),
        lag(orders, 2),
        lag(inventory, 1),
        lag(inventory, 2),
        lag(sales, 1),
        _pstd(recent_orders),
        _pstd(recent_demand),
        math.sin(_TWO_PI * t / SEASONAL_PERIOD),
        t / normal_time,
    ])


@dataclass
class WindowBatch:
    """Sliding windows of features with the following ``horizon`` demands.

    ``X`` has shape (n, window, 10), ``y`` (n, horizon); ``end_day[k]`` is the
    day of the last feature row of sample ``k``.
    """

    X: np.ndarray
    y: np.ndarray
    end_day: np.ndarray

    def __len__(self) -> int:
        return len(self.X)

    @property
    def last(self) -> np.ndarray:
        """Feature row of the final day of every window, shape (n, 10)."""
        return self.X[:, -1, :]


def make_windows(features, demand, window: int = WINDOW, horizon: int = HORIZON) -> WindowBatch:
    """One sample per start index ``s``: features ``s..s+W-1``, targets ``s+W..s+W+H-1``."""
    features = np.asarray(features, dtype=float)
    demand = np.asarray(demand, dtype=float)
    n = min(len(features), len(demand))
    count = n - window - horizon + 1
    dim = features.shape[1] if features.ndim == 2 else N_FEATURES
    if count <= 0:
        return WindowBatch(np.zeros((0, window, dim)), np.zeros((0, horizon)),
                           np.zeros(0, dtype=int))
    starts = np.arange(count)
    X = np.stack([features[s:s + window] for s in starts])
    y = np.stack([demand[s + window:s + window + horizon] for s in starts])
    return WindowBatch(X, y, starts + window - 1)
