"""Global min-max normalization and weighted composite scores."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

SCORE_METRICS = ("profit", "turnover", "service", "cost", "mae")
# metric name in a LayerMetrics row for each score component
METRIC_FIELD = {"profit": "cum_profit", "turnover": "turnover", "service": "service_level",
                "cost": "cost", "mae": "mae"}
LAYER_WEIGHTS = (0.4, 0.3, 0.3)


@dataclass(frozen=True)
class ScoreWeights:
    profit: float
    turnover: float
    service: float
    cost: float
    mae: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in SCORE_METRICS}


PRESETS = {
    "default": ScoreWeights(0.5, 0.2, 0.2, -0.1, -0.1),
    "custom": ScoreWeights(0.4, 0.1, 0.3, -0.1, -0.1),
}


def weights_for(name: str) -> ScoreWeights:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown weight preset {name!r}; choose from {sorted(PRESETS)}") from None


def normalize_global(values) -> np.ndarray:
    """Min-max to [0, 1] over all given values; equal extrema map everything to 0.

    NaN entries (a metric a model cannot produce) are imputed as the worst
    normalized value, 1, since cost-like metrics enter with negative weight.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("normalize_global needs at least one value")
    finite = x[np.isfinite(x)]
    if finite.size == 0:
        return np.ones_like(x)
    lo, hi = float(finite.min()), float(finite.max())
    if hi == lo:
        out = np.zeros_like(x)
    else:
        out = (x - lo) / (hi - lo)
    return np.where(np.isnan(x), 1.0, out)


def layer_score(normalized: dict, w: ScoreWeights) -> float:
    missing = [k for k in SCORE_METRICS if k not in normalized]
    if missing:
        raise KeyError(f"missing metrics: {missing}")
    return float(sum(getattr(w, k) * float(normalized[k]) for k in SCORE_METRICS))


def total_score(layer_scores, weights=LAYER_WEIGHTS) -> float:
    if len(layer_scores) != len(weights):
        raise ValueError(f"need {len(weights)} layer scores")
    return float(sum(a * b for a, b in zip(weights, layer_scores)))


@dataclass
class ScoreRow:
    model: str
    seed: int
    noise: float
    layer_scores: tuple[float, float, float]
    total: float


def score_table(rows, w: ScoreWeights) -> list[ScoreRow]:
    """Score every (model, seed, noise) from per-layer metric rows.

    Each metric is normalized over all rows at once (every model, run and
    layer), then combined per layer and across layers.
    """
    rows = list(rows)
    if not rows:
        return []
    norm = {k: normalize_global([getattr(r, METRIC_FIELD[k]) for r in rows]) for k in SCORE_METRICS}
    by_run: dict[tuple, dict[int, float]] = defaultdict(dict)
    for i, r in enumerate(rows):
        by_run[(r.model, r.seed, r.noise)][r.layer] = layer_score({k: norm[k][i] for k in SCORE_METRICS}, w)
    out = []
    for (model, seed, noise), layers in by_run.items():
        if sorted(layers) != [1, 2, 3]:
            continue  # incomplete run: skipped rather than scored on partial data
        ls = (layers[1], layers[2], layers[3])
        out.append(ScoreRow(model, seed, noise, ls, total_score(ls)))
    return out


def mean_scores(table: list[ScoreRow]) -> dict[str, float]:
    acc: dict[str, list[float]] = defaultdict(list)
    for r in table:
        acc[r.model].append(r.total)
    return {m: float(np.mean(v)) for m, v in acc.items()}


def ranking(table: list[ScoreRow]) -> list[str]:
    means = mean_scores(table)
    return sorted(means, key=lambda m: (-means[m], m))
