"""Uniform random hyperparameter search maximizing manufacturer profit.

The objective of a trial is the layer-3 cumulative profit over the
validation days.  The best trial wins by (objective descending, trial index
ascending), which keeps the winner independent of execution order.
"""
from __future__ import annotations

import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Rng
from .demand import DemandSpec
from .policies import build_layer_models
from .simulator import ChainConfig, run_episode

SEARCH_STREAM = 0x5EA7C4


def grid(lo, hi, step=1):
    return ("grid", lo, hi, step)


def log_uniform(lo, hi):
    return ("log", lo, hi)


def fixed(value):
    return ("fixed", value)


_LR = log_uniform(1e-5, 1e-3)
_SS = grid(5, 20)
_GBT = {"n_trees": grid(100, 300), "max_depth": grid(3, 7), "eta": log_uniform(0.01, 0.3)}

# full ranges of every tunable
FULL_SPACE = {
    "SMA": {"safety_stock_base": _SS},
    "LNN": {"neurons": grid(64, 1024, 64), "lr": _LR, "batch_size": grid(4, 8, 4),
            "epochs": grid(50, 100), "safety_stock_base": _SS},
    "GBT": {**_GBT, "safety_stock_base": _SS},
    "HYBRID": {"neurons": grid(64, 1024, 64), "lr": _LR, "batch_size": grid(4, 8, 4),
               "epochs": grid(50, 100), **_GBT, "safety_stock_base": _SS},
    "LSTM": {"hidden": grid(64, 256, 64), "layers": grid(1, 3), "lr": _LR,
             "batch_size": grid(4, 8, 4), "epochs": grid(50, 100), "safety_stock_base": _SS},
    "DQN": {"hidden": grid(64, 256, 64), "lr": _LR, "episodes": grid(100, 200),
            "safety_stock_base": _SS},
}

# laptop budget: small networks, the minimum tree and epoch counts
_DESK_GBT = {"n_trees": fixed(100), "max_depth": grid(3, 7), "eta": log_uniform(0.01, 0.3)}
DESK_SPACE = {
    "SMA": {"safety_stock_base": _SS},
    "LNN": {"neurons": grid(64, 128, 64), "lr": _LR, "batch_size": grid(4, 8, 4),
            "epochs": fixed(50), "safety_stock_base": _SS},
    "GBT": {**_DESK_GBT, "safety_stock_base": _SS},
    "HYBRID": {"neurons": grid(64, 128, 64), "lr": _LR, "batch_size": grid(4, 8, 4),
               "epochs": fixed(50), **_DESK_GBT, "safety_stock_base": _SS},
    "LSTM": {"hidden": grid(64, 128, 64), "layers": grid(1, 2), "lr": _LR,
             "batch_size": grid(4, 8, 4), "epochs": fixed(50), "safety_stock_base": _SS},
    "DQN": {"hidden": grid(64, 128, 64), "lr": _LR, "episodes": fixed(100),
            "safety_stock_base": _SS},
}


def sample_value(dist, rng: Rng):
    kind = dist[0]
    if kind == "fixed":
        return dist[1]
    if kind == "grid":
        _, lo, hi, step = dist
        return lo + step * rng.integers(0, (hi - lo) // step)
    if kind == "log":
        _, lo, hi = dist
        return float(math.exp(math.log(lo) + rng.uniform() * (math.log(hi) - math.log(lo))))
    raise ValueError(f"unknown distribution {kind!r}")


def in_space(params: dict, space: dict) -> bool:
    for name, dist in space.items():
        v = params.get(name)
        if dist[0] == "fixed" and v != dist[1]:
            return False
        if dist[0] == "grid":
            _, lo, hi, step = dist
            if v is None or not lo <= v <= hi or (v - lo) % step:
                return False
        if dist[0] == "log" and (v is None or not dist[1] <= v <= dist[2]):
            return False
    return True


def sample_config(kind: str, rng: Rng, space: dict | None = None) -> dict:
    space = (space or DESK_SPACE)[kind.upper()]
    return {name: sample_value(dist, rng) for name, dist in space.items()}


def kind_tag(kind: str) -> int:
    return zlib.crc32(kind.upper().encode())


def evaluate_config(kind: str, params: dict, seed: int, cfg: ChainConfig, spec: DemandSpec,
                    model_seed: int | None = None, noise_level: float = 0.0):
    """Run one episode with ``params``; returns the RunResult."""
    params = dict(params)
    ss = params.pop("safety_stock_base", None)
    if ss is not None:
        cfg = cfg.with_overrides(safety_stock_base=float(ss))
    models = build_layer_models(kind, params, seed if model_seed is None else model_seed)
    return run_episode(cfg, spec, models, noise_level, name=kind.upper())


def objective(run) -> float:
    return float(np.sum(run.validation(3, "profit")))


@dataclass
class SearchResult:
    kind: str
    best_trial: int
    best_params: dict
    best_objective: float
    log: list = field(default_factory=list)

    def log_json(self) -> str:
        return json.dumps(self.log, indent=2, sort_keys=True)


def _trial(args):
    kind, trial, params, seed, cfg, spec = args
    run = evaluate_config(kind, params, seed, cfg, spec,
                          model_seed=int(Rng.derive(seed, SEARCH_STREAM, trial).next_u64() >> 1))
    return objective(run)


def run_search(kind: str, trials: int = 10, seed: int = 42, cfg: ChainConfig | None = None,
               spec: DemandSpec | None = None, space: dict | None = None,
               jobs: int = 1) -> SearchResult:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    kind = kind.upper()
    cfg = cfg or ChainConfig()
    spec = spec or DemandSpec(seed=seed, horizon=cfg.horizon)
    rng = Rng.derive(seed, SEARCH_STREAM, kind_tag(kind))
    configs = [sample_config(kind, rng, space) for _ in range(trials)]
    jobs_args = [(kind, i, p, seed, cfg, spec) for i, p in enumerate(configs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(_trial, jobs_args))
    else:
        scores = [_trial(a) for a in jobs_args]
    log = [{"trial": i, "params": p, "objective": s} for i, (p, s) in enumerate(zip(configs, scores))]
    best = min(range(trials), key=lambda i: (-scores[i], i))
    return SearchResult(kind, best, configs[best], scores[best], log)
