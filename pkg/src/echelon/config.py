"""Experiment configuration: strict JSON with line-numbered diagnostics.

Schema (every key optional)::

    {
      "models": ["HYBRID", "GBT", "LNN", "LSTM", "DQN"],
      "seeds": [42, 43, ...],
      "noise_levels": [0.0, 0.1, 0.5, 1.0],
      "chain": {<ChainConfig field>: value, ...},
      "demand": {<DemandSpec field except seed>: value, ...},
      "hyperparams": {"LNN": {"neurons": 64, ...}, ...},
      "search_trials": 0,
      "weights": "default" | "custom",
      "out": "results"
    }

Unknown keys are rejected.  ``search_trials > 0`` tunes each model on the
first seed before the runs and reuses the winning configuration for all
seeds.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .demand import DemandSpec
from .evaluate.scoring import PRESETS
from .policies import KINDS, registry_build
from .simulator import ChainConfig

DEFAULT_MODELS = ("HYBRID", "GBT", "LNN", "LSTM", "DQN")
DEFAULT_SEEDS = tuple(range(42, 52))
DEFAULT_NOISE = (0.0, 0.1, 0.5, 1.0)


class ConfigError(ValueError):
    """Invalid configuration; the message carries ``line N:`` prefixes where known."""


@dataclass
class ExperimentConfig:
    models: list[str] = field(default_factory=lambda: list(DEFAULT_MODELS))
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    noise_levels: list[float] = field(default_factory=lambda: list(DEFAULT_NOISE))
    chain: dict = field(default_factory=dict)
    demand: dict = field(default_factory=dict)
    hyperparams: dict = field(default_factory=dict)
    search_trials: int = 0
    weights: str = "default"
    out: str = "results"

    def chain_config(self) -> ChainConfig:
        return ChainConfig().with_overrides(**self.chain)

    def demand_spec(self, seed: int) -> DemandSpec:
        cfg = self.chain_config()
        return DemandSpec(**{**self.demand, "seed": seed, "horizon": cfg.horizon})

    def params_for(self, kind: str) -> dict:
        return dict(self.hyperparams.get(kind, {}))


_CHAIN_KEYS = {f.name for f in fields(ChainConfig)}
_DEMAND_KEYS = {f.name for f in fields(DemandSpec)} - {"seed", "horizon"}
_TOP_KEYS = {f.name for f in fields(ExperimentConfig)}


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _err(text: str, key: str, msg: str) -> str:
    line = _line_of(text, key) if text else None
    return f"line {line}: {msg}" if line else msg


def validate(cfg: ExperimentConfig, text: str = "") -> ExperimentConfig:
    problems = []
    for m in cfg.models:
        if m.upper() not in KINDS:
            problems.append(_err(text, "models", f"unknown model {m!r} (known: {', '.join(KINDS)})"))
    cfg.models = [m.upper() for m in cfg.models]
    if not cfg.seeds or any(not isinstance(s, int) or s < 0 for s in cfg.seeds):
        problems.append(_err(text, "seeds", "seeds must be a non-empty list of non-negative integers"))
    if not cfg.noise_levels or any(not isinstance(v, (int, float)) or v < 0 for v in cfg.noise_levels):
        problems.append(_err(text, "noise_levels", "noise levels must be non-negative numbers"))
    if cfg.weights not in PRESETS:
        problems.append(_err(text, "weights", f"weights must be one of {sorted(PRESETS)}"))
    if not isinstance(cfg.search_trials, int) or cfg.search_trials < 0:
        problems.append(_err(text, "search_trials", "search_trials must be a non-negative integer"))
    for k in cfg.chain:
        if k not in _CHAIN_KEYS:
            problems.append(_err(text, k, f"unknown chain key {k!r}"))
    for k in cfg.demand:
        if k not in _DEMAND_KEYS:
            problems.append(_err(text, k, f"unknown demand key {k!r}"))
    if not problems:
        try:
            cfg.chain_config()
            cfg.demand_spec(cfg.seeds[0])
        except (TypeError, ValueError) as exc:
            problems.append(f"chain/demand: {exc}")
    for kind, hp in cfg.hyperparams.items():
        if kind.upper() not in KINDS:
            problems.append(_err(text, kind, f"hyperparams for unknown model {kind!r}"))
            continue
        if not isinstance(hp, dict):
            problems.append(_err(text, kind, f"hyperparams for {kind} must be an object"))
            continue
        try:
            registry_build(kind, {k: v for k, v in hp.items() if k != "safety_stock_base"})
        except ValueError as exc:
            key = next((k for k in hp if k in str(exc)), kind)
            problems.append(_err(text, key, f"{kind}: {exc}"))
        ss = hp.get("safety_stock_base")
        if ss is not None and not 5 <= ss <= 20:
            problems.append(_err(text, "safety_stock_base", f"{kind}: safety_stock_base {ss} outside 5..20"))
    cfg.hyperparams = {k.upper(): v for k, v in cfg.hyperparams.items()}
    if problems:
        raise ConfigError("\n".join(problems))
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: {exc.msg} (column {exc.colno})") from None
    if not isinstance(data, dict):
        raise ConfigError("line 1: top level must be a JSON object")
    unknown = [k for k in data if k not in _TOP_KEYS]
    if unknown:
        raise ConfigError("\n".join(_err(text, k, f"unknown key {k!r}") for k in unknown))
    try:
        cfg = ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return validate(cfg, text)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)
