"""Experiment orchestration shared by the command line and the acceptance suite."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .core import FEATURE_NAMES, HORIZON, WINDOW, MinMaxScaler, build_features
from .gbt.trees import ensemble_arrays, ensemble_from_arrays
from .neural import LiquidCell, checkpoint
from .policies import GbtForecaster, HybridForecaster, build_layer_models, hybrid_recipe
from .search import SearchResult, run_search
from .simulator import RunResult, run_episode

TREE_KINDS = ("GBT", "HYBRID")


def run_name(kind: str, seed: int, noise: float) -> str:
    return f"{kind}_seed{seed}_noise{noise:g}"


_NAME_RE = re.compile(r"^(?P<kind>[A-Z]+)_seed(?P<seed>\d+)_noise(?P<noise>[0-9.e+-]+)$")


def parse_run_name(stem: str) -> tuple[str, int, float] | None:
    m = _NAME_RE.match(stem)
    if not m:
        return None
    return m["kind"], int(m["seed"]), float(m["noise"])


@dataclass
class JobResult:
    kind: str
    seed: int
    runs: list[RunResult]
    models: list


def run_job(kind: str, params: dict, seed: int, exp: ExperimentConfig) -> JobResult:
    """Fit once on the clean training phase, then replay validation at every noise level.

    Training demand is never perturbed, so one fitted model set serves all
    noise levels.
    """
    cfg = exp.chain_config()
    params = dict(params)
    ss = params.pop("safety_stock_base", None)
    if ss is not None:
        cfg = cfg.with_overrides(safety_stock_base=float(ss))
    models = build_layer_models(kind, params, seed)
    spec = exp.demand_spec(seed)
    runs = [run_episode(cfg, spec, models, float(noise), name=kind) for noise in exp.noise_levels]
    return JobResult(kind, seed, runs, models)


def tune(exp: ExperimentConfig, kind: str, jobs: int = 1) -> SearchResult | None:
    if exp.search_trials <= 0:
        return None
    seed = exp.seeds[0]
    return run_search(kind, exp.search_trials, seed, exp.chain_config(), exp.demand_spec(seed),
                      jobs=jobs)


def layer_features(run: RunResult, layer: int) -> np.ndarray:
    """Rebuild the raw feature rows of one layer from its recorded series."""
    s = run.layers[layer - 1]
    demand, orders, inv, sales = s["demand"], s["orders"], s["inventory"], s["sales"]
    return np.array([build_features(demand[:t + 1], orders[:t], inv[:t], sales[:t], t, run.horizon)
                     for t in range(run.horizon)])


def validation_windows(run: RunResult, layer: int, scaler: MinMaxScaler, stride: int = 1):
    feats = scaler.transform(layer_features(run, layer))
    ends = np.arange(run.train_days, run.horizon, stride)
    X = np.stack([feats[t - WINDOW + 1:t + 1] for t in ends])
    return X, ends


def save_tree_checkpoint(path, model) -> None:
    arrays = {"x_min": model.x_scaler.min, "x_max": model.x_scaler.max,
              "y_min": model.y_scaler.min, "y_max": model.y_scaler.max,
              "background": model.background}
    meta = {"kind": model.kind, "ensembles": []}
    ensembles = model.ensembles if isinstance(model, GbtForecaster) else model.model.ensembles
    for k, e in enumerate(ensembles):
        a, m = ensemble_arrays(e, prefix=f"e{k}")
        arrays.update(a)
        meta["ensembles"].append(m)
    if isinstance(model, HybridForecaster):
        cell = model.model.cell
        for name, v in cell.params().items():
            arrays[f"cell.{name}"] = v
        meta.update(alpha_base=cell.alpha_base, beta_vol=cell.beta_vol, tau=cell.tau, dt=cell.dt,
                    full_state=model.full_state)
    checkpoint.save(path, arrays, meta)


class LoadedTreeModel:
    """Read-only tree model rebuilt from a checkpoint (enough to explain and predict)."""

    def __init__(self, arrays: dict, meta: dict):
        self.kind = meta["kind"]
        self.x_scaler = MinMaxScaler(arrays["x_min"], arrays["x_max"])
        self.y_scaler = MinMaxScaler(arrays["y_min"], arrays["y_max"])
        self.background = arrays["background"]
        self.ensembles = [ensemble_from_arrays(arrays, m, prefix=f"e{k}")
                          for k, m in enumerate(meta["ensembles"])]
        self.cell = None
        self.full_state = bool(meta.get("full_state", False))
        if self.kind == "HYBRID":
            p = {k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith("cell.")}
            self.cell = LiquidCell(**p, alpha_base=meta["alpha_base"], beta_vol=meta["beta_vol"],
                                   tau=meta["tau"], dt=meta["dt"])

    def design(self, X) -> np.ndarray:
        if self.cell is None:
            return np.asarray(X)[:, -1, :]
        return hybrid_recipe(self.cell, np.asarray(X), self.full_state)[0]

    def margin(self, X, k: int) -> np.ndarray:
        """External margin of ensemble ``k`` (the LNN forecast for the hybrid, else 0)."""
        if self.cell is None:
            return np.zeros(len(X))
        return hybrid_recipe(self.cell, np.asarray(X), self.full_state)[1][:, k]

    def names(self) -> list[str]:
        names = list(FEATURE_NAMES)
        if self.cell is not None:
            n = self.cell.neurons * (WINDOW if self.full_state else 1)
            names += [f"lnn_state_{i}" for i in range(n)]
            names += [f"lnn_forecast_d{k + 1}" for k in range(HORIZON)]
        return names


def load_tree_checkpoint(path) -> LoadedTreeModel:
    arrays, meta = checkpoint.load(path)
    return LoadedTreeModel(arrays, meta)


def checkpoint_path(out: Path, kind: str, seed: int, layer: int) -> Path:
    return out / "checkpoints" / f"{kind}_seed{seed}_layer{layer}.ckpt"


def load_runs(directory) -> list[RunResult]:
    directory = Path(directory)
    runs_dir = directory / "runs" if (directory / "runs").is_dir() else directory
    out = []
    for path in sorted(runs_dir.glob("*.json")):
        if parse_run_name(path.stem) is None:
            continue
        out.append(RunResult.load(path))
    return out
