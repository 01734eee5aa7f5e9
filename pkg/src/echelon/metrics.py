"""Performance metrics computed from a :class:`RunResult`.

Scalar metrics cover the validation segment.  ``mae`` is the error of the
day-ahead *demand* forecast recorded in the run (the models forecast demand,
not inventory).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .simulator import LAYERS, ChainConfig, RunResult

BULLWHIP_SENTINEL = math.inf


def theoretical_profit(demand, layer: int, cfg: ChainConfig):
    """Profit if every unit of demand were sold at full margin."""
    if layer not in LAYERS:
        raise ValueError(f"layer must be one of {LAYERS}")
    margin = cfg.unit_price[layer] - cfg.unit_cost[layer]
    if np.ndim(demand):
        return np.asarray(demand, dtype=float) * margin
    return float(demand) * margin


def efficiency(profit, theo):
    """``profit / theo`` elementwise, 0 where the theoretical profit is 0."""
    profit = np.asarray(profit, dtype=float)
    theo = np.asarray(theo, dtype=float)
    safe = np.where(theo != 0, theo, 1.0)
    out = np.where(theo != 0, profit / safe, 0.0)
    return float(out) if out.ndim == 0 else out


def moving_avg7(series) -> np.ndarray:
    """Trailing 7-day mean; the first value averages days 1..7."""
    x = np.asarray(series, dtype=float)
    if len(x) < 7:
        return np.zeros(0)
    c = np.cumsum(np.concatenate([[0.0], x]))
    return (c[7:] - c[:-7]) / 7.0


def bullwhip_ratio(orders, demand) -> float:
    var_d = float(np.var(np.asarray(demand, dtype=float)))
    if var_d == 0:
        return BULLWHIP_SENTINEL
    return float(np.var(np.asarray(orders, dtype=float))) / var_d


def bullwhip(orders, demand, consumer_demand=None) -> tuple[float, float]:
    """(stage ratio against the layer's own demand, cumulative ratio against consumer demand)."""
    if len(orders) < 2:
        raise ValueError("bullwhip needs at least two observations")
    base = demand if consumer_demand is None else consumer_demand
    return bullwhip_ratio(orders, demand), bullwhip_ratio(orders, base)


def service_level(sales, demand) -> float:
    sales = np.asarray(sales, dtype=float)
    demand = np.asarray(demand, dtype=float)
    if len(demand) == 0:
        return 0.0
    return float(np.mean(sales >= demand))


def turnover(sales, inventory) -> float:
    mean_inv = float(np.mean(inventory)) if len(inventory) else 0.0
    return float(np.sum(sales)) / mean_inv if mean_inv > 0 else 0.0


def forecast_mae(forecast, demand_next) -> float:
    """Mean |forecast(t) - demand(t+1)| over days with a recorded forecast."""
    f = np.asarray(forecast, dtype=float)
    d = np.asarray(demand_next, dtype=float)
    ok = np.isfinite(f)
    if not ok.any():
        return math.nan
    return float(np.mean(np.abs(f[ok] - d[ok])))


@dataclass
class LayerMetrics:
    model: str
    seed: int
    noise: float
    layer: int
    cum_profit: float
    theoretical_profit: float
    efficiency: float
    turnover: float
    service_level: float
    holding_cost: float
    shortage_cost: float
    cost: float
    order_volatility: float
    bullwhip_stage: float
    bullwhip_cumulative: float
    mae: float


METRIC_COLUMNS = tuple(LayerMetrics.__dataclass_fields__)


def layer_metrics(run: RunResult, layer: int, cfg: ChainConfig) -> LayerMetrics:
    v = lambda key: run.validation(layer, key)
    demand, sales, orders = v("demand"), v("sales"), v("orders")
    profit = float(np.sum(v("profit")))
    theo = float(np.sum(theoretical_profit(demand, layer, cfg)))
    stage, cum = bullwhip(orders, demand, run.consumer_demand[run.train_days:])
    holding, shortage = float(np.sum(v("holding"))), float(np.sum(v("shortage")))
    # forecast recorded on day t targets demand on day t+1
    fc = run.series(layer, "forecast")[run.train_days:-1]
    nxt = run.series(layer, "demand")[run.train_days + 1:]
    return LayerMetrics(
        model=run.model, seed=run.seed, noise=run.noise, layer=layer,
        cum_profit=profit, theoretical_profit=theo, efficiency=efficiency(profit, theo),
        turnover=turnover(sales, v("inventory")), service_level=service_level(sales, demand),
        holding_cost=holding, shortage_cost=shortage, cost=holding + shortage,
        order_volatility=float(np.std(orders)), bullwhip_stage=stage, bullwhip_cumulative=cum,
        mae=forecast_mae(fc, nxt),
    )


def run_metrics(run: RunResult, cfg: ChainConfig) -> list[LayerMetrics]:
    return [layer_metrics(run, i, cfg) for i in LAYERS]


def efficiency_series(run: RunResult, layer: int, cfg: ChainConfig) -> np.ndarray:
    return efficiency(run.series(layer, "profit"),
                      theoretical_profit(run.series(layer, "demand"), layer, cfg))


def metrics_csv(rows: list[LayerMetrics]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRIC_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(x) if isinstance(x, float) else x) for k, x in asdict(r).items()})
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[LayerMetrics]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        kw = {}
        for name, f in LayerMetrics.__dataclass_fields__.items():
            val = row[name]
            kw[name] = val if f.type == "str" else (int(val) if f.type == "int" else float(val))
        out.append(LayerMetrics(**kw))
    return out
