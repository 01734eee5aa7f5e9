"""Four-layer supply chain: inventory dynamics, accounting and order selection.

Layer 0 is the consumer, layers 1..3 are retailer, distributor and
manufacturer.  On every day each layer, in order 1 -> 3:

1. receives pipeline arrivals due today and pays their purchase cost;
2. observes demand (consumer demand for layer 1, the downstream order
   placed today otherwise);
3. sells ``min(inventory, demand)``; unmet demand is lost and charged;
4. pays holding on the mean of start and end inventory;
5. forecasts, sizes safety stock and chooses an order.

What layer ``i`` sells to layer ``i-1`` is shipped and lands after the lead
time, so upstream stockouts short downstream deliveries.  Layer 3 buys from
an unlimited source.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import HORIZON, Rng, build_features
from .demand import DemandSpec, generate, inject_noise

LAYERS = (1, 2, 3)
NOISE_STREAM = 0x701CE


def _linear_weights(n: int = HORIZON) -> tuple[float, ...]:
    return tuple(1.0 - 0.5 * k / (n - 1) for k in range(n))


@dataclass(frozen=True)
class ChainConfig:
    unit_cost: tuple[float, ...] = (0.0, 30.0, 45.0, 60.0)
    unit_price: tuple[float, ...] = (0.0, 70.0, 100.0, 130.0)
    holding_rate: float = 0.03
    shortage_rate: float = 0.03
    lead_time: int = 1
    initial_inventory: float = 100.0
    batch_size: int = 16
    candidate_step: int = 80
    max_inventory: float = 1000.0
    horizon: int = 1095
    train_days: int = 219
    smoothing_alpha: float = 0.3
    forecast_weights: tuple[float, ...] = _linear_weights()
    safety_stock_base: float = 10.0
    safety_stock_factor: float = 1.0
    demand_std_window: int = 10
    sma_window: int = 5

    def __post_init__(self):
        if len(self.unit_cost) != 4 or len(self.unit_price) != 4:
            raise ValueError("unit_cost and unit_price need one entry per layer 0..3")
        for i in LAYERS:
            if self.unit_price[i] <= self.unit_cost[i]:
                raise ValueError(f"layer {i}: price must exceed cost")
        if self.lead_time < 1:
            raise ValueError("lead_time must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.candidate_step < 1:
            raise ValueError("candidate_step must be at least 1")
        if not 0 < self.train_days < self.horizon:
            raise ValueError("train_days must lie inside the horizon")
        if len(self.forecast_weights) != HORIZON:
            raise ValueError("forecast_weights needs one weight per horizon day")

    def with_overrides(self, **kw) -> "ChainConfig":
        for key in ("unit_cost", "unit_price", "forecast_weights"):
            if key in kw:
                kw[key] = tuple(float(v) for v in kw[key])
        return replace(self, **kw)


@dataclass
class DayLedger:
    demand: float
    arrivals: float
    sales: float
    shortage: float
    start_inventory: float
    end_inventory: float
    revenue: float
    purchase_cost: float
    holding_cost: float
    shortage_cost: float
    order: float = 0.0
    forecast: float | None = None

    @property
    def profit(self) -> float:
        return self.revenue - self.purchase_cost - self.holding_cost - self.shortage_cost


@dataclass
class LayerState:
    layer: int
    inventory: float
    pipeline: list[tuple[int, float]] = field(default_factory=list)
    demand: list[float] = field(default_factory=list)
    orders: list[float] = field(default_factory=list)
    sales: list[float] = field(default_factory=list)
    inventory_hist: list[float] = field(default_factory=list)
    arrivals: list[float] = field(default_factory=list)
    unmet: list[float] = field(default_factory=list)
    revenue: list[float] = field(default_factory=list)
    purchase: list[float] = field(default_factory=list)
    holding: list[float] = field(default_factory=list)
    shortage_cost: list[float] = field(default_factory=list)
    profit: list[float] = field(default_factory=list)
    forecast: list[float | None] = field(default_factory=list)
    features: list[np.ndarray] = field(default_factory=list)
    smoothed: np.ndarray | None = None

    @property
    def day(self) -> int:
        """Last day whose demand has been observed."""
        return len(self.demand) - 1


def new_chain(cfg: ChainConfig) -> list[LayerState]:
    return [LayerState(layer=i, inventory=float(cfg.initial_inventory)) for i in LAYERS]


def _pstd_tail(values, n: int) -> float:
    tail = values[-n:]
    if len(tail) <= 1:
        return 0.0
    mean = sum(tail) / len(tail)
    return math.sqrt(sum((v - mean) ** 2 for v in tail) / len(tail))


def safety_stock(demand_history, cfg: ChainConfig) -> float:
    """Base buffer plus factor times the population std of the recent demand window."""
    sigma = _pstd_tail(list(demand_history), cfg.demand_std_window)
    return cfg.safety_stock_base + cfg.safety_stock_factor * sigma


def blend_forecast(raw, prev_smoothed, cfg: ChainConfig) -> tuple[float, np.ndarray]:
    """Exponentially smooth a 7-day forecast and collapse it to one weighted estimate.

    With no previous state the raw forecast seeds the smoother.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (HORIZON,):
        raise ValueError(f"forecast must have {HORIZON} values")
    prev = raw if prev_smoothed is None else np.asarray(prev_smoothed, dtype=float)
    a = cfg.smoothing_alpha
    smoothed = a * raw + (1.0 - a) * prev
    w = np.asarray(cfg.forecast_weights)
    return float(w @ smoothed / w.sum()), smoothed


def point_estimate(forecast, cfg: ChainConfig) -> float:
    w = np.asarray(cfg.forecast_weights)
    return float(w @ np.asarray(forecast, dtype=float) / w.sum())


def candidate_orders(d_hat: float, ss: float, inventory: float, demand_hist,
                     cfg: ChainConfig) -> list[int]:
    """Ordered candidate quantities between the one-day need and a week of cover."""
    lo = max(0, round(d_hat + ss - inventory))
    recent = list(demand_hist)[-cfg.demand_std_window:]
    avg = sum(recent) / len(recent) if recent else 0.0
    week_cover = round(1.5 * avg * HORIZON - inventory)
    hi = max(lo, min(week_cover, math.floor(cfg.max_inventory - inventory)))
    cands = list(range(lo, hi + 1, cfg.candidate_step))
    if cands[-1] != hi:
        cands.append(hi)
    return cands


def _incoming(state: LayerState, horizon: int = HORIZON) -> list[float]:
    t = state.day
    inc = [0.0] * (horizon + 1)
    for day, units in state.pipeline:
        k = day - t
        if 1 <= k <= horizon:
            inc[k] += units
    return inc


def _plan_profit(order, forecast, inventory, incoming, price, cost, cfg: ChainConfig) -> float:
    hr, sr, lead = cfg.holding_rate, cfg.shortage_rate, cfg.lead_time
    inv = inventory
    total = 0.0
    for k in range(1, len(forecast) + 1):
        arrived = incoming[k] + (order if k == lead else 0.0)
        start = inv + arrived
        d = forecast[k - 1]
        sold = start if start < d else d
        inv = start - sold
        total += price * sold - cost * arrived - hr * 0.5 * (start + inv) - sr * (d - sold)
    return total


def evaluate_candidate(order: float, forecast, state: LayerState, layer: int,
                       cfg: ChainConfig) -> float:
    """Profit of ``order`` over the next seven days if demand equals ``forecast``.

    The order lands after the lead time; already-shipped pipeline units arrive
    on schedule; no further orders are placed.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    forecast = [float(v) for v in forecast]
    return _plan_profit(order, forecast, state.inventory, _incoming(state, len(forecast)),
                        cfg.unit_price[layer], cfg.unit_cost[layer], cfg)


def round_to_batch(order: float, batch_size: int) -> int:
    if order <= 0:
        return 0
    return batch_size * math.ceil(order / batch_size)


def choose_order(state: LayerState, forecast, layer: int, cfg: ChainConfig) -> int:
    """Profit-maximizing candidate (smallest on ties), rounded up to a full batch."""
    forecast = [float(v) for v in forecast]
    d_hat = point_estimate(forecast, cfg)
    ss = safety_stock(state.demand, cfg)
    cands = candidate_orders(d_hat, ss, state.inventory, state.demand, cfg)
    incoming = _incoming(state)
    price, cost = cfg.unit_price[layer], cfg.unit_cost[layer]
    best, best_profit = cands[0], -math.inf
    for q in cands:
        p = _plan_profit(q, forecast, state.inventory, incoming, price, cost, cfg)
        if p > best_profit:
            best, best_profit = q, p
    return round_to_batch(best, cfg.batch_size)


def _receive(state: LayerState, t: int) -> float:
    arrived = 0.0
    keep = []
    for day, units in state.pipeline:
        if day == t:
            arrived += units
        elif day < t:
            raise RuntimeError(f"layer {state.layer}: shipment for day {day} missed")
        else:
            keep.append((day, units))
    state.pipeline = keep
    return arrived


def _decide(state: LayerState, t: int, model, cfg: ChainConfig) -> tuple[int, float | None]:
    if getattr(model, "direct", False):
        return int(model.act(state, t)), None
    raw = np.asarray(model.forecast(state, t), dtype=float)
    _, state.smoothed = blend_forecast(raw, state.smoothed, cfg)
    return choose_order(state, state.smoothed, state.layer, cfg), float(raw[0])


def step_day(chain: list[LayerState], t: int, consumer_demand: float, models,
             cfg: ChainConfig) -> list[DayLedger]:
    """Advance every layer by one day; returns one ledger per layer."""
    if not 0 <= t < cfg.horizon:
        raise ValueError(f"day {t} outside horizon {cfg.horizon}")
    ledgers = []
    incoming_demand = float(consumer_demand)
    for idx, state in enumerate(chain):
        layer = state.layer
        price, cost = cfg.unit_price[layer], cfg.unit_cost[layer]
        arrived = _receive(state, t)
        start = state.inventory + arrived
        d = incoming_demand
        sold = min(start, d)
        end = start - sold
        state.inventory = end
        if idx > 0:
            chain[idx - 1].pipeline.append((t + cfg.lead_time, sold))
        ledger = DayLedger(
            demand=d, arrivals=arrived, sales=sold, shortage=d - sold,
            start_inventory=start, end_inventory=end,
            revenue=price * sold, purchase_cost=cost * arrived,
            holding_cost=cfg.holding_rate * 0.5 * (start + end),
            shortage_cost=cfg.shortage_rate * (d - sold),
        )
        state.demand.append(d)
        state.sales.append(sold)
        state.arrivals.append(arrived)
        state.unmet.append(d - sold)
        state.features.append(build_features(state.demand, state.orders, state.inventory_hist,
                                             state.sales, t, cfg.horizon))
        state.inventory_hist.append(end)
        order, fc = _decide(state, t, models[idx], cfg)
        if order < 0:
            raise ValueError(f"layer {layer}: negative order {order}")
        ledger.order, ledger.forecast = float(order), fc
        state.orders.append(float(order))
        state.forecast.append(fc)
        state.revenue.append(ledger.revenue)
        state.purchase.append(ledger.purchase_cost)
        state.holding.append(ledger.holding_cost)
        state.shortage_cost.append(ledger.shortage_cost)
        state.profit.append(ledger.profit)
        if idx == len(chain) - 1:
            state.pipeline.append((t + cfg.lead_time, float(order)))
        incoming_demand = float(order)
        ledgers.append(ledger)
    return ledgers


@dataclass
class TrainingSet:
    """Histories of one layer over the training phase, handed to ``model.fit``."""

    layer: int
    features: np.ndarray
    demand: np.ndarray
    orders: np.ndarray
    inventory: np.ndarray
    sales: np.ndarray
    cfg: ChainConfig


def training_set(state: LayerState, cfg: ChainConfig) -> TrainingSet:
    n = cfg.train_days
    return TrainingSet(
        layer=state.layer,
        features=np.array(state.features[:n]),
        demand=np.array(state.demand[:n]),
        orders=np.array(state.orders[:n]),
        inventory=np.array(state.inventory_hist[:n]),
        sales=np.array(state.sales[:n]),
        cfg=cfg,
    )


SERIES_KEYS = ("demand", "orders", "sales", "inventory", "profit", "cum_profit",
               "holding", "shortage", "revenue", "purchase", "arrivals", "unmet", "forecast")


@dataclass
class RunResult:
    """Per-layer daily series of one simulated episode."""

    model: str
    seed: int
    noise: float
    train_days: int
    horizon: int
    consumer_demand: np.ndarray
    layers: list[dict[str, np.ndarray]]

    def series(self, layer: int, key: str) -> np.ndarray:
        return self.layers[layer - 1][key]

    def validation(self, layer: int, key: str) -> np.ndarray:
        return self.series(layer, key)[self.train_days:]

    def to_dict(self) -> dict:
        def enc(arr):
            return [None if (v is None or (isinstance(v, float) and math.isnan(v))) else float(v)
                    for v in arr]
        return {
            "model": self.model,
            "seed": int(self.seed),
            "noise": float(self.noise),
            "train_days": int(self.train_days),
            "horizon": int(self.horizon),
            "consumer_demand": enc(self.consumer_demand),
            "layers": [
                {"layer": i + 1, "series": {k: enc(s[k]) for k in SERIES_KEYS}}
                for i, s in enumerate(self.layers)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "RunResult":
        layers = []
        for entry in sorted(data["layers"], key=lambda e: e["layer"]):
            s = entry["series"]
            layers.append({k: np.array([np.nan if v is None else v for v in s[k]], dtype=float)
                           for k in s})
        return cls(data["model"], data["seed"], data.get("noise", 0.0), data["train_days"],
                   data.get("horizon", len(data["consumer_demand"])),
                   np.array(data["consumer_demand"], dtype=float), layers)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "RunResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _collect(chain: list[LayerState], demand: np.ndarray, cfg: ChainConfig, name: str,
             seed: int, noise: float) -> RunResult:
    layers = []
    for st in chain:
        profit = np.array(st.profit)
        layers.append({
            "demand": np.array(st.demand),
            "orders": np.array(st.orders),
            "sales": np.array(st.sales),
            "inventory": np.array(st.inventory_hist),
            "profit": profit,
            "cum_profit": np.cumsum(profit),
            "holding": np.array(st.holding),
            "shortage": np.array(st.shortage_cost),
            "revenue": np.array(st.revenue),
            "purchase": np.array(st.purchase),
            "arrivals": np.array(st.arrivals),
            "unmet": np.array(st.unmet),
            "forecast": np.array([np.nan if f is None else f for f in st.forecast]),
        })
    return RunResult(name, seed, noise, cfg.train_days, cfg.horizon, np.asarray(demand), layers)


def episode_demand(spec: DemandSpec, cfg: ChainConfig, noise_level: float = 0.0) -> np.ndarray:
    """Consumer demand for an episode; noise only touches the validation segment."""
    if spec.horizon != cfg.horizon:
        spec = replace(spec, horizon=cfg.horizon)
    demand = generate(spec)
    if noise_level > 0:
        rng = Rng.derive(spec.seed, NOISE_STREAM)
        demand[cfg.train_days:] = inject_noise(demand[cfg.train_days:], noise_level, rng)
    return demand


def warm_up(cfg: ChainConfig, demand: np.ndarray, warmup=None) -> list[LayerState]:
    """Simulate the training phase under the warm-up policy (SMA by default)."""
    if warmup is None:
        from .policies import SmaForecaster
        warmup = [SmaForecaster(cfg.sma_window) for _ in LAYERS]
    chain = new_chain(cfg)
    for t in range(cfg.train_days):
        step_day(chain, t, demand[t], warmup, cfg)
    return chain


def fit_models(chain: list[LayerState], models, cfg: ChainConfig) -> None:
    for state, model in zip(chain, models):
        if not getattr(model, "fitted", True):
            model.fit(training_set(state, cfg))


def run_episode(cfg: ChainConfig, spec: DemandSpec, models, noise_level: float = 0.0,
                name: str = "", warmup=None) -> RunResult:
    """Warm up on the training phase, fit ``models`` (one per layer), run validation.

    Already-fitted models are reused as-is, so a model set trained once can be
    replayed under several noise levels.
    """
    if len(models) != len(LAYERS):
        raise ValueError("need one model per layer")
    demand = episode_demand(spec, cfg, noise_level)
    chain = warm_up(cfg, demand, warmup)
    fit_models(chain, models, cfg)
    for state in chain:
        state.smoothed = None
    for t in range(cfg.train_days, cfg.horizon):
        step_day(chain, t, demand[t], models, cfg)
    return _collect(chain, demand, cfg, name, spec.seed, noise_level)


def audit(run: RunResult, cfg: ChainConfig, tol: float = 1e-9) -> list[str]:
    """Check conservation, ledger, sign and propagation identities on every layer-day."""
    problems = []
    for i in LAYERS:
        s = run.layers[i - 1]
        inv, arr, sold = s["inventory"], s["arrivals"], s["sales"]
        prev = cfg.initial_inventory
        price, cost = cfg.unit_price[i], cfg.unit_cost[i]
        for t in range(run.horizon):
            if abs(inv[t] - (prev + arr[t] - sold[t])) > tol:
                problems.append(f"layer {i} day {t}: inventory not conserved")
            if inv[t] < -tol:
                problems.append(f"layer {i} day {t}: negative inventory")
            start = prev + arr[t]
            expect = (price * sold[t] - cost * arr[t]
                      - cfg.holding_rate * 0.5 * (start + inv[t])
                      - cfg.shortage_rate * (s["demand"][t] - sold[t]))
            ident = s["revenue"][t] - s["purchase"][t] - s["holding"][t] - s["shortage"][t]
            if abs(s["profit"][t] - ident) > tol or abs(s["profit"][t] - expect) > tol * max(1.0, abs(expect)):
                problems.append(f"layer {i} day {t}: profit identity broken")
            prev = inv[t]
        if i > 1:
            up = run.layers[i - 2]["orders"]
            if not np.array_equal(s["demand"], up):
                problems.append(f"layer {i}: demand differs from layer {i - 1} orders")
        elif not np.array_equal(s["demand"], run.consumer_demand):
            problems.append("layer 1: demand differs from consumer demand")
    return problems
