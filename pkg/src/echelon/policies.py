"""Forecasters and ordering policies plugged into the simulator, plus the registry.

Every model is built per layer and exposes ``fitted`` and ``fit(training)``.
Forecasters implement ``forecast(state, t)`` returning 7 non-negative demand
values, which the simulator smooths and turns into an order.  Direct
policies (``direct = True``) implement ``act(state, t)`` and return the order
quantity themselves.

Learned forecasters scale the 10 features and the demand target with
min-max scalers fit on the training phase and predict from the last 10
feature rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import HORIZON, WINDOW, MinMaxScaler, Rng, build_features, make_windows
from .gbt import GbtEnsemble, GbtParams, gbt_fit
from .neural import (DqnAgent, LiquidCell, LstmCell, dqn_act_index, dqn_train_step, epsilon_at,
                     lnn_states, lnn_train, lstm_forecast, lstm_train, order_actions)
from .neural.lnn import lnn_step

KINDS = ("SMA", "LNN", "GBT", "HYBRID", "LSTM", "DQN")

# hyperparameter ranges: (low, high, step) for grids, (low, high) for reals
RANGES = {
    "neurons": (64, 1024, 64),
    "hidden": (64, 256, 64),
    "layers": (1, 3, 1),
    "batch_size": (4, 8, 4),
    "epochs": (50, 100, 1),
    "episodes": (100, 200, 1),
    "n_trees": (100, 300, 1),
    "max_depth": (3, 7, 1),
    "lr": (1e-5, 1e-3),
    "eta": (0.01, 0.3),
    "sma_window": (1, 30, 1),
}


def sma_forecast(demand_hist, p: int = 5) -> np.ndarray:
    recent = list(demand_hist)[-p:] if p > 0 else []
    level = float(np.mean(recent)) if recent else 0.0
    return np.full(HORIZON, level)


class SmaForecaster:
    kind = "SMA"
    direct = False
    fitted = True

    def __init__(self, p: int = 5):
        self.p = p

    @property
    def n_params(self) -> int:
        return 0

    def fit(self, training) -> None:
        pass

    def forecast(self, state, t) -> np.ndarray:
        return sma_forecast(state.demand, self.p)


class OrderUpToPolicy:
    """Moving-average order-up-to rule on the layer's own demand.

    The target level is ``L * m_t`` plus a constant buffer, with ``m_t`` the
    mean of the last ``p`` demands; ordering up to it gives
    ``q_t = max(0, D_t + (L / p) (D_t - D_{t-p}))``, whose order variance on
    i.i.d. demand is ``1 + 2L/p + 2L^2/p^2`` times the demand variance.
    """

    kind = "OUT"
    direct = True
    fitted = True

    def __init__(self, p: int = 5, lead_time: int = 1):
        self.p = p
        self.lead_time = lead_time

    def fit(self, training) -> None:
        pass

    def act(self, state, t) -> float:
        d = state.demand
        if len(d) <= self.p:
            return max(0.0, float(d[-1]))
        q = d[-1] + self.lead_time / self.p * (d[-1] - d[-1 - self.p])
        return max(0.0, float(q))


def _check_choice(name: str, value) -> None:
    lo, hi, step = RANGES[name]
    if value != int(value) or not lo <= value <= hi or (value - lo) % step:
        raise ValueError(f"{name}={value} outside {lo}..{hi} step {step}")


def _check_real(name: str, value) -> None:
    lo, hi = RANGES[name]
    if not lo <= value <= hi:
        raise ValueError(f"{name}={value} outside [{lo}, {hi}]")


class _WindowModel:
    """Shared plumbing: scalers, training windows and the inference window."""

    direct = False

    def __init__(self, seed: int):
        self.seed = seed
        self.fitted = False
        self.x_scaler: MinMaxScaler | None = None
        self.y_scaler: MinMaxScaler | None = None
        self.losses: list[float] = []

    def _prepare(self, training):
        self.x_scaler = MinMaxScaler.fit(training.features)
        self.y_scaler = MinMaxScaler.fit(training.demand)
        feats = self.x_scaler.transform(training.features)
        target = self.y_scaler.transform(training.demand[:, None])[:, 0]
        batch = make_windows(feats, target, WINDOW, HORIZON)
        if len(batch) == 0:
            raise ValueError("training phase too short for one window")
        return batch

    def _window(self, state) -> np.ndarray:
        rows = np.array(state.features[-WINDOW:])
        if len(rows) < WINDOW:
            rows = np.vstack([np.repeat(rows[:1], WINDOW - len(rows), axis=0), rows])
        return self.x_scaler.transform(rows)

    def _unscale(self, y_scaled) -> np.ndarray:
        y = self.y_scaler.inverse_transform(np.asarray(y_scaled)[:, None])[:, 0]
        return np.maximum(y, 0.0)

    def forecast(self, state, t) -> np.ndarray:
        return self._unscale(self.predict_scaled(self._window(state)[None])[0])


class LnnForecaster(_WindowModel):
    kind = "LNN"

    def __init__(self, neurons: int = 64, epochs: int = 50, lr: float = 1e-3, batch_size: int = 8,
                 weight_decay: float = 0.01, seed: int = 0):
        super().__init__(seed)
        self.neurons, self.epochs, self.lr = neurons, epochs, lr
        self.batch_size, self.weight_decay = batch_size, weight_decay
        self.cell = LiquidCell.init(neurons, Rng.derive(seed, 1))

    @property
    def n_params(self) -> int:
        return self.cell.n_params

    def fit(self, training) -> None:
        batch = self._prepare(training)
        self.cell, self.losses = lnn_train(self.cell, batch.X, batch.y, self.epochs, self.lr,
                                           Rng.derive(self.seed, 2), self.batch_size,
                                           self.weight_decay)
        self.fitted = True

    def predict_scaled(self, X) -> np.ndarray:
        s = lnn_states(self.cell, X)
        return s @ self.cell.W_out.T + self.cell.b_out


class LstmForecaster(_WindowModel):
    kind = "LSTM"

    def __init__(self, hidden: int = 64, layers: int = 1, epochs: int = 50, lr: float = 1e-3,
                 batch_size: int = 8, seed: int = 0):
        super().__init__(seed)
        self.hidden, self.layers, self.epochs, self.lr, self.batch_size = (
            hidden, layers, epochs, lr, batch_size)
        self.cell = LstmCell.init(hidden, Rng.derive(seed, 1), layers)

    @property
    def n_params(self) -> int:
        return self.cell.n_params

    def fit(self, training) -> None:
        batch = self._prepare(training)
        self.cell, self.losses = lstm_train(self.cell, batch.X, batch.y, self.epochs, self.lr,
                                            Rng.derive(self.seed, 2), self.batch_size)
        self.fitted = True

    def predict_scaled(self, X) -> np.ndarray:
        return lstm_forecast(self.cell, X)


class GbtForecaster(_WindowModel):
    """One ensemble per horizon day on the current (last-row) scaled features."""

    kind = "GBT"

    def __init__(self, params: GbtParams | None = None, seed: int = 0):
        super().__init__(seed)
        self.params = params or GbtParams()
        self.ensembles: list[GbtEnsemble] = []

    @property
    def n_params(self) -> int:
        return sum(t.n_nodes for e in self.ensembles for t in e.trees)

    def fit(self, training) -> None:
        batch = self._prepare(training)
        Z = batch.last
        self.ensembles = [gbt_fit(Z, batch.y[:, k], self.params) for k in range(HORIZON)]
        self.background = Z
        self.fitted = True

    def design(self, X) -> np.ndarray:
        """GBT input rows for scaled windows ``X``."""
        return np.asarray(X)[:, -1, :]

    def predict_scaled(self, X) -> np.ndarray:
        Z = np.asarray(X)[:, -1, :]
        return np.stack([e.predict(Z) for e in self.ensembles], axis=1)


def lnn_state_sequence(cell: LiquidCell, X: np.ndarray) -> np.ndarray:
    """All per-step states, shape (batch, W * N)."""
    s = np.zeros((X.shape[0], cell.neurons))
    seq = []
    for k in range(X.shape[1]):
        s = lnn_step(cell, s, X[:, k, :])
        seq.append(s)
    return np.concatenate(seq, axis=1)


def hybrid_recipe(cell: LiquidCell, X: np.ndarray, full_state: bool = False):
    """GBT inputs ``[current features | LNN state | LNN 7-day raw forecast]`` and the raw forecast."""
    X = np.asarray(X, dtype=float)
    if full_state:
        seq = lnn_state_sequence(cell, X)
        final = seq[:, -cell.neurons:]
    else:
        seq = final = lnn_states(cell, X)
    raw = final @ cell.W_out.T + cell.b_out
    return np.concatenate([X[:, -1, :], seq, raw], axis=1), raw


@dataclass
class HybridModel:
    """Stage 1 liquid cell; stage 2 seven GBTs boosting from the LNN forecast.

    Ensemble ``k`` uses the LNN's day-``k`` output as its starting margin, so
    the trees learn what the liquid cell got wrong.
    """

    cell: LiquidCell
    ensembles: list[GbtEnsemble] = field(default_factory=list)
    full_state: bool = False

    @property
    def input_dim(self) -> int:
        n = self.cell.neurons * (WINDOW if self.full_state else 1)
        return self.cell.W_in.shape[1] + n + HORIZON


def hybrid_fit(X, y, cell: LiquidCell, epochs: int, lr: float, rng: Rng, gbt_params: GbtParams,
               batch_size: int = 8, weight_decay: float = 0.01, full_state: bool = False,
               train_lnn: bool = True) -> tuple[HybridModel, list[float]]:
    if len(X) == 0:
        raise ValueError("empty training batch")
    losses: list[float] = []
    if train_lnn:
        cell, losses = lnn_train(cell, X, y, epochs, lr, rng, batch_size, weight_decay)
    Z, raw = hybrid_recipe(cell, X, full_state)
    ensembles = [gbt_fit(Z, y[:, k], gbt_params, base_margin=raw[:, k]) for k in range(HORIZON)]
    return HybridModel(cell, ensembles, full_state), losses


def hybrid_predict_raw(model: HybridModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.shape[1:] != (WINDOW, model.cell.W_in.shape[1]):
        raise ValueError(f"hybrid expects windows of shape ({WINDOW}, {model.cell.W_in.shape[1]})")
    Z, raw = hybrid_recipe(model.cell, X, model.full_state)
    out = np.stack([raw[:, k] + e.predict(Z) for k, e in enumerate(model.ensembles)], axis=1)
    return out[0] if single else out


def hybrid_predict(model: HybridModel, window) -> np.ndarray:
    """7-day forecast for one window (model units), clamped at 0."""
    return np.maximum(hybrid_predict_raw(model, window), 0.0)


class HybridForecaster(_WindowModel):
    kind = "HYBRID"

    def __init__(self, neurons: int = 64, epochs: int = 50, lr: float = 1e-3, batch_size: int = 8,
                 gbt: GbtParams | None = None, weight_decay: float = 0.01,
                 full_state: bool = False, seed: int = 0):
        super().__init__(seed)
        self.neurons, self.epochs, self.lr = neurons, epochs, lr
        self.batch_size, self.weight_decay, self.full_state = batch_size, weight_decay, full_state
        self.gbt_params = gbt or GbtParams()
        self.model = HybridModel(LiquidCell.init(neurons, Rng.derive(seed, 1)), [], full_state)

    @property
    def n_params(self) -> int:
        return self.model.cell.n_params + sum(t.n_nodes for e in self.model.ensembles for t in e.trees)

    def fit(self, training) -> None:
        batch = self._prepare(training)
        self.model, self.losses = hybrid_fit(batch.X, batch.y, self.model.cell, self.epochs,
                                             self.lr, Rng.derive(self.seed, 2), self.gbt_params,
                                             self.batch_size, self.weight_decay, self.full_state)
        self.background = self.design(batch.X)
        self.fitted = True

    def design(self, X) -> np.ndarray:
        return hybrid_recipe(self.model.cell, np.asarray(X), self.full_state)[0]

    def predict_scaled(self, X) -> np.ndarray:
        return hybrid_predict_raw(self.model, X)


class SingleEchelonEnv:
    """One layer facing a fixed demand series with an unlimited supplier."""

    def __init__(self, demand, layer: int, cfg):
        self.demand = np.asarray(demand, dtype=float)
        self.layer = layer
        self.cfg = cfg

    def reset(self):
        self.t = 0
        self.inventory = float(self.cfg.initial_inventory)
        self.pipeline: dict[int, float] = {}
        self.hist = {"demand": [], "orders": [], "inventory": [], "sales": []}

    def observe(self) -> tuple[np.ndarray, float, bool]:
        """Run day ``t`` up to the ordering decision; returns (raw features, profit, served)."""
        cfg, t = self.cfg, self.t
        price, cost = cfg.unit_price[self.layer], cfg.unit_cost[self.layer]
        arrived = self.pipeline.pop(t, 0.0)
        start = self.inventory + arrived
        d = float(self.demand[t])
        sold = min(start, d)
        self.inventory = start - sold
        profit = (price * sold - cost * arrived - cfg.holding_rate * 0.5 * (start + self.inventory)
                  - cfg.shortage_rate * (d - sold))
        h = self.hist
        h["demand"].append(d)
        h["sales"].append(sold)
        x = build_features(h["demand"], h["orders"], h["inventory"], h["sales"], t, cfg.horizon)
        h["inventory"].append(self.inventory)
        return x, profit, sold >= d

    def place(self, order: float) -> None:
        self.hist["orders"].append(float(order))
        day = self.t + self.cfg.lead_time
        self.pipeline[day] = self.pipeline.get(day, 0.0) + float(order)
        self.t += 1


SERVICE_BONUS = 10.0
REWARD_SCALE = 1e-3


def dqn_reward(profit: float, served: bool) -> float:
    return REWARD_SCALE * (profit + SERVICE_BONUS * (1.0 if served else 0.0))


class DqnPolicy:
    """Direct ordering policy learned by DQN in a single-layer environment.

    Training replays the layer's training-phase demand as episodes; the
    reward for an order is the next day's profit plus a bonus of 10 when
    demand is fully served.
    """

    kind = "DQN"
    direct = True

    def __init__(self, hidden: int = 64, episodes: int = 100, lr: float = 1e-3,
                 batch_size: int = 32, train_every: int = 4, capacity: int = 20000,
                 gamma: float = 0.99, target_period: int = 100, n_actions: int = 16,
                 seed: int = 0):
        self.hidden, self.episodes, self.lr = hidden, episodes, lr
        self.batch_size, self.train_every = batch_size, train_every
        self.capacity, self.gamma, self.target_period = capacity, gamma, target_period
        self.n_actions, self.seed = n_actions, seed
        self.fitted = False
        self.agent: DqnAgent | None = None
        self.x_scaler: MinMaxScaler | None = None
        self.losses: list[float] = []

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.agent.online.params().values()) if self.agent else 0

    def fit(self, training) -> None:
        cfg = training.cfg
        self.x_scaler = MinMaxScaler.fit(training.features)
        actions = order_actions(cfg.batch_size, self.n_actions - 1)
        rng = Rng.derive(self.seed, 3)
        agent = DqnAgent.create(training.features.shape[1], actions, Rng.derive(self.seed, 1),
                                hidden=self.hidden, capacity=self.capacity, gamma=self.gamma,
                                lr=self.lr, batch_size=self.batch_size,
                                target_period=self.target_period)
        env = SingleEchelonEnv(training.demand, training.layer, cfg)
        days = len(training.demand)
        total = self.episodes * (days - 1)
        step = 0
        for _ in range(self.episodes):
            env.reset()
            x, _, _ = env.observe()
            s = self.x_scaler.transform(x)
            for _t in range(days - 1):
                a = dqn_act_index(agent, s, epsilon_at(step, total), rng)
                env.place(actions[a])
                x2, profit, served = env.observe()
                s2 = self.x_scaler.transform(x2)
                agent.buffer.add(s, a, dqn_reward(profit, served), s2, False)
                s = s2
                step += 1
                if step % self.train_every == 0 and len(agent.buffer) >= agent.batch_size:
                    self.losses.append(dqn_train_step(agent, agent.buffer.sample(agent.batch_size, rng)))
        self.agent = agent
        self.fitted = True

    def act(self, state, t) -> float:
        s = self.x_scaler.transform(state.features[-1])
        q = self.agent.online.q(s)
        return float(self.agent.actions[int(np.argmax(q))])


def registry_build(kind: str, hyperparams: dict | None = None, seed: int = 0):
    """Construct a model of ``kind`` after checking hyperparameters against their ranges."""
    hp = dict(hyperparams or {})
    kind = kind.upper()
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {', '.join(KINDS)}")

    def take(name, default, real=False):
        v = hp.pop(name, default)
        (_check_real if real else _check_choice)(name, v)
        return v

    def gbt_params():
        return GbtParams(int(take("n_trees", 100)), int(take("max_depth", 3)),
                         float(take("eta", 0.1, real=True)), float(hp.pop("lam", 1.0)),
                         float(hp.pop("gamma", 0.0)))

    if kind == "SMA":
        model = SmaForecaster(int(take("sma_window", 5)))
    elif kind == "LNN":
        model = LnnForecaster(int(take("neurons", 64)), int(take("epochs", 50)),
                              float(take("lr", 1e-3, real=True)), int(take("batch_size", 8)),
                              float(hp.pop("weight_decay", 0.01)), seed)
    elif kind == "LSTM":
        model = LstmForecaster(int(take("hidden", 64)), int(take("layers", 1)), int(take("epochs", 50)),
                               float(take("lr", 1e-3, real=True)), int(take("batch_size", 8)), seed)
    elif kind == "GBT":
        model = GbtForecaster(gbt_params(), seed)
    elif kind == "HYBRID":
        model = HybridForecaster(int(take("neurons", 64)), int(take("epochs", 50)),
                                 float(take("lr", 1e-3, real=True)), int(take("batch_size", 8)),
                                 gbt_params(), float(hp.pop("weight_decay", 0.01)),
                                 bool(hp.pop("full_state", False)), seed)
    else:
        model = DqnPolicy(int(take("hidden", 64)), int(take("episodes", 100)),
                          float(take("lr", 1e-3, real=True)), seed=seed)
    hp.pop("safety_stock_base", None)
    if hp:
        raise ValueError(f"unused hyperparameters for {kind}: {sorted(hp)}")
    return model


def build_layer_models(kind: str, hyperparams: dict | None, seed: int) -> list:
    """One independently seeded model per layer."""
    return [registry_build(kind, hyperparams, seed=int(Rng.derive(seed, 0x10, layer).next_u64() >> 1))
            for layer in (1, 2, 3)]
