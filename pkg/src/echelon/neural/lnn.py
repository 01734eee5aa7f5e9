"""Liquid neural network forecaster with a volatility-adaptive leak rate.

State update per step, with activation ``a = tanh(W_in x + W_rec s + b)``::

    s_t = (1 - alpha_t) s_{t-1} + alpha_t a_t + (dt / tau) (a_t - s_{t-1})
    alpha_t = clip(alpha_base + beta_vol * v(x_t), 0.05, 0.95)

where ``v(x)`` is the scaled order-volatility feature.  A linear readout on
the final state gives the 7-day forecast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..autodiff import AdamW, NonFiniteError, Tape, xavier_init
from ..core import HORIZON, N_FEATURES, ORDER_STD_INDEX, Rng

ALPHA_MIN, ALPHA_MAX = 0.05, 0.95
PARAM_NAMES = ("W_in", "W_rec", "b", "W_out", "b_out")


@dataclass
class LiquidCell:
    W_in: np.ndarray
    W_rec: np.ndarray
    b: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    alpha_base: float = 0.5
    beta_vol: float = 0.25
    tau: float = 1.0
    dt: float = 1.0

    @classmethod
    def init(cls, neurons: int, rng: Rng, n_inputs: int = N_FEATURES, n_outputs: int = HORIZON,
             zero_readout: bool = False, **kw) -> "LiquidCell":
        W_in = xavier_init(neurons, n_inputs, rng)
        W_rec = xavier_init(neurons, neurons, rng)
        if zero_readout:
            W_out = np.zeros((n_outputs, neurons))
        else:
            W_out = xavier_init(n_outputs, neurons, rng)
        return cls(W_in, W_rec, np.zeros(neurons), W_out, np.zeros(n_outputs), **kw)

    @property
    def neurons(self) -> int:
        return self.W_rec.shape[0]

    @property
    def n_params(self) -> int:
        return sum(getattr(self, k).size for k in PARAM_NAMES)

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def with_params(self, params: dict) -> "LiquidCell":
        return LiquidCell(**{k: params[k] for k in PARAM_NAMES}, alpha_base=self.alpha_base,
                          beta_vol=self.beta_vol, tau=self.tau, dt=self.dt)

    def leak(self, x: np.ndarray) -> np.ndarray:
        return np.clip(self.alpha_base + self.beta_vol * x[..., ORDER_STD_INDEX], ALPHA_MIN, ALPHA_MAX)


def lnn_step(cell: LiquidCell, s_prev: np.ndarray, x: np.ndarray) -> np.ndarray:
    """One state update; ``x`` may be a single vector or a (batch, 10) block."""
    x = np.asarray(x, dtype=float)
    s_prev = np.asarray(s_prev, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s_prev))):
        raise NonFiniteError("non-finite input to lnn_step")
    a = np.tanh(x @ cell.W_in.T + s_prev @ cell.W_rec.T + cell.b)
    alpha = cell.leak(x)[..., None] if x.ndim > 1 else cell.leak(x)
    c = cell.dt / cell.tau
    return (1.0 - alpha) * s_prev + alpha * a + c * (-s_prev + a)


def lnn_states(cell: LiquidCell, windows: np.ndarray) -> np.ndarray:
    """Final state for each window; ``windows`` is (W, 10) or (batch, W, 10)."""
    windows = np.asarray(windows, dtype=float)
    single = windows.ndim == 2
    if single:
        windows = windows[None]
    s = np.zeros((windows.shape[0], cell.neurons))
    for k in range(windows.shape[1]):
        s = lnn_step(cell, s, windows[:, k, :])
    return s[0] if single else s


def lnn_forecast(cell: LiquidCell, window: np.ndarray) -> np.ndarray:
    """Readout on the final state of the window: 7 values per window."""
    s = lnn_states(cell, window)
    return s @ cell.W_out.T + cell.b_out


def lnn_forecast_tape(cell: LiquidCell, tape: Tape, P: dict, X: np.ndarray):
    """Taped forward pass over a (batch, W, 10) block; returns the output Var."""
    c = cell.dt / cell.tau
    W_inT, W_recT, W_outT = P["W_in"].T, P["W_rec"].T, P["W_out"].T
    s = None
    for k in range(X.shape[1]):
        xk = X[:, k, :]
        alpha = cell.leak(xk)[:, None]
        pre = xk @ W_inT + P["b"]
        if s is not None:
            pre = pre + s @ W_recT
        a = pre.tanh()
        if s is None:
            s = a * (alpha + c)
        else:
            s = s * (1.0 - alpha - c) + a * (alpha + c)
    return s @ W_outT + P["b_out"]


def mse_loss_tape(cell: LiquidCell, tape: Tape, P: dict, X: np.ndarray, y: np.ndarray):
    return (lnn_forecast_tape(cell, tape, P, X) - y).square().mean()


def lnn_loss(cell: LiquidCell, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((lnn_forecast(cell, X) - y) ** 2))


def minibatches(n: int, batch_size: int, rng: Rng):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def lnn_train(cell: LiquidCell, X: np.ndarray, y: np.ndarray, epochs: int, lr: float,
              rng: Rng, batch_size: int = 8, weight_decay: float = 0.01,
              clip: float | None = None) -> tuple[LiquidCell, list[float]]:
    """AdamW on MSE.  Returns the fitted cell and full-batch loss before and after each epoch."""
    from ..autodiff import clip_gradients

    if len(X) == 0:
        raise ValueError("empty training batch")
    opt = AdamW(lr=lr, weight_decay=weight_decay)
    params = cell.params()
    losses = [lnn_loss(cell, X, y)]
    for epoch in range(epochs):
        for idx in minibatches(len(X), batch_size, rng):
            tape = Tape()
            leaves = {k: tape.param(v) for k, v in params.items()}
            loss = mse_loss_tape(cell, tape, leaves, X[idx], y[idx])
            try:
                grads = dict(zip(leaves, tape.gradients(loss, list(leaves.values()))))
            except NonFiniteError as exc:
                raise NonFiniteError(f"LNN training diverged at epoch {epoch}: {exc}") from exc
            if clip is not None:
                grads = clip_gradients(grads, clip)
            params = opt.step(params, grads)
        cell = cell.with_params(params)
        losses.append(lnn_loss(cell, X, y))
        if not math.isfinite(losses[-1]):
            raise NonFiniteError(f"LNN training loss became {losses[-1]} at epoch {epoch}")
    return cell, losses
