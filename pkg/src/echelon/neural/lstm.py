"""Stacked LSTM baseline forecaster.

Gates are packed in one matrix per layer in the order input, forget, cell,
output; each layer reads ``[x_t, h_{t-1}]``.  The top layer's final hidden
state feeds a linear 7-day readout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..autodiff import AdamW, NonFiniteError, Tape, clip_gradients, xavier_init
from ..core import HORIZON, N_FEATURES, Rng
from .lnn import minibatches

CLIP_NORM = 0.5


@dataclass
class LstmCell:
    weights: list[np.ndarray]  # layer l: (4H, in_l + H)
    biases: list[np.ndarray]  # layer l: (4H,)
    W_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def init(cls, hidden: int, rng: Rng, layers: int = 1, n_inputs: int = N_FEATURES,
             n_outputs: int = HORIZON, forget_bias: float = 1.0) -> "LstmCell":
        weights, biases = [], []
        for l in range(layers):
            fan_in = (n_inputs if l == 0 else hidden) + hidden
            weights.append(xavier_init(4 * hidden, fan_in, rng))
            b = np.zeros(4 * hidden)
            b[hidden:2 * hidden] = forget_bias
            biases.append(b)
        W_out = xavier_init(n_outputs, hidden, rng)
        return cls(weights, biases, W_out, np.zeros(n_outputs))

    @property
    def hidden(self) -> int:
        return self.W_out.shape[1]

    @property
    def layers(self) -> int:
        return len(self.weights)

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params().values())

    def params(self) -> dict[str, np.ndarray]:
        p = {}
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            p[f"W{l}"], p[f"b{l}"] = W, b
        p["W_out"], p["b_out"] = self.W_out, self.b_out
        return p

    def with_params(self, p: dict) -> "LstmCell":
        n = self.layers
        return LstmCell([p[f"W{l}"] for l in range(n)], [p[f"b{l}"] for l in range(n)],
                        p["W_out"], p["b_out"])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_cell_update(W: np.ndarray, b: np.ndarray, x: np.ndarray, h: np.ndarray,
                     c: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
    """One gate step; returns (h, c, gates) for a single vector or a batch."""
    H = h.shape[-1]
    z = np.concatenate([x, h], axis=-1) @ W.T + b
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = _sigmoid(z[..., 3 * H:])
    c = f * c + i * g
    return o * np.tanh(c), c, {"i": i, "f": f, "g": g, "o": o}


def lstm_states(cell: LstmCell, windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Top-layer final (h, c) for a (W, 10) window or a (batch, W, 10) block."""
    windows = np.asarray(windows, dtype=float)
    single = windows.ndim == 2
    if single:
        windows = windows[None]
    if not np.all(np.isfinite(windows)):
        raise NonFiniteError("non-finite LSTM input")
    n, H = windows.shape[0], cell.hidden
    hs = [np.zeros((n, H)) for _ in range(cell.layers)]
    cs = [np.zeros((n, H)) for _ in range(cell.layers)]
    for k in range(windows.shape[1]):
        inp = windows[:, k, :]
        for l in range(cell.layers):
            hs[l], cs[l], _ = lstm_cell_update(cell.weights[l], cell.biases[l], inp, hs[l], cs[l])
            inp = hs[l]
    h, c = hs[-1], cs[-1]
    return (h[0], c[0]) if single else (h, c)


def lstm_forecast(cell: LstmCell, window: np.ndarray) -> np.ndarray:
    h, _ = lstm_states(cell, window)
    return h @ cell.W_out.T + cell.b_out


def lstm_forecast_tape(cell: LstmCell, tape: Tape, P: dict, X: np.ndarray):
    """Taped forward pass over a (batch, W, 10) block; returns the output Var."""
    H = cell.hidden
    hs: list = [None] * cell.layers
    cs: list = [None] * cell.layers
    for k in range(X.shape[1]):
        inp = X[:, k, :]
        for l in range(cell.layers):
            W = P[f"W{l}"]
            n_in = W.shape[1] - H
            z = inp @ W[:, :n_in].T + P[f"b{l}"]
            if hs[l] is not None:
                z = z + hs[l] @ W[:, n_in:].T
            i = z[:, :H].sigmoid()
            f = z[:, H:2 * H].sigmoid()
            g = z[:, 2 * H:3 * H].tanh()
            o = z[:, 3 * H:].sigmoid()
            cs[l] = i * g if cs[l] is None else f * cs[l] + i * g
            hs[l] = o * cs[l].tanh()
            inp = hs[l]
    return hs[-1] @ P["W_out"].T + P["b_out"]


def lstm_loss(cell: LstmCell, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((lstm_forecast(cell, X) - y) ** 2))


def lstm_train(cell: LstmCell, X: np.ndarray, y: np.ndarray, epochs: int, lr: float,
               rng: Rng, batch_size: int = 8, clip: float = CLIP_NORM) -> tuple[LstmCell, list[float]]:
    """Adam with global-norm clipping on MSE; loss curve as in ``lnn_train``."""
    if len(X) == 0:
        raise ValueError("empty training batch")
    opt = AdamW(lr=lr)
    params = cell.params()
    losses = [lstm_loss(cell, X, y)]
    for epoch in range(epochs):
        for idx in minibatches(len(X), batch_size, rng):
            tape = Tape()
            leaves = {k: tape.param(v) for k, v in params.items()}
            loss = (lstm_forecast_tape(cell, tape, leaves, X[idx]) - y[idx]).square().mean()
            try:
                grads = dict(zip(leaves, tape.gradients(loss, list(leaves.values()))))
            except NonFiniteError as exc:
                raise NonFiniteError(f"LSTM training diverged at epoch {epoch}: {exc}") from exc
            params = opt.step(params, clip_gradients(grads, clip))
        cell = cell.with_params(params)
        losses.append(lstm_loss(cell, X, y))
        if not math.isfinite(losses[-1]):
            raise NonFiniteError(f"LSTM training loss became {losses[-1]} at epoch {epoch}")
    return cell, losses
