"""Deep Q-network ordering agent: MLP Q-function, replay buffer, epsilon-greedy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import AdamW, Tape, xavier_init
from ..core import Rng

Q_PARAMS = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class QNetwork:
    """Two hidden ReLU layers and one linear output per action."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @classmethod
    def init(cls, n_inputs: int, hidden: int, n_actions: int, rng: Rng) -> "QNetwork":
        return cls(xavier_init(hidden, n_inputs, rng), np.zeros(hidden),
                   xavier_init(hidden, hidden, rng), np.zeros(hidden),
                   xavier_init(n_actions, hidden, rng), np.zeros(n_actions))

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in Q_PARAMS}

    def with_params(self, p: dict) -> "QNetwork":
        return QNetwork(*(p[k] for k in Q_PARAMS))

    def copy(self) -> "QNetwork":
        return QNetwork(*(getattr(self, k).copy() for k in Q_PARAMS))

    def q(self, x: np.ndarray) -> np.ndarray:
        h = np.maximum(x @ self.W1.T + self.b1, 0.0)
        h = np.maximum(h @ self.W2.T + self.b2, 0.0)
        return h @ self.W3.T + self.b3


def q_tape(tape: Tape, P: dict, S: np.ndarray):
    h = (S @ P["W1"].T + P["b1"]).relu()
    h = (h @ P["W2"].T + P["b2"]).relu()
    return h @ P["W3"].T + P["b3"]


class ReplayBuffer:
    """Fixed-capacity ring buffer of (s, a, r, s', done) transitions."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.s2 = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a: int, r: float, s2, done: bool = False) -> None:
        k = self._next
        self.s[k], self.a[k], self.r[k], self.s2[k], self.done[k] = s, a, r, s2, done
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: Rng):
        if n > self.size:
            raise ValueError(f"buffer holds {self.size} transitions, asked for {n}")
        idx = np.minimum((rng.uniforms(n) * self.size).astype(np.int64), self.size - 1)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx]


@dataclass
class DqnAgent:
    online: QNetwork
    target: QNetwork
    buffer: ReplayBuffer
    actions: np.ndarray
    gamma: float = 0.99
    lr: float = 1e-3
    batch_size: int = 32
    target_period: int = 100
    train_steps: int = 0
    opt: AdamW = field(default=None)

    def __post_init__(self):
        if self.opt is None:
            self.opt = AdamW(lr=self.lr)

    @classmethod
    def create(cls, n_inputs: int, actions, rng: Rng, hidden: int = 64, capacity: int = 20000,
               **kw) -> "DqnAgent":
        actions = np.asarray(actions, dtype=float)
        if np.any(np.diff(actions) <= 0):
            raise ValueError("actions must be strictly increasing")
        online = QNetwork.init(n_inputs, hidden, len(actions), rng)
        return cls(online, online.copy(), ReplayBuffer(capacity, n_inputs), actions, **kw)


def order_actions(batch_size: int = 16, k: int = 15) -> np.ndarray:
    """Order quantities ``0, b, 2b, ..., k b``."""
    return batch_size * np.arange(k + 1, dtype=float)


def epsilon_at(step: int, total: int, start: float = 1.0, end: float = 0.1) -> float:
    """Linear decay from ``start`` to ``end`` over ``total`` steps, then flat."""
    if total <= 0:
        return end
    frac = min(max(step / total, 0.0), 1.0)
    return start + (end - start) * frac


def greedy_index(q: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the smallest order on ties
    return int(np.argmax(q))


def dqn_act_index(agent: DqnAgent, features, eps: float, rng: Rng) -> int:
    if not 0.0 <= eps <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if eps > 0 and rng.uniform() < eps:
        return rng.integers(0, len(agent.actions) - 1)
    return greedy_index(agent.online.q(np.asarray(features, dtype=float)))


def dqn_act(agent: DqnAgent, features, eps: float, rng: Rng) -> float:
    """Epsilon-greedy order quantity."""
    return float(agent.actions[dqn_act_index(agent, features, eps, rng)])


def td_target(reward, q_next, done, gamma: float) -> np.ndarray:
    """``r + gamma * max_a' Q_target(s', a')``, without bootstrap on terminal steps."""
    reward = np.asarray(reward, dtype=float)
    boot = np.max(np.asarray(q_next, dtype=float), axis=-1)
    return reward + gamma * np.where(done, 0.0, boot)


def dqn_loss(agent: DqnAgent, batch) -> float:
    s, a, r, s2, done = batch
    y = td_target(r, agent.target.q(s2), done, agent.gamma)
    q = agent.online.q(s)[np.arange(len(a)), a]
    return float(np.mean((q - y) ** 2))


def dqn_train_step(agent: DqnAgent, batch) -> float:
    """One MSE step toward the TD target; hard target copy every ``target_period`` steps.

    Returns the loss before the update.
    """
    s, a, r, s2, done = batch
    y = td_target(r, agent.target.q(s2), done, agent.gamma)
    mask = np.zeros((len(a), len(agent.actions)))
    mask[np.arange(len(a)), a] = 1.0
    tape = Tape()
    leaves = {k: tape.param(v) for k, v in agent.online.params().items()}
    q_sa = (q_tape(tape, leaves, s) * mask).sum(axis=1)
    loss = (q_sa - y).square().mean()
    grads = dict(zip(leaves, tape.gradients(loss, list(leaves.values()))))
    agent.online = agent.online.with_params(agent.opt.step(agent.online.params(), grads))
    agent.train_steps += 1
    if agent.train_steps % agent.target_period == 0:
        agent.target = agent.online.copy()
    return float(loss.value)
