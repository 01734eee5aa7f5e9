"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

A :class:`Tape` records every operation in creation order, which is a valid
topological order, so the backward pass is a single reverse sweep.  Values
are float64 arrays; plain arrays and scalars mixed into an expression are
treated as constants.  Broadcasting is limited to what the networks here
need (a bias row over a batch, a per-row coefficient column) and gradients
are summed back to the operand shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Rng


class NonFiniteError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    __slots__ = ("tape", "index", "value", "parents", "backward", "op")
    __array_ufunc__ = None

    def __init__(self, tape, value, parents=(), backward=None, op="leaf"):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.backward = backward
        self.op = op
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return slice_(self, key)

    @property
    def T(self):
        return transpose(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def square(self):
        return square(self)

    def mean(self):
        return mean(self)

    def sum(self, axis=None):
        return sum_(self, axis)


class Tape:
    def __init__(self):
        self.nodes: list[Var] = []

    def param(self, value) -> Var:
        return Var(self, np.asarray(value, dtype=float))

    def backward(self, loss: Var) -> list:
        """Gradient buffer indexed like ``nodes``; entries are None where unreachable."""
        if loss.tape is not self:
            raise ValueError("loss belongs to another tape")
        if loss.value.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
        if not np.all(np.isfinite(loss.value)):
            raise NonFiniteError(f"non-finite loss {loss.value}")
        grads: list = [None] * len(self.nodes)
        grads[loss.index] = np.ones_like(loss.value)
        for i in range(loss.index, -1, -1):
            g = grads[i]
            node = self.nodes[i]
            if g is None or node.backward is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if parent is None or pg is None:
                    continue
                j = parent.index
                grads[j] = pg if grads[j] is None else grads[j] + pg
        return grads

    def gradients(self, loss: Var, wrt) -> list[np.ndarray]:
        buf = self.backward(loss)
        out = []
        for v in wrt:
            g = buf[v.index]
            g = np.zeros_like(v.value) if g is None else g
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient reached a {v.op} node")
            out.append(g)
        return out


def _lift(a, tape):
    if isinstance(a, Var):
        return a, a.value
    return None, np.asarray(a, dtype=float)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TypeError("at least one operand must be a Var")


def add(a, b) -> Var:
    tape = _tape_of(a, b)
    av, a_ = _lift(a, tape)
    bv, b_ = _lift(b, tape)
    sa, sb = a_.shape, b_.shape
    return Var(tape, a_ + b_, (av, bv),
               lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Var:
    tape = _tape_of(a, b)
    av, a_ = _lift(a, tape)
    bv, b_ = _lift(b, tape)
    sa, sb = a_.shape, b_.shape
    return Var(tape, a_ - b_, (av, bv),
               lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Var:
    tape = _tape_of(a, b)
    av, a_ = _lift(a, tape)
    bv, b_ = _lift(b, tape)
    sa, sb = a_.shape, b_.shape
    return Var(tape, a_ * b_, (av, bv),
               lambda g: (_unbroadcast(g * b_, sa) if av is not None else None,
                          _unbroadcast(g * a_, sb) if bv is not None else None), "mul")


def div(a, b) -> Var:
    tape = _tape_of(a, b)
    av, a_ = _lift(a, tape)
    bv, b_ = _lift(b, tape)
    sa, sb = a_.shape, b_.shape
    out = a_ / b_
    return Var(tape, out, (av, bv),
               lambda g: (_unbroadcast(g / b_, sa) if av is not None else None,
                          _unbroadcast(-g * out / b_, sb) if bv is not None else None), "div")


def matmul(a, b) -> Var:
    tape = _tape_of(a, b)
    av, a_ = _lift(a, tape)
    bv, b_ = _lift(b, tape)
    if a_.ndim != 2 or b_.ndim != 2:
        raise ValueError("matmul takes 2-d operands")
    return Var(tape, a_ @ b_, (av, bv),
               lambda g: (g @ b_.T if av is not None else None,
                          a_.T @ g if bv is not None else None), "matmul")


def transpose(a: Var) -> Var:
    return Var(a.tape, a.value.T, (a,), lambda g: (g.T,), "transpose")


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)
    return Var(a.tape, out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Var) -> Var:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Var(a.tape, out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a: Var) -> Var:
    mask = a.value > 0
    return Var(a.tape, np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def square(a: Var) -> Var:
    x = a.value
    return Var(a.tape, x * x, (a,), lambda g: (2.0 * g * x,), "square")


def mean(a: Var) -> Var:
    n, shape = a.value.size, a.value.shape
    return Var(a.tape, np.asarray(a.value.mean()), (a,),
               lambda g: (np.full(shape, float(g) / n),), "mean")


def sum_(a: Var, axis=None) -> Var:
    shape = a.value.shape
    if axis is None:
        return Var(a.tape, np.asarray(a.value.sum()), (a,),
                   lambda g: (np.full(shape, float(g)),), "sum")
    out = a.value.sum(axis=axis)
    return Var(a.tape, out, (a,),
               lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),), "sum")


def concat(parts, axis: int = -1) -> Var:
    tape = _tape_of(*parts)
    lifted = [_lift(p, tape) for p in parts]
    values = [v for _, v in lifted]
    out = np.concatenate(values, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in values])

    def back(g):
        grads = []
        for (var, _), lo, hi in zip(lifted, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            grads.append(g[tuple(idx)] if var is not None else None)
        return grads

    return Var(tape, out, tuple(v for v, _ in lifted), back, "concat")


def slice_(a: Var, key) -> Var:
    shape = a.value.shape

    def back(g):
        full = np.zeros(shape)
        full[key] = g
        return (full,)

    return Var(a.tape, a.value[key], (a,), back, "slice")


def forward_backward(fn, params: dict) -> tuple[float, dict]:
    """Evaluate ``fn(tape, vars) -> scalar Var`` and return (loss, grads by name)."""
    tape = Tape()
    leaves = {k: tape.param(v) for k, v in params.items()}
    loss = fn(tape, leaves)
    names = list(leaves)
    grads = tape.gradients(loss, [leaves[k] for k in names])
    return float(loss.value), dict(zip(names, grads))


def clip_gradients(grads: dict, max_norm: float) -> dict:
    """Rescale all gradients together when their global L2 norm exceeds ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return dict(grads)
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


@dataclass
class AdamW:
    """Adam with decoupled weight decay (decay applied before the moment update)."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> dict:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        out = {}
        for k, w in params.items():
            g = grads[k]
            if g.shape != w.shape:
                raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {w.shape}")
            if self.weight_decay:
                w = w - self.lr * self.weight_decay * w
            m = self.m.get(k)
            v = self.v.get(k)
            m = (1 - self.beta1) * g if m is None else self.beta1 * m + (1 - self.beta1) * g
            v = (1 - self.beta2) * g * g if v is None else self.beta2 * v + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            out[k] = w - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out


def adamw_step(params: dict, grads: dict, state: AdamW) -> dict:
    return state.step(params, grads)


def xavier_init(rows: int, cols: int, rng: Rng) -> np.ndarray:
    """Gaussian Xavier weights with variance 2 / (rows + cols)."""
    if rows < 1 or cols < 1:
        raise ValueError("dimensions must be positive")
    sd = math.sqrt(2.0 / (rows + cols))
    return rng.gaussians(rows * cols, 0.0, sd).reshape(rows, cols)
