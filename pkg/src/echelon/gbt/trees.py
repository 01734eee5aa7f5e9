"""Exact-greedy gradient-boosted regression trees (squared loss).

Trees are stored as flat node arrays.  Node ``k`` is a leaf when
``left[k] == -1``; otherwise rows with ``x[feature[k]] <= threshold[k]`` go
left.  ``cover[k]`` is the hessian mass that reached the node during fitting
(the row count under squared loss).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

TIE_RTOL = 1e-12


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, k: int) -> bool:
        return self.left[k] == -1

    def depth(self) -> int:
        def rec(k):
            if self.left[k] == -1:
                return 0
            return 1 + max(rec(self.left[k]), rec(self.right[k]))
        return rec(0)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _predict_tree(self.feature, self.threshold, self.left, self.right, self.value, X)

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.{k}": getattr(self, k).astype(float)
                for k in ("feature", "threshold", "left", "right", "value", "cover")}

    @classmethod
    def from_arrays(cls, arrays: dict, prefix: str) -> "Tree":
        get = lambda k: arrays[f"{prefix}.{k}"]
        return cls(get("feature").astype(np.int64), get("threshold"), get("left").astype(np.int64),
                   get("right").astype(np.int64), get("value"), get("cover"))


@njit(cache=True)
def _predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        k = 0
        while left[k] != -1:
            k = left[k] if X[r, feature[k]] <= threshold[k] else right[k]
        out[r] = value[k]
    return out


@njit(cache=True)
def _predict_packed(feature, threshold, left, right, value, roots, X):
    out = np.zeros(X.shape[0])
    for r in range(X.shape[0]):
        acc = 0.0
        for t in range(roots.shape[0]):
            base = roots[t]
            k = 0
            while left[base + k] != -1:
                k = left[base + k] if X[r, feature[base + k]] <= threshold[base + k] else right[base + k]
            acc += value[base + k]
        out[r] = acc
    return out


@njit(cache=True)
def _best_split(X, rows, g, h, lam, gamma):
    """Scan every feature and midpoint threshold; returns (gain, feature, threshold).

    Candidates are visited by feature then ascending threshold and a later one
    only wins when it beats the incumbent by more than a relative 1e-12, so
    near-ties resolve to the lowest (feature, threshold).
    """
    n = rows.shape[0]
    G = 0.0
    H = 0.0
    for i in range(n):
        G += g[rows[i]]
        H += h[rows[i]]
    parent = G * G / (H + lam)
    best_gain = -np.inf
    best_f = -1
    best_t = 0.0
    vals = np.empty(n)
    for f in range(X.shape[1]):
        for i in range(n):
            vals[i] = X[rows[i], f]
        order = np.argsort(vals, kind="mergesort")
        GL = 0.0
        HL = 0.0
        for j in range(n - 1):
            r = rows[order[j]]
            GL += g[r]
            HL += h[r]
            v, v_next = vals[order[j]], vals[order[j + 1]]
            if v_next <= v:
                continue
            GR = G - GL
            HR = H - HL
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - gamma
            tol = TIE_RTOL * max(1.0, abs(best_gain)) if best_f >= 0 else 0.0
            if best_f < 0 or gain > best_gain + tol:
                best_gain = gain
                best_f = f
                best_t = 0.5 * (v + v_next)
    return best_gain, best_f, best_t


def best_split(X, g, h, lam: float = 1.0, gamma: float = 0.0, rows=None):
    X = np.ascontiguousarray(X, dtype=float)
    rows = np.arange(len(X)) if rows is None else np.asarray(rows, dtype=np.int64)
    return _best_split(X, rows, np.asarray(g, float), np.asarray(h, float), float(lam), float(gamma))


def fit_tree(X, g, h, max_depth: int, lam: float = 1.0, gamma: float = 0.0) -> Tree:
    """Grow one tree by exact greedy search on gradient/hessian statistics."""
    X = np.ascontiguousarray(X, dtype=float)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("fit_tree needs a non-empty 2-d feature matrix")
    if len(g) != len(X) or len(h) != len(X):
        raise ValueError("gradients and hessians need one entry per row")
    feature, threshold, left, right, value, cover = [], [], [], [], [], []

    def new_node(rows):
        k = len(feature)
        G, H = float(g[rows].sum()), float(h[rows].sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(-G / (H + lam))
        cover.append(H)
        return k

    stack = [(new_node(np.arange(len(X))), np.arange(len(X)), 0)]
    while stack:
        k, rows, depth = stack.pop()
        if depth >= max_depth or len(rows) < 2:
            continue
        gain, f, t = _best_split(X, rows, g, h, float(lam), float(gamma))
        if f < 0 or gain <= 0:
            continue
        mask = X[rows, f] <= t
        lrows, rrows = rows[mask], rows[~mask]
        feature[k], threshold[k] = int(f), float(t)
        value[k] = 0.0
        left[k] = new_node(lrows)
        right[k] = new_node(rrows)
        stack.append((right[k], rrows, depth + 1))
        stack.append((left[k], lrows, depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value), np.array(cover))


@dataclass
class GbtParams:
    n_trees: int = 100
    max_depth: int = 3
    eta: float = 0.1
    lam: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be non-negative")
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be non-negative")


@dataclass
class GbtEnsemble:
    """``predict(x) = base_score + eta * sum(tree(x))`` (plus any external margin)."""

    base_score: float
    eta: float
    n_features: int
    trees: list[Tree] = field(default_factory=list)

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.ascontiguousarray(X)

    def _packed(self):
        # concatenated node arrays; child indices stay local to each tree
        key = len(self.trees)
        if getattr(self, "_pack_key", None) != key:
            cat = lambda name, dt: (np.concatenate([getattr(t, name) for t in self.trees]).astype(dt)
                                    if self.trees else np.zeros(0, dtype=dt))
            sizes = [t.n_nodes for t in self.trees]
            roots = np.cumsum([0] + sizes[:-1]).astype(np.int64) if sizes else np.zeros(0, np.int64)
            self._pack = (cat("feature", np.int64), cat("threshold", float), cat("left", np.int64),
                          cat("right", np.int64), cat("value", float), roots)
            self._pack_key = key
        return self._pack

    def raw_sum(self, X, n_trees: int | None = None) -> np.ndarray:
        X = self._check(X)
        if n_trees is not None and n_trees < len(self.trees):
            out = np.zeros(len(X))
            for tree in self.trees[:n_trees]:
                out += tree.predict(X)
            return out
        if not self.trees:
            return np.zeros(len(X))
        return _predict_packed(*self._packed(), X)

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        return self.base_score + self.eta * self.raw_sum(X, n_trees)


def gbt_fit(X, y, params: GbtParams | None = None, base_margin=None) -> GbtEnsemble:
    """Squared-error boosting: ``g = pred - y``, ``h = 1``.

    ``base_margin`` (one value per row) is added to every training prediction
    and must be added again at predict time; ``base_score`` is then the mean
    residual rather than the mean target.
    """
    params = params or GbtParams()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("gbt_fit needs at least two rows")
    if len(y) != len(X):
        raise ValueError("one target per row required")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ValueError("non-finite training data")
    margin = np.zeros(len(y)) if base_margin is None else np.asarray(base_margin, dtype=float)
    base = float(np.mean(y - margin))
    model = GbtEnsemble(base, params.eta, X.shape[1])
    pred = margin + base
    h = np.ones(len(y))
    for _ in range(params.n_trees):
        tree = fit_tree(X, pred - y, h, params.max_depth, params.lam, params.gamma)
        model.trees.append(tree)
        pred = pred + params.eta * tree.predict(X)
    return model


def gbt_predict(model: GbtEnsemble, x) -> np.ndarray | float:
    """Prediction for one row (returns a float) or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    out = model.predict(x)
    return float(out[0]) if x.ndim == 1 else out


def path_predict(model: GbtEnsemble, x) -> float:
    """Reference prediction by explicit node-by-node traversal."""
    total = 0.0
    for tree in model.trees:
        k = 0
        while tree.left[k] != -1:
            k = tree.left[k] if x[tree.feature[k]] <= tree.threshold[k] else tree.right[k]
        total += tree.value[k]
    return model.base_score + model.eta * total


def mse(model: GbtEnsemble, X, y, n_trees: int | None = None) -> float:
    return float(np.mean((model.predict(X, n_trees) - np.asarray(y)) ** 2))


def ensemble_arrays(model: GbtEnsemble, prefix: str = "gbt") -> tuple[dict, dict]:
    arrays = {}
    for i, tree in enumerate(model.trees):
        arrays.update(tree.to_arrays(f"{prefix}.{i}"))
    meta = {"base_score": model.base_score, "eta": model.eta, "n_features": model.n_features,
            "n_trees": len(model.trees)}
    return arrays, meta


def ensemble_from_arrays(arrays: dict, meta: dict, prefix: str = "gbt") -> GbtEnsemble:
    trees = [Tree.from_arrays(arrays, f"{prefix}.{i}") for i in range(int(meta["n_trees"]))]
    m = GbtEnsemble(float(meta["base_score"]), float(meta["eta"]), int(meta["n_features"]), trees)
    if not math.isfinite(m.base_score):
        raise ValueError("corrupt ensemble metadata")
    return m
