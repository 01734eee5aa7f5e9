"""Shapley attributions for tree ensembles.

:func:`tree_shap` runs the polynomial-time path-weight recursion (extend and
unwind a path of unique features, one pass per tree).  Node covers are
recomputed from a background matrix, so the attributions explain
``f(x) - E_background[f]`` under path-dependent conditioning.  A node that no
background row reached splits its (zero) mass half and half.

:func:`brute_force_shap` enumerates every coalition and is the reference for
tests on small feature counts.
"""
from __future__ import annotations

import math
from itertools import combinations

import numpy as np
from numba import njit

from .trees import GbtEnsemble, Tree


def background_fractions(tree: Tree, background) -> np.ndarray:
    """Fraction of a node's background mass that flows into each node (root = 1)."""
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if len(background) == 0:
        raise ValueError("background must be non-empty")
    cover = np.zeros(tree.n_nodes)
    for row in background:
        k = 0
        cover[0] += 1
        while tree.left[k] != -1:
            k = tree.left[k] if row[tree.feature[k]] <= tree.threshold[k] else tree.right[k]
            cover[k] += 1
    frac = np.ones(tree.n_nodes)
    for k in range(tree.n_nodes):
        if tree.left[k] == -1:
            continue
        l, r = tree.left[k], tree.right[k]
        if cover[k] > 0:
            frac[l], frac[r] = cover[l] / cover[k], cover[r] / cover[k]
        else:
            frac[l] = frac[r] = 0.5
    return frac


def expected_value(tree: Tree, frac: np.ndarray) -> float:
    def rec(k, w):
        if tree.left[k] == -1:
            return w * tree.value[k]
        return rec(tree.left[k], w * frac[tree.left[k]]) + rec(tree.right[k], w * frac[tree.right[k]])
    return rec(0, 1.0)


@njit(cache=True)
def _extend(d, z, o, w, ud, zf, of, fi):
    d[ud] = fi
    z[ud] = zf
    o[ud] = of
    w[ud] = 1.0 if ud == 0 else 0.0
    for i in range(ud - 1, -1, -1):
        w[i + 1] += of * w[i] * (i + 1) / (ud + 1)
        w[i] = zf * w[i] * (ud - i) / (ud + 1)


@njit(cache=True)
def _unwind(d, z, o, w, ud, pi):
    of = o[pi]
    zf = z[pi]
    nxt = w[ud]
    for i in range(ud - 1, -1, -1):
        if of != 0.0:
            tmp = w[i]
            w[i] = nxt * (ud + 1) / ((i + 1) * of)
            nxt = tmp - w[i] * zf * (ud - i) / (ud + 1)
        else:
            w[i] = w[i] * (ud + 1) / (zf * (ud - i))
    for i in range(pi, ud):
        d[i] = d[i + 1]
        z[i] = z[i + 1]
        o[i] = o[i + 1]


@njit(cache=True)
def _unwound_sum(z, o, w, ud, pi):
    of = o[pi]
    zf = z[pi]
    nxt = w[ud]
    total = 0.0
    if of != 0.0:
        for i in range(ud - 1, -1, -1):
            tmp = nxt / ((i + 1) * of)
            total += tmp
            nxt = w[i] - tmp * zf * (ud - i)
    else:
        for i in range(ud - 1, -1, -1):
            total += w[i] / (zf * (ud - i))
    return total * (ud + 1)


@njit(cache=True)
def _recurse(node, x, feature, threshold, left, right, value, frac, phi,
             pd, pz, po, pw, ud, zf, of, fi):
    d = pd.copy()
    z = pz.copy()
    o = po.copy()
    w = pw.copy()
    _extend(d, z, o, w, ud, zf, of, fi)
    if left[node] == -1:
        for i in range(1, ud + 1):
            s = _unwound_sum(z, o, w, ud, i)
            phi[d[i]] += s * (o[i] - z[i]) * value[node]
        return
    f = feature[node]
    if x[f] <= threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    iz = 1.0
    io = 1.0
    k = -1
    for i in range(1, ud + 1):
        if d[i] == f:
            k = i
            break
    if k >= 0:
        iz = z[k]
        io = o[k]
        _unwind(d, z, o, w, ud, k)
        ud -= 1
    # a branch with zero mass and zero one-fraction contributes nothing
    if frac[hot] * iz != 0.0 or io != 0.0:
        _recurse(hot, x, feature, threshold, left, right, value, frac, phi,
                 d, z, o, w, ud + 1, frac[hot] * iz, io, f)
    if frac[cold] * iz != 0.0:
        _recurse(cold, x, feature, threshold, left, right, value, frac, phi,
                 d, z, o, w, ud + 1, frac[cold] * iz, 0.0, f)


def tree_shap_single(tree: Tree, x, frac: np.ndarray, n_features: int) -> np.ndarray:
    phi = np.zeros(n_features + 1)
    depth = tree.depth() + 2
    empty_i = np.zeros(depth + 1, dtype=np.int64)
    empty = np.zeros(depth + 1)
    _recurse(0, np.asarray(x, dtype=float), tree.feature, tree.threshold, tree.left, tree.right,
             tree.value, frac, phi, empty_i, empty, empty, empty, 0, 1.0, 1.0, n_features)
    return phi[:n_features]


def tree_shap(model: GbtEnsemble, x, background) -> tuple[np.ndarray, float]:
    """Per-feature attributions and the base value for one row ``x``.

    ``base_value + phi.sum()`` equals the ensemble prediction at ``x``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_features,):
        raise ValueError(f"x must have {model.n_features} features")
    phi = np.zeros(model.n_features)
    base = model.base_score
    for tree in model.trees:
        frac = background_fractions(tree, background)
        phi += model.eta * tree_shap_single(tree, x, frac, model.n_features)
        base += model.eta * expected_value(tree, frac)
    return phi, base


def tree_shap_matrix(model: GbtEnsemble, X, background) -> tuple[np.ndarray, float]:
    """Attributions for every row of ``X``; covers are computed once per tree."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    phi = np.zeros((len(X), model.n_features))
    base = model.base_score
    for tree in model.trees:
        frac = background_fractions(tree, background)
        base += model.eta * expected_value(tree, frac)
        for r, x in enumerate(X):
            phi[r] += model.eta * tree_shap_single(tree, x, frac, model.n_features)
    return phi, base


def conditional_value(tree: Tree, frac: np.ndarray, x, subset) -> float:
    """``E[tree | x_S]`` with unknown features integrated out by background mass."""
    def rec(k):
        if tree.left[k] == -1:
            return tree.value[k]
        f = tree.feature[k]
        l, r = tree.left[k], tree.right[k]
        if f in subset:
            return rec(l) if x[f] <= tree.threshold[k] else rec(r)
        return frac[l] * rec(l) + frac[r] * rec(r)
    return rec(0)


def brute_force_shap(model: GbtEnsemble, x, background) -> tuple[np.ndarray, float]:
    """Shapley values by enumerating all ``2**M`` coalitions (small ``M`` only)."""
    m = model.n_features
    fracs = [background_fractions(t, background) for t in model.trees]

    def v(subset):
        s = frozenset(subset)
        return model.base_score + model.eta * sum(
            conditional_value(t, fr, x, s) for t, fr in zip(model.trees, fracs))

    cache = {}
    def val(subset):
        key = frozenset(subset)
        if key not in cache:
            cache[key] = v(key)
        return cache[key]

    phi = np.zeros(m)
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for size in range(m):
            weight = math.factorial(size) * math.factorial(m - size - 1) / math.factorial(m)
            for s in combinations(others, size):
                phi[i] += weight * (val(s + (i,)) - val(s))
    return phi, val(())


def permutation_importance(predict, X, y, rng, repeats: int = 5) -> np.ndarray:
    """Mean increase in MSE when one column is shuffled; works for any model."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    base = float(np.mean((predict(X) - y) ** 2))
    out = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(len(X)), j]
            out[j] += float(np.mean((predict(Xp) - y) ** 2)) - base
    return out / repeats
