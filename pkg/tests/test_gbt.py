import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from echelon.core import Rng
from echelon.gbt import (GbtEnsemble, GbtParams, Tree, best_split, brute_force_shap, fit_tree,
                         gbt_fit, gbt_predict, path_predict, permutation_importance, tree_shap,
                         tree_shap_matrix)
from echelon.gbt.trees import ensemble_arrays, ensemble_from_arrays, mse
from oracles import brute_split, ensemble_shapley


def stump(feature=0, t=0.5, lo=0.0, hi=1.0):
    return Tree(np.array([feature, -1, -1]), np.array([t, 0.0, 0.0]), np.array([1, -1, -1]),
                np.array([2, -1, -1]), np.array([0.0, lo, hi]), np.array([2.0, 1.0, 1.0]))


def random_problem(seed, rows=None, cols=None):
    r = Rng(seed)
    rows = rows or r.integers(10, 200)
    cols = cols or r.integers(1, 5)
    # coarse grid so that duplicate values and tied gains both occur
    X = np.floor(r.uniforms(rows * cols) * r.integers(3, 30)).reshape(rows, cols)
    g = r.gaussians(rows)
    h = 0.5 + r.uniforms(rows)
    return X, g, h


def test_single_row_is_leaf():
    tree = fit_tree(np.array([[1.0, 2.0]]), np.array([0.6]), np.array([1.0]), 3, lam=1.0)
    assert tree.n_nodes == 1 and tree.value[0] == pytest.approx(-0.6 / 2.0)


def test_depth_zero_leaf_weight():
    # squared loss from 0: g = pred - y = [0, -1], h = [1, 1]
    tree = fit_tree(np.array([[0.0], [1.0]]), np.array([0.0, -1.0]), np.ones(2), 0, lam=1.0)
    assert tree.n_nodes == 1 and tree.value[0] == pytest.approx(1 / 3)


def test_indicator_split_exact_fit():
    x = np.linspace(0, 1, 21)[:, None]
    y = (x[:, 0] > 0.5).astype(float)
    tree = fit_tree(x, -y, np.ones(len(y)), 1, lam=0.0)
    assert tree.feature[0] == 0 and tree.threshold[0] == pytest.approx(0.525)
    assert np.allclose(tree.predict(x), y)


@pytest.mark.parametrize("seed", range(20))
def test_best_split_matches_brute_force(seed):
    X, g, h = random_problem(seed)
    gain, f, t = best_split(X, g, h, 1.0, 0.0)
    bg, bf, bt = brute_split(X, g, h, 1.0, 0.0)
    assert (f, t) == (bf, bt)
    assert gain == pytest.approx(bg, rel=1e-9, abs=1e-12)


def test_split_tie_prefers_lowest_feature():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    _, f, t = best_split(X, np.array([1.0, 1.0, -1.0, -1.0]), np.ones(4), 1.0, 0.0)
    assert (f, t) == (0, 0.5)


def test_gamma_blocks_weak_split():
    X = np.array([[0.0], [1.0]])
    tree = fit_tree(X, np.array([0.1, -0.1]), np.ones(2), 3, lam=1.0, gamma=1.0)
    assert tree.n_nodes == 1


def test_constant_target():
    X = Rng(1).uniforms(60).reshape(30, 2)
    m = gbt_fit(X, np.full(30, 4.2), GbtParams(n_trees=5))
    assert m.base_score == pytest.approx(4.2)
    assert all(np.allclose(t.value, 0) for t in m.trees)


def test_linear_convergence():
    x = np.linspace(0, 1, 50)[:, None]
    y = 3 * x[:, 0] + 1
    m = gbt_fit(x, y, GbtParams(n_trees=100, max_depth=3, eta=0.3))
    assert np.sqrt(mse(m, x, y)) < 0.01 * y.std()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_training_mse_monotone(seed):
    r = Rng(seed)
    X = r.uniforms(120).reshape(40, 3)
    y = np.sin(5 * X[:, 0]) + r.gaussians(40, 0, 0.1)
    m = gbt_fit(X, y, GbtParams(n_trees=15, max_depth=2, eta=0.3))
    curve = [mse(m, X, y, k) for k in range(16)]
    assert all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))


def test_fit_errors():
    with pytest.raises(ValueError):
        gbt_fit(np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(ValueError):
        gbt_fit(np.zeros((3, 2)), np.array([0.0, np.nan, 1.0]))
    with pytest.raises(ValueError):
        fit_tree(np.zeros((0, 2)), np.zeros(0), np.zeros(0), 2)
    with pytest.raises(ValueError):
        GbtParams(eta=0.0)


def test_predict_contracts():
    empty = GbtEnsemble(2.5, 0.1, 3)
    assert gbt_predict(empty, np.zeros(3)) == 2.5
    m = GbtEnsemble(1.0, 0.1, 1, [stump(lo=-2.0, hi=5.0)])
    assert gbt_predict(m, np.array([0.2])) == pytest.approx(1.0 + 0.1 * -2.0)
    with pytest.raises(ValueError):
        m.predict(np.zeros((2, 2)))


def test_packed_predict_matches_paths():
    X = Rng(3).uniforms(400).reshape(100, 4)
    y = X @ np.array([1.0, -2.0, 0.5, 0.0])
    m = gbt_fit(X, y, GbtParams(n_trees=30, max_depth=4, eta=0.2))
    assert np.allclose(m.predict(X), [path_predict(m, x) for x in X], atol=1e-12)
    assert all(t.depth() <= 4 for t in m.trees)


def test_ensemble_array_round_trip():
    X = Rng(4).uniforms(60).reshape(20, 3)
    m = gbt_fit(X, X[:, 0], GbtParams(n_trees=4))
    arrays, meta = ensemble_arrays(m, "p")
    back = ensemble_from_arrays(arrays, meta, "p")
    assert np.array_equal(back.predict(X), m.predict(X))


def test_stump_shap_by_hand():
    m = GbtEnsemble(0.0, 0.3, 3, [stump(feature=0)])
    bg = np.array([[0.0, 5, 5], [0.2, 1, 1], [0.9, 2, 2], [1.0, 3, 3]])
    phi, base = tree_shap(m, np.array([1.0, 0.0, 0.0]), bg)
    assert base == pytest.approx(0.5 * 0.3)
    assert phi[0] == pytest.approx(0.5 * 0.3) and np.all(phi[1:] == 0)


def test_constant_model_zero_attribution():
    X = Rng(1).uniforms(40).reshape(20, 2)
    m = gbt_fit(X, np.ones(20), GbtParams(n_trees=3))
    phi, base = tree_shap(m, X[0], X)
    assert np.all(phi == 0) and base == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(8))
def test_tree_shap_equals_enumeration(seed):
    r = Rng(seed)
    M = r.integers(2, 5)
    X = r.uniforms(60 * M).reshape(60, M)
    y = X[:, 0] * X[:, -1] + np.sin(4 * X[:, 1 % M]) + r.gaussians(60, 0, 0.05)
    m = gbt_fit(X, y, GbtParams(n_trees=6, max_depth=4, eta=0.3))
    bg = X[:25]
    for x in X[40:44]:
        phi, base = tree_shap(m, x, bg)
        ref_phi, ref_base = ensemble_shapley(m, x, bg)
        assert np.allclose(phi, ref_phi, atol=1e-8) and base == pytest.approx(ref_base, abs=1e-8)
        assert np.allclose(brute_force_shap(m, x, bg)[0], ref_phi, atol=1e-8)
        assert base + phi.sum() == pytest.approx(gbt_predict(m, x), abs=1e-8)


def test_shap_matrix_rows_match_single():
    X = Rng(2).uniforms(90).reshape(30, 3)
    m = gbt_fit(X, X[:, 0] - X[:, 2], GbtParams(n_trees=5, max_depth=3))
    P, base = tree_shap_matrix(m, X[:5], X)
    for row, x in zip(P, X[:5]):
        assert np.allclose(row, tree_shap(m, x, X)[0], atol=1e-14)
    assert np.allclose(base + P.sum(axis=1), m.predict(X[:5]), atol=1e-10)


def test_zero_background_branch():
    # background never reaches the right child of the second split
    t = Tree(np.array([0, 1, -1, -1, -1]), np.array([0.5, 0.5, 0, 0, 0]), np.array([1, 3, -1, -1, -1]),
             np.array([2, 4, -1, -1, -1]), np.array([0, 0, 7.0, 1.0, 3.0]), np.ones(5))
    m = GbtEnsemble(0.0, 1.0, 2, [t])
    bg = np.array([[0.0, 0.0], [0.1, 0.2], [0.9, 0.0]])
    for x in ([0.0, 1.0], [1.0, 0.0], [0.0, 0.0]):
        phi, base = tree_shap(m, np.array(x), bg)
        ref, rbase = ensemble_shapley(m, np.array(x), bg)
        assert np.allclose(phi, ref, atol=1e-12) and base == pytest.approx(rbase)


def test_permutation_importance_finds_signal():
    r = Rng(5)
    X = r.uniforms(600).reshape(200, 3)
    y = 4 * X[:, 1]
    imp = permutation_importance(lambda Z: 4 * Z[:, 1], X, y, Rng(6), repeats=3)
    assert imp[1] > 0.5 and imp[0] == 0 and imp[2] == 0
