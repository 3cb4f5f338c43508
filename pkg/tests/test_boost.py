import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_stump, naive_pdp, naive_predict
from segrank.boost import (
    GbmModel,
    GbmParams,
    additive_h,
    best_iteration_oob,
    gaussian_loss,
    gbm_fit,
    interaction_grid,
    negative_gradient,
    partial_dependence,
    quantile_grid,
    relative_influence,
    smooth,
)
from segrank.dataset import FeatureMatrix
from segrank.errors import ConfigError

STUMP = GbmParams(n_trees=1, shrinkage=1.0, interaction_depth=1, bag_fraction=1.0, min_node=1)

# 20-point 1-D example; split and leaf values from the exhaustive scan in
# tests/oracles.py.
STUMP_X = np.arange(20.0).reshape(-1, 1)
STUMP_Y = np.r_[np.full(7, 1.0), np.full(13, 4.0)] + 0.1 * np.sin(np.arange(20.0))
FROZEN_STUMP = (0, 6.5, 41.02989933796002, 0.9985249450217635, 4.001450234478221)


def _data(seed, n=300, p=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = 3 * X[:, 0] - 2 * (X[:, 1] > 0) + X[:, 2] * X[:, 0] + rng.normal(scale=0.3, size=n)
    return X, y


def test_frozen_stump_matches_oracle():
    j, thr, imp, left, right = best_stump(STUMP_X, STUMP_Y)
    assert (j, thr) == FROZEN_STUMP[:2]
    np.testing.assert_allclose([imp, left, right], FROZEN_STUMP[2:], rtol=1e-12)


def test_stump_on_one_dimensional_example():
    m = gbm_fit(STUMP_X, STUMP_Y, STUMP)
    t = m.tree(0)
    assert t.split_var[0] == 0 and t.threshold[0] == 6.5
    assert t.improvement[0] == pytest.approx(FROZEN_STUMP[2], rel=1e-10)
    left, right = t.left[0], t.right[0]
    assert m.init + t.value[left] == pytest.approx(FROZEN_STUMP[3], rel=1e-12)
    assert m.init + t.value[right] == pytest.approx(FROZEN_STUMP[4], rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_stump_equals_exhaustive_scan(seed, p):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(200, p))
    y = rng.normal(size=200) + X[:, -1]
    m = gbm_fit(X, y, STUMP)
    j, thr, imp, left, right = best_stump(X, y - y.mean())
    t = m.tree(0)
    assert (t.split_var[0], t.threshold[0]) == (j, thr)
    assert t.improvement[0] == pytest.approx(imp, rel=1e-9)
    assert t.value[t.left[0]] == pytest.approx(left, abs=1e-12)
    assert t.value[t.right[0]] == pytest.approx(right, abs=1e-12)


def test_stump_respects_min_node():
    X = np.arange(30.0).reshape(-1, 1)
    y = np.r_[10.0, np.zeros(29)]
    m = gbm_fit(X, y, GbmParams(n_trees=1, shrinkage=1.0, interaction_depth=1,
                                 bag_fraction=1.0, min_node=5))
    assert m.tree(0).threshold[0] == best_stump(X, y, min_node=5)[1] == 4.5


def test_tie_breaks_to_lower_column():
    X = np.column_stack([np.arange(40.0), np.arange(40.0)])
    y = (np.arange(40) >= 20).astype(float)
    t = gbm_fit(X, y, STUMP).tree(0)
    assert t.split_var[0] == 0 and t.threshold[0] == 19.5


def test_constant_target():
    X = np.random.default_rng(0).normal(size=(40, 2))
    m = gbm_fit(X, np.full(40, 5.0), GbmParams(n_trees=50))
    assert m.init == 5.0 and m.n_trees == 0
    assert m.oob_improvement.tolist() == []
    assert m.predict(X).tolist() == [5.0] * 40
    assert relative_influence(m).degenerate


def test_too_few_rows():
    with pytest.raises(ValueError):
        gbm_fit(np.ones((19, 2)), np.arange(19.0), GbmParams(min_node=10))


def test_bad_params():
    for kwargs in ({"shrinkage": 0.0}, {"bag_fraction": 1.5}, {"interaction_depth": 0},
                   {"min_node": 0}, {"n_trees": -1}):
        with pytest.raises(ConfigError):
            GbmParams(**kwargs)


def test_tree_structure_invariants():
    X, y = _data(1)
    m = gbm_fit(X, y, GbmParams(n_trees=60, interaction_depth=4, min_node=5, seed=3))
    for t in m.trees:
        internal = t.internal
        assert len(internal) <= 4
        assert t.depth() <= 4
        assert np.all(t.improvement[internal] >= 0)
        for nd in internal:
            assert t.left[nd] >= 0 and t.right[nd] >= 0


def test_improvement_is_sse_reduction_on_the_subsample():
    X, y = _data(2, n=120)
    params = GbmParams(n_trees=1, shrinkage=1.0, interaction_depth=3, bag_fraction=1.0, min_node=5)
    t = gbm_fit(X, y, params).tree(0)
    r = y - y.mean()

    def rows_at(target, nd=0, mask=None):
        mask = np.ones(len(y), bool) if mask is None else mask
        if nd == target:
            return mask
        if t.split_var[nd] < 0:
            return None
        go = X[:, t.split_var[nd]] < t.threshold[nd]
        return (rows_at(target, t.left[nd], mask & go)
                if rows_at(target, t.left[nd], mask & go) is not None
                else rows_at(target, t.right[nd], mask & ~go))

    sse = lambda v: float(((v - v.mean()) ** 2).sum())
    for nd in t.internal:
        mask = rows_at(nd)
        go = X[:, t.split_var[nd]] < t.threshold[nd]
        expected = sse(r[mask]) - sse(r[mask & go]) - sse(r[mask & ~go])
        assert t.improvement[nd] == pytest.approx(expected, rel=1e-9)


def test_prediction_base_cases():
    X, y = _data(3, n=100)
    m = gbm_fit(X, y, GbmParams(n_trees=1, shrinkage=0.1, interaction_depth=1, bag_fraction=1.0))
    assert m.predict(X, n_trees=0).tolist() == [m.init] * 100
    t = m.tree(0)
    row = np.zeros(4)
    row[t.split_var[0]] = t.threshold[0] - 1.0
    assert m.predict(row)[0] == m.init + 0.1 * t.value[t.left[0]]


def test_predict_matches_naive_resummation():
    X, y = _data(4)
    m = gbm_fit(X, y, GbmParams(n_trees=100, shrinkage=0.05, seed=2))
    np.testing.assert_allclose(m.predict(X), naive_predict(m, X), rtol=1e-12, atol=1e-12)


def test_predict_increment_is_one_tree():
    X, y = _data(5)
    m = gbm_fit(X, y, GbmParams(n_trees=30, shrinkage=0.1, seed=5))
    for k in (1, 7, 30):
        step = m.predict(X, k) - m.predict(X, k - 1)
        np.testing.assert_allclose(step, 0.1 * m.tree(k - 1).predict(X), rtol=1e-12, atol=1e-12)


def test_predict_by_name_and_unknown_column():
    X, y = _data(6)
    X = X[:, :2]
    m = gbm_fit(FeatureMatrix(("a", "b"), X), y, GbmParams(n_trees=10))
    assert m.predict({"a": 0.3, "b": -1.0})[0] == m.predict(np.array([[0.3, -1.0]]))[0]
    with pytest.raises(KeyError):
        m.predict({"a": 0.3, "c": 1.0})
    with pytest.raises(ValueError):
        m.predict(X, n_trees=11)


def test_gradient_is_residual():
    rng = np.random.default_rng(7)
    y = rng.normal(size=5)
    f = rng.normal(size=5)
    g = negative_gradient(y, f)
    np.testing.assert_array_equal(g, y - f)
    h = 1e-6
    for i in range(5):
        up, down = f.copy(), f.copy()
        up[i] += h
        down[i] -= h
        # gaussian_loss is the mean of 0.5 (y - f)^2, so scale by n.
        fd = -(gaussian_loss(y, up) - gaussian_loss(y, down)) / (2 * h) * len(y)
        assert abs(fd - g[i]) <= 1e-6


def test_first_tree_targets_are_residuals():
    X, y = _data(8, n=100)
    m = gbm_fit(X, y, STUMP)
    j, thr, imp, left, right = best_stump(X, negative_gradient(y, np.full(100, y.mean())))
    assert m.tree(0).improvement[0] == pytest.approx(imp, rel=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_full_bag_loss_non_increasing(seed):
    X, y = _data(seed)
    m = gbm_fit(X, y, GbmParams(n_trees=200, bag_fraction=1.0, seed=seed))
    assert np.all(np.diff(m.train_loss) <= 0)
    assert np.all(m.train_loss > 0)
    assert np.all(m.oob_improvement == 0)


def test_determinism_and_serialization():
    X, y = _data(9)
    params = GbmParams(n_trees=40, seed=13)
    a, b = gbm_fit(X, y, params), gbm_fit(X, y, params)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    c = GbmModel.from_dict(json.loads(json.dumps(a.to_dict())))
    np.testing.assert_array_equal(c.predict(X), a.predict(X))
    np.testing.assert_array_equal(relative_influence(a).values, relative_influence(b).values)
    d = gbm_fit(X, y, GbmParams(n_trees=40, seed=14))
    assert not np.array_equal(d.predict(X), a.predict(X))


def test_bag_size_and_oob():
    X, y = _data(10, n=101)
    m = gbm_fit(X, y, GbmParams(n_trees=20, bag_fraction=0.5))
    assert m.oob_improvement.shape == (20,)
    assert np.any(m.oob_improvement != 0)


def test_smooth_edges():
    np.testing.assert_allclose(smooth([1, 2, 3, 4, 5], 3), [1.5, 2, 3, 4, 4.5])
    np.testing.assert_array_equal(smooth([4, 1, 7], 1), [4, 1, 7])


def test_best_iteration_hand_examples():
    assert best_iteration_oob([3, 2, 1, -1, -1, -1], window=1) == 3
    assert best_iteration_oob([-1.0] * 10) == 1
    with pytest.raises(ValueError):
        best_iteration_oob([])


def test_best_iteration_on_planted_run():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(2000, 5))
    y = 2 * X[:, 0] + X[:, 1] + rng.normal(scale=2.0, size=2000)
    Xh = rng.normal(size=(2000, 5))
    yh = 2 * Xh[:, 0] + Xh[:, 1] + rng.normal(scale=2.0, size=2000)
    m = gbm_fit(X, y, GbmParams(n_trees=1500, shrinkage=0.1, interaction_depth=3, seed=1))
    best = best_iteration_oob(m)
    assert best < m.n_trees
    mse = lambda k: np.mean((yh - m.predict(Xh, k)) ** 2)
    assert mse(best) <= mse(m.n_trees)


def test_influence_of_single_variable_tree():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(100, 5))
    y = (X[:, 3] > 0).astype(float)
    m = gbm_fit(X, y, STUMP)
    infl = relative_influence(m)
    assert infl.values.tolist() == [0.0, 0.0, 0.0, 100.0, 0.0]


def test_influence_sums_to_100_and_ranks():
    X, y = _data(13)
    m = gbm_fit(FeatureMatrix(("a", "b", "c", "d"), X), y, GbmParams(n_trees=100, seed=1))
    infl = relative_influence(m, 50)
    assert abs(infl.values.sum() - 100.0) <= 1e-9
    assert np.all(infl.values >= 0)
    ranked = infl.ranked()
    assert ranked[0][0] == "a"
    assert [v for _, v in ranked] == sorted(infl.values.tolist(), reverse=True)


def test_pdp_matches_brute_force():
    X, y = _data(14, n=80)
    m = gbm_fit(X, y, GbmParams(n_trees=25, shrinkage=0.2, min_node=3, seed=4))
    names = m.feature_names
    for j in range(4):
        pd = partial_dependence(m, X, names[j], n_grid=9, n_trees=20)
        np.testing.assert_allclose(pd.pd_values, naive_pdp(m, X, j, pd.grid, 20), rtol=1e-12, atol=1e-12)
        assert np.all(np.diff(pd.grid) > 0)


def test_pdp_never_split_column_is_constant():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(200, 3))
    # Only three rows differ in column 2, fewer than min_node on either side.
    X[:, 2] = 0.0
    X[:3, 2] = 1.0
    y = 2 * X[:, 0] + 5 * X[:, 2] + rng.normal(scale=0.1, size=200)
    m = gbm_fit(X, y, GbmParams(n_trees=30, min_node=10, seed=0))
    assert not np.any(m.split_var == 2)
    pd = partial_dependence(m, X, "x2")
    assert pd.grid.tolist() == [0.0, 1.0]
    assert np.ptp(pd.pd_values) == 0.0
    assert pd.pd_values[0] == pytest.approx(m.predict(X).mean(), abs=1e-12)


def test_pdp_of_stump_is_two_level_step():
    X = np.arange(40.0).reshape(-1, 1)
    y = (X[:, 0] >= 25).astype(float) * 3.0
    m = gbm_fit(X, y, GbmParams(n_trees=1, shrinkage=0.5, interaction_depth=1, bag_fraction=1.0))
    t = m.tree(0)
    pd = partial_dependence(m, X, "x0", n_grid=40)
    expected = np.where(pd.grid < t.threshold[0], m.init + 0.5 * t.value[t.left[0]],
                        m.init + 0.5 * t.value[t.right[0]])
    np.testing.assert_allclose(pd.pd_values, expected, rtol=0, atol=1e-12)


def test_pdp_constant_column_and_errors():
    X, y = _data(16, n=60)
    X[:, 1] = 2.0
    m = gbm_fit(X, y, GbmParams(n_trees=5))
    pd = partial_dependence(m, X, "x1")
    assert pd.constant_var and pd.grid.tolist() == [2.0]
    with pytest.raises(KeyError):
        partial_dependence(m, X, "nope")
    with pytest.raises(ValueError):
        interaction_grid(m, X, "x0", "x0")


def test_quantile_grid_dedups():
    assert quantile_grid([1, 1, 1, 2], 5).tolist() == [1.0, 1.25, 2.0]


def test_additive_h_hand_cases():
    a = np.arange(4.0)[:, None]
    b = np.arange(3.0)[None, :]
    assert additive_h(a + b) == pytest.approx(0.0, abs=1e-12)
    assert additive_h(np.zeros((3, 3))) == 0.0
    assert additive_h(np.array([[1.0, -1.0], [-1.0, 1.0]])) == pytest.approx(1.0)


def test_interaction_grid_matches_brute_force():
    X, y = _data(17, n=60)
    m = gbm_fit(X, y, GbmParams(n_trees=15, shrinkage=0.3, min_node=3, seed=2))
    ig = interaction_grid(m, X, "x0", "x2", n_grid=5)
    for i, va in enumerate(ig.grid_a):
        Xv = X.copy()
        Xv[:, 0] = va
        np.testing.assert_allclose(ig.pd_values[i], naive_pdp(m, Xv, 2, ig.grid_b), rtol=1e-12, atol=1e-12)
