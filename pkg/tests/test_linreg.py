import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ols_normal_equations
from segrank.dataset import SCHEMA, FeatureMatrix, SyntheticConfig, generate_synthetic
from segrank.errors import DegenerateDataError
from segrank.linreg import (
    clustering_dimensions,
    detect_aliased,
    fit_ols,
    format_p_value,
    log_transform_target,
    report_json,
    report_table,
    select_features,
    select_from_p_values,
)

SMALL_X = [[1, 2], [2, 1], [3, 4], [4, 3], [5, 7], [6, 5], [7, 8], [8, 6]]
SMALL_Y = [3, 5, 8, 9, 14, 12, 17, 16]

# Exact rational normal-equation solution with the incomplete-beta t tail,
# computed by tests/oracles.py; intercept first.
FROZEN_COEF = [0.7987012987012987, 1.2207792207792207, 0.935064935064935]
FROZEN_SE = [0.6015314687894592, 0.2081166298598455, 0.2081166298598455]
FROZEN_T = [1.3277797424441156, 5.865841771516985, 4.49298518669386]
FROZEN_P = [0.2416372968992028, 0.0020422572138723534, 0.006441044764670568]

# Published p-values for the 18 regressors (the customer code is not regressed).
# None stands for the NA reported for the column overlapping another.
PUBLISHED_P = {
    "assets": 1e-17,  # "<2e-16"
    "deposit": 1e-17,
    "profit": 7.43e-14,
    "profit_rate": 2e-16,
    "trading_volume": 0.0208,
    "trading_amount": 1e-17,
    "turnover_rate": 1e-17,
    "order_amount": 1e-17,
    "withdraw_amount": 1e-17,
    "withdraw_rate": 1e-17,
    "process_fee": 1e-17,
    "process_fee_submitted": 1e-17,
    "process_fee_retained": None,
    "net_process_fee_retained": 4.33e-05,
    "interest_revenue": 0.9139,
    "interest_return": 1e-17,
    "exchange_return_1": 0.9776,
    "exchange_return_2": 1e-17,
}


def _small_fit():
    return fit_ols(FeatureMatrix(("a", "b"), np.array(SMALL_X, float)), np.array(SMALL_Y, float))


def test_frozen_values_match_oracle():
    b, se, t, p = ols_normal_equations(SMALL_X, SMALL_Y)
    np.testing.assert_allclose(b, FROZEN_COEF, rtol=1e-14)
    np.testing.assert_allclose(se, FROZEN_SE, rtol=1e-14)
    np.testing.assert_allclose(t, FROZEN_T, rtol=1e-14)
    np.testing.assert_allclose(p, FROZEN_P, rtol=1e-12)


def test_small_fit_matches_frozen():
    fit = _small_fit()
    assert abs(fit.intercept - FROZEN_COEF[0]) <= 1e-8
    assert abs(fit.intercept_std_error - FROZEN_SE[0]) <= 1e-8
    assert abs(fit.intercept_p_value - FROZEN_P[0]) <= 1e-8
    np.testing.assert_allclose(fit.coefficients, FROZEN_COEF[1:], rtol=0, atol=1e-8)
    np.testing.assert_allclose(fit.std_errors, FROZEN_SE[1:], rtol=0, atol=1e-8)
    np.testing.assert_allclose(fit.t_stats, FROZEN_T[1:], rtol=0, atol=1e-8)
    np.testing.assert_allclose(fit.p_values, FROZEN_P[1:], rtol=0, atol=1e-8)
    assert fit.residual_df == 5
    assert not fit.aliased


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_integer_fits_match_oracle(seed):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(6, 15)), int(rng.integers(1, 4))
    X = rng.integers(-20, 21, size=(n, p))
    y = X @ rng.integers(-3, 4, size=p) + rng.integers(-10, 11, size=n)
    design = np.column_stack([np.ones(n), X])
    if np.linalg.matrix_rank(design) < p + 1:
        return
    b, se, t, pv = ols_normal_equations(X.tolist(), y.tolist())
    if min(se) == 0:
        return
    fit = fit_ols(FeatureMatrix(tuple(f"x{j}" for j in range(p)), X.astype(float)), y.astype(float))
    np.testing.assert_allclose(fit.coefficients, b[1:], rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(fit.std_errors, se[1:], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(fit.p_values, pv[1:], rtol=1e-6, atol=1e-10)


def test_perfect_fit_is_saturated():
    X = np.arange(10, dtype=float).reshape(-1, 1)
    fit = fit_ols(FeatureMatrix(("x",), X), 3.0 + 2.0 * X[:, 0])
    assert fit.saturated
    assert fit.p_values.tolist() == [0.0]
    assert fit.std_errors.tolist() == [0.0]
    assert abs(fit.coefficients[0] - 2.0) < 1e-12
    assert abs(fit.intercept - 3.0) < 1e-12
    assert fit.sigma2 == 0.0


def test_aliased_difference_column():
    rng = np.random.default_rng(0)
    fee = rng.uniform(10, 100, 50)
    submitted = fee * rng.uniform(0.2, 0.5, 50)
    other = rng.normal(size=50)
    X = FeatureMatrix(("fee", "submitted", "retained", "other"),
                      np.column_stack([fee, submitted, fee - submitted, other]))
    y = 0.1 * fee + other + rng.normal(scale=0.1, size=50)
    fit = fit_ols(X, y)
    assert fit.aliased == {"retained"}
    table = fit.p_value_table()
    assert list(table) == ["fee", "submitted", "retained", "other"]
    assert table["retained"] is None
    assert "retained" not in select_features(fit, alpha=1.0 - 1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_detect_aliased_finds_combinations(seed):
    rng = np.random.default_rng(seed)
    n = 30
    base = rng.normal(size=(n, 3)) * rng.uniform(1e-2, 1e4, 3)
    combo = base @ rng.normal(size=3)
    design = np.column_stack([np.ones(n), base, combo, rng.normal(size=n)])
    assert detect_aliased(design).tolist() == [False, False, False, False, True, False]


def test_constant_predictor_aliased_with_intercept():
    X = FeatureMatrix(("c", "x"), np.column_stack([np.full(12, 4.0), np.arange(12.0)]))
    fit = fit_ols(X, np.arange(12.0) + np.sin(np.arange(12.0)))
    assert fit.aliased == {"c"}


def test_too_few_rows():
    with pytest.raises(DegenerateDataError):
        fit_ols(FeatureMatrix(("a", "b"), np.ones((3, 2))), np.ones(3))


def test_published_table_selection():
    retained = select_from_p_values(PUBLISHED_P, 0.01)
    dropped = set(PUBLISHED_P) - set(retained)
    assert dropped == {"trading_volume", "process_fee_retained", "interest_revenue",
                       "exchange_return_1"}
    assert len(retained) == 14
    dims = clustering_dimensions(retained, SCHEMA)
    assert len(dims) == 15 and dims[0] == "total_contribution"


def test_selection_is_strict_and_ordered():
    table = {"b": 0.01, "a": 0.009, "customer_code": 0.0, "c": float("nan"), "d": 1e-5}
    assert select_from_p_values(table, 0.01) == ["a", "d"]
    with pytest.raises(DegenerateDataError):
        select_from_p_values({"x": 0.5}, 0.01)
    with pytest.raises(ValueError):
        select_from_p_values({"x": 0.5}, 0.0)


def test_log_transform_hand_cases():
    logs, excluded = log_transform_target([np.e, np.e**2])
    np.testing.assert_allclose(logs, [1.0, 2.0])
    assert excluded.tolist() == []
    logs, excluded = log_transform_target([10.0, 0.0, -5.0])
    np.testing.assert_allclose(logs, [np.log(10.0)])
    assert excluded.tolist() == [1, 2]


def _random_fit_data(seed, n=40, p=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p)) * rng.uniform(1e-2, 1e3, p)
    y = X @ rng.normal(size=p) + rng.normal(size=n) * 10
    return X, y


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residuals_orthogonal_to_design(seed):
    X, y = _random_fit_data(seed)
    fit = fit_ols(FeatureMatrix(("a", "b", "c"), X), y)
    design = np.column_stack([np.ones(len(y)), X])
    dots = design.T @ fit.residuals
    scale = np.linalg.norm(design, axis=0) * np.linalg.norm(fit.residuals)
    assert np.all(np.abs(dots) <= 1e-6 * scale)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2), st.floats(1e-4, 1e4))
def test_p_values_invariant_to_column_rescaling(seed, col, factor):
    X, y = _random_fit_data(seed)
    names = ("a", "b", "c")
    base = fit_ols(FeatureMatrix(names, X), y)
    Xs = X.copy()
    Xs[:, col] *= factor
    scaled = fit_ols(FeatureMatrix(names, Xs), y)
    np.testing.assert_allclose(scaled.p_values, base.p_values, rtol=1e-9, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2))
def test_duplicate_column_is_aliased_and_changes_nothing(seed, col):
    X, y = _random_fit_data(seed)
    base = fit_ols(FeatureMatrix(("a", "b", "c"), X), y)
    dup = fit_ols(FeatureMatrix(("a", "b", "c", "copy"), np.column_stack([X, X[:, col]])), y)
    assert dup.aliased == {"copy"}
    np.testing.assert_allclose(dup.coefficients, base.coefficients, rtol=1e-10, atol=1e-12)
    assert abs(dup.intercept - base.intercept) <= 1e-10 * max(1.0, abs(base.intercept))


def test_alpha_one_retains_all_non_aliased():
    X, y = _random_fit_data(3)
    fit = fit_ols(FeatureMatrix(("a", "b", "c"), X), y)
    assert select_features(fit, alpha=1.0) == ["a", "b", "c"]


def test_synthetic_exclusions_match_direct_count():
    tc = generate_synthetic(SyntheticConfig(n_customers=5000, seed=2)).column("total_contribution")
    logs, excluded = log_transform_target(tc)
    assert excluded.size == int(np.sum(tc <= 0)) and logs.size == int(np.sum(tc > 0))


def test_log_transform_excludes_nonpositive():
    logs, excluded = log_transform_target([1.0, 0.0, np.e, -2.0])
    np.testing.assert_allclose(logs, [0.0, 1.0])
    assert excluded.tolist() == [1, 3]
    with pytest.raises(DegenerateDataError):
        log_transform_target([0.0, 0.0])


def test_format_p_value():
    assert format_p_value(None) == "NA"
    assert format_p_value(1e-20) == "<2e-16"
    assert format_p_value(0.0208) == "0.0208"


def test_reports():
    fit = _small_fit()
    text = report_table(fit, ["a"])
    assert text.splitlines()[1].split() == ["a", "0.002042", "yes"]
    doc = json.loads(report_json(fit, ["a"], 0.01, 0))
    assert doc["retained"] == ["a"]
    assert doc["fit"]["p_values"] == pytest.approx(FROZEN_P[1:], abs=1e-8)
