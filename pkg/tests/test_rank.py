import json
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segrank.errors import ConfigError
from segrank.rank import (
    compute_weights,
    minmax_scale,
    percentile_scale,
    read_weight_override,
    scale_matrix,
    score_customers,
    scorecard_json,
    top_report,
    write_scorecard_csv,
)

EXAMPLE_WEIGHTS = [0.36, 0.29, 0.07, 0.28]
CUSTOMER_A = [7.5, 6.7, 8.5, 5.0]
CUSTOMER_B = [8.1, 7.2, 3.5, 5.0]

# Influence table of the published boosting summary, in its listed order.
PUBLISHED_INFLUENCE = {
    "net_process_fee_retained": 36.77701480,
    "assets": 25.19182328,
    "process_fee": 13.33079741,
    "process_fee_submitted": 9.26058454,
    "profit": 5.66322225,
    "exchange_return_2": 2.62785058,
    "interest_return": 2.40238731,
    "withdraw_rate": 1.43803933,
    "trading_amount": 1.35680177,
    "deposit": 0.97319663,
    "withdraw_amount": 0.62361284,
    "profit_rate": 0.25609163,
    "order_amount": 0.07323309,
    "turnover_rate": 0.02534453,
}


def test_worked_example_totals():
    card = score_customers(EXAMPLE_WEIGHTS, [CUSTOMER_A, CUSTOMER_B], codes=["A", "B"])
    assert round(card.total[0], 3) == 6.638
    assert round(card.total[1], 3) == 6.649
    assert card.rank.tolist() == [2, 1]


def test_worked_example_in_decimal_arithmetic():
    w = [Decimal(str(x)) for x in EXAMPLE_WEIGHTS]
    for scores, expected in ((CUSTOMER_A, "6.638"), (CUSTOMER_B, "6.649")):
        exact = sum(a * Decimal(str(s)) for a, s in zip(w, scores))
        assert exact == Decimal(expected)
        card = score_customers(EXAMPLE_WEIGHTS, [scores])
        assert f"{card.total[0]:.3f}" == expected


def test_weights_from_single_variable():
    assert compute_weights([100, 0, 0]).tolist() == [1.0, 0.0, 0.0]


def test_weights_from_published_table():
    w = dict(zip(PUBLISHED_INFLUENCE, compute_weights(PUBLISHED_INFLUENCE)))
    assert round(w["net_process_fee_retained"], 4) == 0.3678
    assert round(w["assets"], 4) == 0.2519
    assert abs(sum(w.values()) - 1.0) <= 1e-12


def test_weights_reject_negative():
    with pytest.raises(ValueError):
        compute_weights([50, -1, 51])


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=20).filter(lambda v: sum(v) > 1e-9))
def test_weights_sum_to_one(values):
    w = compute_weights(values)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all((w >= 0) & (w <= 1))


def test_percentile_hand_midranks():
    np.testing.assert_allclose(percentile_scale([10, 20, 30]), [10 / 3, 20 / 3, 10.0], rtol=0, atol=1e-15)


def test_percentile_ties_share_score():
    s = percentile_scale([1, 5, 5, 9])
    assert s[1] == s[2] == 10 * 2.5 / 4


def test_percentile_constant_column():
    assert percentile_scale([3.0] * 6).tolist() == [5.0] * 6


def test_percentile_direction_flips():
    np.testing.assert_allclose(percentile_scale([10, 20, 30], direction=-1), [10.0, 20 / 3, 10 / 3])


def test_percentile_rejects_nonfinite():
    with pytest.raises(ValueError):
        percentile_scale([1.0, np.nan])


def test_minmax_scale():
    assert minmax_scale([2.0, 4.0, 6.0]).tolist() == [0.0, 5.0, 10.0]
    assert minmax_scale([2.0, 4.0, 6.0], direction=-1).tolist() == [10.0, 5.0, 0.0]
    assert minmax_scale([1.0, 1.0]).tolist() == [5.0, 5.0]


def test_scale_matrix_unknown_method():
    with pytest.raises(ConfigError):
        scale_matrix(np.ones((3, 2)), method="zscore")


def test_all_weight_on_one_feature():
    scaled = np.array([[1.0, 9.0], [4.0, 2.0], [7.5, 0.5]])
    card = score_customers([0.0, 1.0], scaled)
    assert card.total.tolist() == scaled[:, 1].tolist()


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        score_customers([0.5, 0.5], np.ones((4, 3)))


def test_ties_broken_by_code():
    card = score_customers([1.0], [[5.0], [5.0], [6.0]], codes=["C3", "C1", "C2"])
    assert [code for _, code, _ in card.top(3)] == ["C2", "C1", "C3"]


def _random_card(seed, n=40, d=4):
    rng = np.random.default_rng(seed)
    X = rng.lognormal(size=(n, d))
    X[:, 1] = np.round(X[:, 1])  # some ties
    w = compute_weights(rng.uniform(0, 100, d))
    return X, w, [f"C{i:03d}" for i in range(n)]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_scorecard_invariants(seed):
    X, w, codes = _random_card(seed)
    card = score_customers(w, scale_matrix(X), codes)
    assert sorted(card.rank.tolist()) == list(range(1, len(codes) + 1))
    assert np.all((card.scaled >= 0) & (card.scaled <= 10))
    assert np.all((card.total >= 0) & (card.total <= 10 + 1e-12))
    np.testing.assert_array_equal(card.total, card.scaled @ w)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3), st.sampled_from(["exp", "cube", "log1p", "affine"]))
def test_rank_invariant_under_monotone_transform(seed, col, kind):
    X, w, codes = _random_card(seed)
    f = {"exp": np.exp, "cube": lambda v: v**3, "log1p": np.log1p,
         "affine": lambda v: 3.0 * v - 7.0}[kind]
    Y = X.copy()
    Y[:, col] = f(Y[:, col])
    a = score_customers(w, scale_matrix(X), codes)
    b = score_customers(w, scale_matrix(Y), codes)
    assert a.rank.tolist() == b.rank.tolist()
    assert a.total.tolist() == b.total.tolist()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 39), st.integers(0, 3))
def test_raising_a_value_never_lowers_total(seed, row, col):
    X, w, codes = _random_card(seed)
    before = score_customers(w, scale_matrix(X), codes).total[row]
    Y = X.copy()
    Y[row, col] = X[:, col].max() + 1.0
    after = score_customers(w, scale_matrix(Y), codes).total[row]
    assert after >= before - 1e-12


def test_weight_override(tmp_path):
    w = read_weight_override({"a": "0.25", "b": "0.75"}, ["a", "b", "c"])
    assert w.tolist() == [0.25, 0.75, 0.0]
    with pytest.raises(ConfigError):
        read_weight_override({"a": "0.5"}, ["a", "b"])
    with pytest.raises(ConfigError):
        read_weight_override({"z": "1"}, ["a", "b"])


def test_outputs(tmp_path):
    card = score_customers(EXAMPLE_WEIGHTS, [CUSTOMER_A, CUSTOMER_B], codes=["A", "B"],
                           features=["w", "x", "y", "z"])
    path = tmp_path / "s.csv"
    write_scorecard_csv(path, card)
    lines = path.read_text().splitlines()
    assert lines[0] == "customer_code,w,x,y,z,total,rank"
    assert lines[1].startswith("B,") and lines[1].endswith(",1")
    doc = json.loads(scorecard_json(card))
    assert doc["customers"][0]["customer_code"] == "B"
    report = top_report(card, 1)
    assert "6.649" in report and "6.638" not in report
