"""Weighted percentile scorecard: influence -> weights -> per-feature scores -> rank."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError


@dataclass(frozen=True)
class ScoreCard:
    features: tuple[str, ...]
    weights: np.ndarray
    codes: tuple[str, ...]
    scaled: np.ndarray  # n x d, each in [0, 10]
    total: np.ndarray
    rank: np.ndarray  # 1 = best
    directions: tuple[int, ...] = ()
    method: str = "percentile"

    def order(self) -> np.ndarray:
        """Row indices from rank 1 downward."""
        return np.argsort(self.rank, kind="stable")

    def top(self, n: int = 20) -> list[tuple[int, str, float]]:
        return [(int(self.rank[i]), self.codes[i], float(self.total[i])) for i in self.order()[:n]]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "features": list(self.features),
            "weights": self.weights.tolist(),
            "directions": list(self.directions),
            "customers": [
                {"customer_code": self.codes[i], "rank": int(self.rank[i]),
                 "total": float(self.total[i]), "scaled": self.scaled[i].tolist()}
                for i in self.order()
            ],
        }


def compute_weights(influence) -> np.ndarray:
    """Relative influence in percent to proportions summing to one."""
    values = np.asarray(
        list(influence.values()) if isinstance(influence, Mapping) else influence, dtype=float
    )
    if np.any(values < 0):
        raise ValueError("influence must be non-negative")
    # Renormalize rather than divide by 100 so rounding in the input cannot leak.
    return values / values.sum()


def read_weight_override(mapping: Mapping[str, str], features: Sequence[str]) -> np.ndarray:
    """Weights from a ``feature=weight`` mapping; unlisted features get 0."""
    unknown = set(mapping) - set(features)
    if unknown:
        raise ConfigError(f"weight override names unknown feature(s): {', '.join(sorted(unknown))}")
    try:
        w = np.array([float(mapping.get(f, 0.0)) for f in features])
    except ValueError as exc:
        raise ConfigError(f"bad weight value: {exc}") from None
    if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
        raise ConfigError(f"override weights must be >= 0 and sum to 1, got sum {w.sum()!r}")
    return w


def percentile_scale(values, direction: int = 1) -> np.ndarray:
    """10 * midrank / n; a constant column scores 5.0 everywhere.

    ``direction=-1`` scores low raw values high.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0:
        return np.zeros(0)
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    if np.all(v == v[0]):
        return np.full(n, 5.0)
    return 10.0 * rankdata(v * (-1 if direction < 0 else 1), method="average") / n


def minmax_scale(values, direction: int = 1) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.zeros(0)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full(v.size, 5.0)
    s = 10.0 * (v - lo) / (hi - lo)
    return 10.0 - s if direction < 0 else s


def scale_matrix(X, directions: Sequence[int] | None = None, method: str = "percentile") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    directions = directions or [1] * X.shape[1]
    scaler = {"percentile": percentile_scale, "minmax": minmax_scale}.get(method)
    if scaler is None:
        raise ConfigError(f"unknown scaling method: {method}")
    if X.shape[0] == 0:
        return np.zeros(X.shape)
    return np.column_stack([scaler(X[:, j], directions[j]) for j in range(X.shape[1])])


def score_customers(weights, scaled, codes: Sequence[str] | None = None,
                    features: Sequence[str] | None = None, directions: Sequence[int] = (),
                    method: str = "percentile") -> ScoreCard:
    """Weighted total per customer and a dense 1..n ranking.

    Higher totals rank first; equal totals are ordered by customer code.
    """
    w = np.asarray(weights, dtype=float)
    S = np.atleast_2d(np.asarray(scaled, dtype=float))
    if S.shape[1] != w.size:
        raise ValueError(f"{w.size} weights for {S.shape[1]} score columns")
    n = S.shape[0]
    codes = tuple(codes) if codes is not None else tuple(str(i + 1) for i in range(n))
    if len(codes) != n:
        raise ValueError("one customer code per row required")
    features = tuple(features) if features is not None else tuple(f"f{j}" for j in range(w.size))
    total = S @ w
    order = sorted(range(n), key=lambda i: (-total[i], codes[i]))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(1, n + 1)
    return ScoreCard(features, w, codes, S, total, rank, tuple(directions), method)


def write_scorecard_csv(path, card: ScoreCard) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["customer_code", *card.features, "total", "rank"])
        for i in card.order():
            writer.writerow([card.codes[i], *(repr(float(x)) for x in card.scaled[i]),
                             repr(float(card.total[i])), int(card.rank[i])])


def scorecard_json(card: ScoreCard) -> str:
    return json.dumps(card.to_dict(), indent=1) + "\n"


def top_report(card: ScoreCard, n: int = 20) -> str:
    lines = [f"{'rank':>6}  {'customer_code':<16}  {'score':>8}"]
    for rank, code, total in card.top(n):
        lines.append(f"{rank:>6}  {code:<16}  {total:>8.3f}")
    return "\n".join(lines) + "\n"
