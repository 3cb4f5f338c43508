"""Stochastic gradient boosting of least-squares regression trees."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from ..dataset import FeatureMatrix
from ..errors import ConfigError
from . import _kernels


@dataclass(frozen=True)
class GbmParams:
    """Boosting hyperparameters.

    ``interaction_depth`` is the number of splits per tree, grown best
    first, so a tree is never deeper than it.
    """

    n_trees: int = 5000
    shrinkage: float = 0.01
    interaction_depth: int = 3
    bag_fraction: float = 0.5
    min_node: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ConfigError(f"n_trees must be >= 0, got {self.n_trees}")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ConfigError(f"shrinkage must be in (0, 1], got {self.shrinkage}")
        if self.interaction_depth < 1:
            raise ConfigError(f"interaction_depth must be >= 1, got {self.interaction_depth}")
        if not 0.0 < self.bag_fraction <= 1.0:
            raise ConfigError(f"bag_fraction must be in (0, 1], got {self.bag_fraction}")
        if self.min_node < 1:
            raise ConfigError(f"min_node must be >= 1, got {self.min_node}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class RegressionTree:
    split_var: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    improvement: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            nd = 0
            while self.split_var[nd] >= 0:
                nd = self.left[nd] if row[self.split_var[nd]] < self.threshold[nd] else self.right[nd]
            out[i] = self.value[nd]
        return out

    @property
    def internal(self) -> np.ndarray:
        return np.flatnonzero(self.split_var >= 0)

    def depth(self) -> int:
        def walk(nd):
            if self.split_var[nd] < 0:
                return 0
            return 1 + max(walk(self.left[nd]), walk(self.right[nd]))
        return walk(0)


@dataclass(frozen=True)
class GbmModel:
    feature_names: tuple[str, ...]
    init: float
    params: GbmParams
    split_var: np.ndarray  # (n_trees, M) padded node arrays
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    improvement: np.ndarray
    value: np.ndarray
    oob_improvement: np.ndarray
    train_loss: np.ndarray

    @property
    def n_trees(self) -> int:
        return self.split_var.shape[0]

    @property
    def shrinkage(self) -> float:
        return self.params.shrinkage

    def tree(self, m: int) -> RegressionTree:
        return RegressionTree(
            self.split_var[m], self.threshold[m], self.left[m], self.right[m],
            self.improvement[m], self.value[m],
        )

    @property
    def trees(self) -> list[RegressionTree]:
        return [self.tree(m) for m in range(self.n_trees)]

    def _arrays(self):
        return self.split_var, self.threshold, self.left, self.right, self.value

    def _matrix(self, X) -> np.ndarray:
        if isinstance(X, Mapping):
            unknown = set(X) - set(self.feature_names)
            if unknown:
                raise KeyError(f"unknown column(s): {', '.join(sorted(unknown))}")
            missing = [c for c in self.feature_names if c not in X]
            if missing:
                raise KeyError(f"missing column(s): {', '.join(missing)}")
            return np.array([[float(X[c]) for c in self.feature_names]])
        if isinstance(X, FeatureMatrix):
            unknown = set(X.column_names) - set(self.feature_names)
            if unknown:
                raise KeyError(f"unknown column(s): {', '.join(sorted(unknown))}")
            return np.ascontiguousarray(X.select(self.feature_names).values)
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} columns, got {X.shape[1]}")
        return X

    def _n(self, n_trees):
        if n_trees is None:
            return self.n_trees
        if not 0 <= n_trees <= self.n_trees:
            raise ValueError(f"n_trees must be in [0, {self.n_trees}], got {n_trees}")
        return int(n_trees)

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        """init + shrinkage * (sum of the first ``n_trees`` tree outputs).

        ``X`` may be an array, a FeatureMatrix or a single row as a mapping
        from feature name to value.
        """
        m = self._n(n_trees)
        X = self._matrix(X)
        if m == 0:
            return np.full(X.shape[0], self.init)
        return self.init + self.shrinkage * _kernels.predict_sum(X, *self._arrays(), m)

    def to_dict(self) -> dict:
        trees = [
            {
                "split_var": self.split_var[m].tolist(),
                "threshold": self.threshold[m].tolist(),
                "left": self.left[m].tolist(),
                "right": self.right[m].tolist(),
                "improvement": self.improvement[m].tolist(),
                "value": self.value[m].tolist(),
            }
            for m in range(self.n_trees)
        ]
        return {
            "features": list(self.feature_names),
            "init": self.init,
            "params": asdict(self.params),
            "oob_improvement": self.oob_improvement.tolist(),
            "train_loss": self.train_loss.tolist(),
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GbmModel":
        params = GbmParams(**d["params"])
        M = 2 * params.interaction_depth + 1
        T = len(d["trees"])
        arrays = {
            "split_var": np.full((T, M), -1, dtype=np.int64),
            "threshold": np.zeros((T, M)),
            "left": np.full((T, M), -1, dtype=np.int64),
            "right": np.full((T, M), -1, dtype=np.int64),
            "improvement": np.zeros((T, M)),
            "value": np.zeros((T, M)),
        }
        for m, tree in enumerate(d["trees"]):
            for key, arr in arrays.items():
                arr[m, : len(tree[key])] = tree[key]
        return cls(
            feature_names=tuple(d["features"]),
            init=float(d["init"]),
            params=params,
            oob_improvement=np.asarray(d["oob_improvement"], dtype=float),
            train_loss=np.asarray(d["train_loss"], dtype=float),
            **arrays,
        )


def gaussian_loss(y, f) -> float:
    """Half mean squared error."""
    r = np.asarray(y, dtype=float) - np.asarray(f, dtype=float)
    return 0.5 * float(np.mean(r * r))


def negative_gradient(y, f) -> np.ndarray:
    """Pointwise negative gradient of 0.5 (y - f)^2 with respect to f."""
    return np.asarray(y, dtype=float) - np.asarray(f, dtype=float)


def bag_size(n: int, bag_fraction: float) -> int:
    return max(1, min(n, int(np.floor(bag_fraction * n))))


def gbm_fit(X, y, params: GbmParams = GbmParams(), feature_names: Sequence[str] | None = None) -> GbmModel:
    """Fit a Gaussian-loss boosted tree ensemble.

    Each iteration draws ``floor(bag_fraction * n)`` rows without
    replacement, grows a tree on the current residuals of those rows, and
    adds ``shrinkage`` times it to the fit. ``train_loss`` is the
    full-sample mean squared residual after each update and
    ``oob_improvement`` the drop in mean squared residual over the rows left
    out of that iteration's subsample (0 when none are left out).
    """
    if isinstance(X, FeatureMatrix):
        feature_names = X.column_names if feature_names is None else tuple(feature_names)
        data = X.select(feature_names).values
    else:
        data = np.asarray(X, dtype=float)
        if feature_names is None:
            feature_names = tuple(f"x{j}" for j in range(data.shape[1]))
    data = np.ascontiguousarray(data, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = data.shape
    if y.shape != (n,):
        raise ValueError(f"target length {y.shape} does not match {n} rows")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(data)):
        raise ValueError("gbm_fit needs finite inputs")
    if n < 2 * params.min_node:
        raise ValueError(f"need at least 2 * min_node = {2 * params.min_node} rows, got {n}")

    M = 2 * params.interaction_depth + 1
    init = float(y.mean())
    n_trees = 0 if np.all(y == y[0]) else params.n_trees
    shape = (n_trees, M)
    split_var = np.full(shape, -1, dtype=np.int64)
    threshold = np.zeros(shape)
    left = np.full(shape, -1, dtype=np.int64)
    right = np.full(shape, -1, dtype=np.int64)
    improvement = np.zeros(shape)
    value = np.zeros(shape)
    oob = np.zeros(n_trees)
    loss = np.zeros(n_trees)

    order = np.ascontiguousarray(np.argsort(data, axis=0, kind="stable").T)
    ids_sorted, uvals = _kernels.dense_ranks(np.take_along_axis(data.T, order, axis=1))
    order = order.astype(np.int32)
    rows = np.empty((p, n), dtype=np.int32)
    ids = np.empty((p, n), dtype=np.int32)
    rs = np.empty((p, n))
    goes_left = np.zeros(n, dtype=np.uint8)
    buf_i = np.empty(n, dtype=np.int32)
    buf_d = np.empty(n, dtype=np.int32)
    buf_r = np.empty(n)
    rng = np.random.Generator(np.random.PCG64(params.seed))
    n_bag = bag_size(n, params.bag_fraction)
    f = np.full(n, init)
    inbag = np.ones(n, dtype=np.uint8)
    for m in range(n_trees):
        if n_bag < n:
            inbag = np.zeros(n, dtype=np.uint8)
            inbag[rng.choice(n, n_bag, replace=False)] = True
        r = negative_gradient(y, f)
        sv, th, lc, rc, imp, val, _ = _kernels.grow_tree(
            ids_sorted, order, uvals, r, inbag, params.interaction_depth, params.min_node,
            rows, ids, rs, goes_left, buf_i, buf_d, buf_r,
        )
        split_var[m], threshold[m], left[m], right[m] = sv, th, lc, rc
        improvement[m], value[m] = imp, val
        pred = _kernels.predict_one_tree(data, split_var, threshold, left, right, value, m)
        loss[m], oob[m] = _kernels.apply_update(y, f, pred, params.shrinkage, inbag)

    return GbmModel(
        feature_names=tuple(feature_names),
        init=init,
        params=params,
        split_var=split_var,
        threshold=threshold,
        left=left,
        right=right,
        improvement=improvement,
        value=value,
        oob_improvement=oob,
        train_loss=loss,
    )


def smooth(values, window: int = 11) -> np.ndarray:
    """Centered moving average; the window shrinks at the edges."""
    v = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(v.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, v.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def best_iteration_oob(model_or_improvement, window: int = 11) -> int:
    """Smallest iteration count maximizing the cumulative smoothed OOB improvement."""
    imp = getattr(model_or_improvement, "oob_improvement", model_or_improvement)
    imp = np.asarray(imp, dtype=float)
    if imp.size == 0:
        raise ValueError("model has no trees")
    curve = np.cumsum(smooth(imp, window))
    return int(np.argmax(curve)) + 1


@dataclass(frozen=True)
class Influence:
    names: tuple[str, ...]
    values: np.ndarray  # percent, aligned with names
    degenerate: bool = False

    def ranked(self) -> list[tuple[str, float]]:
        order = sorted(range(len(self.names)), key=lambda j: (-self.values[j], j))
        return [(self.names[j], float(self.values[j])) for j in order]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


def relative_influence(model: GbmModel, n_trees: int | None = None) -> Influence:
    """Split improvements summed per variable over the first ``n_trees`` trees, scaled to 100."""
    m = model._n(n_trees)
    p = len(model.feature_names)
    sv = model.split_var[:m]
    mask = sv >= 0
    totals = np.bincount(sv[mask], weights=model.improvement[:m][mask], minlength=p)
    total = totals.sum()
    if m == 0 or total <= 0:
        return Influence(model.feature_names, np.full(p, 100.0 / p), degenerate=True)
    return Influence(model.feature_names, 100.0 * totals / total)
