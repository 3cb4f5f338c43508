"""Customer grouping: k-means with k-means++ seeding, elbow selection,
2-D principal-component projection and the sigma-band alternative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kmeans_kernels as _km
from .dataset import FeatureMatrix, Scaling
from .errors import DegenerateDataError


@dataclass(frozen=True)
class KMeansModel:
    k: int
    centroids: np.ndarray  # fitted space (standardized when scaling is set)
    centroids_original: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_trace: tuple[float, ...]
    sizes: np.ndarray
    seed: int
    n_iter: int
    converged: bool
    column_names: tuple[str, ...] = ()
    scaling: Scaling | None = None

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "columns": list(self.column_names),
            "centroids_standardized": self.centroids.tolist(),
            "centroids_original": self.centroids_original.tolist(),
            "sizes": self.sizes.tolist(),
            "inertia": self.inertia,
            "inertia_trace": list(self.inertia_trace),
            "n_iter": self.n_iter,
            "converged": self.converged,
            "scaling": self.scaling.to_dict() if self.scaling is not None else None,
        }


def _sq_dist_to(X: np.ndarray, c: np.ndarray) -> np.ndarray:
    diff = X - c
    return np.einsum("ij,ij->i", diff, diff)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dist_to(X, centers[0])
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            # Fewer distinct points than k; duplicates get repaired later.
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[i] = X[idx]
        np.minimum(closest, _sq_dist_to(X, centers[i]), out=closest)
    return centers


def _repair_empty(X, centroids, labels, costs, k):
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        # A lone member's cost is zero, so stealing it cannot empty its cluster.
        far = int(np.argmax(costs))
        if costs[far] <= 0:
            break
        counts[labels[far]] -= 1
        centroids[c] = X[far]
        labels[far] = c
        costs[far] = 0.0
        counts[c] = 1


def _lloyd(X, k, rng, max_iter):
    n = X.shape[0]
    centroids = _kmeanspp(X, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    costs = np.empty(n)
    _km.point_costs(X, centroids, labels, costs)
    _km.assign(X, centroids, labels, costs)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        _repair_empty(X, centroids, labels, costs, k)
        sums, counts = _km.cluster_sums(X, labels, k)
        occupied = counts > 0
        centroids[occupied] = sums[occupied] / counts[occupied, None]
        trace.append(_km.point_costs(X, centroids, labels, costs))
        # Points only ever move to a strictly closer centroid, so the
        # inertia trace cannot increase.
        if _km.assign(X, centroids, labels, costs) == 0:
            converged = True
            break
    return centroids, labels, costs, trace, it, converged


def kmeans_fit(
    X,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    n_restarts: int = 10,
    scaling: Scaling | None = None,
) -> KMeansModel:
    """Best-of-``n_restarts`` Lloyd k-means from k-means++ seeds.

    ``X`` is the matrix to cluster (normally already standardized); when
    ``scaling`` is given the centroids are also reported in original units.
    Restart r draws from ``SeedSequence(seed).spawn(n_restarts)[r]``; ties in
    inertia go to the lowest restart index.
    """
    names = tuple(X.column_names) if isinstance(X, FeatureMatrix) else ()
    data = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    n = data.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n_rows={n}, got {k}")
    if n_restarts < 1 or max_iter < 1:
        raise ValueError("n_restarts and max_iter must be >= 1")
    data = np.ascontiguousarray(data)
    best = None
    for child in np.random.SeedSequence(seed).spawn(n_restarts):
        rng = np.random.Generator(np.random.PCG64(child))
        result = _lloyd(data, k, rng, max_iter)
        if best is None or result[3][-1] < best[3][-1]:
            best = result
    centroids, labels, costs, trace, n_iter, converged = best
    sizes = np.bincount(labels, minlength=k)
    original = scaling.invert(centroids) if scaling is not None else centroids.copy()
    return KMeansModel(
        k=k,
        centroids=centroids,
        centroids_original=original,
        assignments=labels,
        inertia=trace[-1],
        inertia_trace=tuple(trace),
        sizes=sizes,
        seed=seed,
        n_iter=n_iter,
        converged=converged,
        column_names=names,
        scaling=scaling,
    )


@dataclass(frozen=True)
class ElbowCurve:
    ks: tuple[int, ...]
    costs: tuple[float, ...]
    violations: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"ks": list(self.ks), "costs": list(self.costs), "violations": list(self.violations)}


def elbow_seed(seed: int, k: int) -> int:
    """Per-k seed, derived so each k's fit is independent of k_max."""
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])


def elbow_curve(X, k_max: int, seed: int = 0, n_restarts: int = 10, max_iter: int = 300) -> ElbowCurve:
    """Converged inertia of k-means for k = 1..k_max (capped at n_rows)."""
    if k_max < 3:
        raise ValueError(f"k_max must be >= 3, got {k_max}")
    n = X.n_rows if isinstance(X, FeatureMatrix) else len(X)
    ks = tuple(range(1, min(k_max, n) + 1))
    costs = tuple(
        kmeans_fit(X, k, seed=elbow_seed(seed, k), max_iter=max_iter, n_restarts=n_restarts).inertia
        for k in ks
    )
    violations = tuple(
        ks[i] for i in range(1, len(costs)) if costs[i] > costs[i - 1] * (1 + 1e-12)
    )
    return ElbowCurve(ks, costs, violations)


def detect_elbow(curve: ElbowCurve, method: str = "curvature") -> tuple[int, bool]:
    """Pick k at the sharpest bend of the cost curve.

    ``curvature`` takes the interior k maximizing the second difference
    ``cost(k-1) - 2 cost(k) + cost(k+1)``; ``chord`` takes the point farthest
    below the straight line joining the end points. Returns ``(k, no_elbow)``
    where ``no_elbow`` marks an exactly linear curve (k is then 1); the
    linearity tolerance is relative to the cost range, so the choice is
    unchanged by positive affine rescaling of the costs.
    """
    costs = np.asarray(curve.costs, dtype=float)
    ks = np.asarray(curve.ks)
    if len(costs) < 3:
        raise ValueError("need at least 3 points on the elbow curve")
    span = np.ptp(costs)
    if method == "curvature":
        second = costs[:-2] - 2.0 * costs[1:-1] + costs[2:]
        if span == 0 or np.all(np.abs(second) <= 1e-12 * span):
            return 1, True
        return int(ks[1:-1][int(np.argmax(second))]), False
    if method == "chord":
        t = (ks - ks[0]) / (ks[-1] - ks[0])
        line = costs[0] + t * (costs[-1] - costs[0])
        gap = line - costs
        if span == 0 or np.all(np.abs(gap) <= 1e-12 * span):
            return 1, True
        return int(ks[int(np.argmax(gap))]), False
    raise ValueError(f"unknown elbow method: {method}")


@dataclass(frozen=True)
class Projection:
    scores: np.ndarray
    loadings: np.ndarray  # d x 2
    eigenvalues: np.ndarray  # all, descending
    explained_fraction: float


def pca_project_2d(X) -> Projection:
    """Scores on the top two eigenvectors of the sample covariance."""
    data = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    n, d = data.shape
    if n < 3 or d < 2:
        raise ValueError("pca_project_2d needs n_rows >= 3 and n_cols >= 2")
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    if total <= 0:
        raise DegenerateDataError("zero covariance: all rows identical")
    loadings = evecs[:, :2].copy()
    for j in range(2):
        nz = np.flatnonzero(np.abs(loadings[:, j]) > 1e-12)
        if nz.size and loadings[nz[0], j] < 0:
            loadings[:, j] *= -1
    return Projection(
        scores=centered @ loadings,
        loadings=loadings,
        eigenvalues=evals,
        explained_fraction=float(evals[:2].sum() / total),
    )


@dataclass(frozen=True)
class SigmaGrouping:
    benchmark_fraction: float
    cut_counts: tuple[int, ...]
    core_customer_count: int
    core_rows: np.ndarray  # original row indices, by assets ascending
    midpoint: float
    sigma: float
    band_edges: tuple[float, ...]
    z_scores: np.ndarray
    group_of: np.ndarray  # 1..7, aligned with core_rows

    def to_dict(self) -> dict:
        return {
            "benchmark_fraction": self.benchmark_fraction,
            "cut_counts": list(self.cut_counts),
            "core_customer_count": self.core_customer_count,
            "midpoint": self.midpoint,
            "sigma": self.sigma,
            "band_edges": list(self.band_edges),
            "group_sizes": np.bincount(self.group_of, minlength=8)[1:].tolist(),
        }


def contribution_cuts(contribution, benchmark_fraction: float = 0.10) -> tuple[np.ndarray, tuple[int, ...]]:
    """Descending-contribution order and the customer counts at which the
    running total first reaches each multiple of ``benchmark_fraction``
    strictly below 100%.
    """
    y = np.asarray(contribution, dtype=float)
    return _cuts(y, np.zeros_like(y), benchmark_fraction)


def _cuts(y, assets, fraction):
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"benchmark_fraction must be in (0, 1), got {fraction}")
    order = np.lexsort((-assets, -y))
    csum = np.cumsum(y[order])
    total = csum[-1]
    n_cuts = int(np.floor((1.0 - 1e-12) / fraction))
    cuts = []
    for m in range(1, n_cuts + 1):
        target = m * fraction * total * (1.0 - 1e-12)
        cuts.append(int(np.searchsorted(csum, target, side="left")) + 1)
    return order, tuple(cuts)


def sigma_band_grouping(contribution, assets, benchmark_fraction: float = 0.10) -> SigmaGrouping:
    """Seven asset bands over the customers producing the bulk of contribution.

    Customers are ranked by contribution (ties by larger assets). The core
    set runs to the last whole benchmark cut, 90% of the total at the
    default fraction. Core assets are z-scored about the top contributor's
    assets using the core sample standard deviation; groups 1/2 lie within
    one sigma below/above, 3/4 within two, 5/6 within three, 7 beyond.
    """
    y = np.asarray(contribution, dtype=float)
    a = np.asarray(assets, dtype=float)
    if y.shape != a.shape:
        raise ValueError("contribution and assets must have equal length")
    if np.any(y < 0):
        raise ValueError("contribution must be non-negative")
    if int((y > 0).sum()) < 10:
        raise DegenerateDataError("sigma-band grouping needs at least 10 positive-contribution customers")
    order, cuts = _cuts(y, a, benchmark_fraction)
    core = order[: cuts[-1]]
    midpoint = float(a[order[0]])
    core_assets = a[core]
    sigma = float(core_assets.std(ddof=1)) if core.size > 1 else 0.0
    if sigma > 0:
        z = (core_assets - midpoint) / sigma
    else:
        z = np.zeros(core.size)
    mag = np.abs(z)
    band = np.where(mag <= 1, 0, np.where(mag <= 2, 1, np.where(mag <= 3, 2, 3)))
    group = np.where(band == 3, 7, 2 * band + 1 + (z >= 0))
    by_assets = np.lexsort((core, core_assets))
    edges = tuple(midpoint + s * sigma for s in (-3, -2, -1, 1, 2, 3))
    return SigmaGrouping(
        benchmark_fraction=benchmark_fraction,
        cut_counts=cuts,
        core_customer_count=int(core.size),
        core_rows=core[by_assets],
        midpoint=midpoint,
        sigma=sigma,
        band_edges=edges,
        z_scores=z[by_assets],
        group_of=group[by_assets].astype(np.int64),
    )


def cluster_sizes_table(model: KMeansModel, contribution: Sequence[float] | None = None) -> list[dict]:
    rows = []
    y = None if contribution is None else np.asarray(contribution, dtype=float)
    total = y.sum() if y is not None else None
    for c in range(model.k):
        row = {"cluster": c + 1, "size": int(model.sizes[c])}
        if y is not None:
            share = y[model.assignments == c].sum() / total if total else 0.0
            row["contribution_share"] = float(share)
        rows.append(row)
    return rows
