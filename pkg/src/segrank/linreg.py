"""OLS on log contribution, p-values, aliasing detection and alpha selection."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .dataset import CODE_COLUMN, TARGET_COLUMN, FeatureMatrix
from .errors import DegenerateDataError

ALIAS_TOL = 1e-10


@dataclass(frozen=True)
class RegressionFit:
    """Result of an intercept-plus-predictors least-squares fit.

    Per-column arrays are aligned with ``names`` (intercept excluded);
    aliased columns appear in ``aliased`` only.
    """

    names: tuple[str, ...]
    intercept: float
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    aliased: frozenset[str]
    residual_df: int
    sigma2: float
    r_squared: float
    column_order: tuple[str, ...] = ()
    saturated: bool = False
    intercept_std_error: float = math.nan
    intercept_p_value: float = math.nan
    residuals: np.ndarray = field(default=None, repr=False, compare=False)

    def p_value_table(self) -> dict[str, float | None]:
        """Column -> p-value in design order, ``None`` for aliased columns."""
        pv = dict(zip(self.names, self.p_values.tolist()))
        order = self.column_order or self.names
        return {c: (None if c in self.aliased else pv[c]) for c in order}

    def to_dict(self) -> dict:
        return {
            "columns": list(self.column_order or self.names),
            "names": list(self.names),
            "intercept": self.intercept,
            "intercept_std_error": self.intercept_std_error,
            "intercept_p_value": self.intercept_p_value,
            "coefficients": self.coefficients.tolist(),
            "std_errors": self.std_errors.tolist(),
            "t_stats": [_json_float(t) for t in self.t_stats.tolist()],
            "p_values": self.p_values.tolist(),
            "aliased": sorted(self.aliased, key=(self.column_order or self.names).index),
            "residual_df": self.residual_df,
            "sigma2": self.sigma2,
            "r_squared": self.r_squared,
            "saturated": self.saturated,
        }


def _json_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def log_transform_target(y) -> tuple[np.ndarray, np.ndarray]:
    """Natural log of the positive entries; returns (logs, excluded row indices)."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("target contains non-finite values")
    keep = y > 0
    if not keep.any():
        raise DegenerateDataError("no positive-contribution rows")
    return np.log(y[keep]), np.flatnonzero(~keep)


def detect_aliased(X: np.ndarray, tol: float = ALIAS_TOL) -> np.ndarray:
    """Boolean mask of columns adding no rank, scanning left to right.

    Column 0 is taken to be the intercept. Each column is orthogonalized
    against the columns already accepted (two passes of modified
    Gram-Schmidt); it is aliased when what remains is below ``tol`` of its
    own norm.
    """
    n, p = X.shape
    basis = np.empty((n, 0))
    aliased = np.zeros(p, dtype=bool)
    for j in range(p):
        v = X[:, j].astype(float)
        norm = np.linalg.norm(v)
        if norm == 0:
            aliased[j] = True
            continue
        v = v / norm
        for _ in range(2):
            v = v - basis @ (basis.T @ v)
        rest = np.linalg.norm(v)
        if rest <= tol:
            aliased[j] = True
            continue
        basis = np.column_stack([basis, v / rest])
    return aliased


def fit_ols(X: FeatureMatrix, y, alias_tol: float = ALIAS_TOL) -> RegressionFit:
    """Least squares of ``y`` on an intercept plus the columns of ``X``."""
    y = np.asarray(y, dtype=float)
    n = X.n_rows
    if y.shape != (n,):
        raise ValueError(f"target length {y.shape} does not match {n} rows")
    if n <= X.n_cols + 1:
        raise DegenerateDataError(f"need more than {X.n_cols + 1} rows, got {n}")
    design = np.column_stack([np.ones(n), X.values])
    alias_mask = detect_aliased(design, alias_tol)
    if alias_mask[0]:
        raise DegenerateDataError("intercept column is degenerate")
    keep = ~alias_mask
    rank = int(keep.sum())
    if rank < 2:
        raise DegenerateDataError("degenerate design: rank < 2")
    names = tuple(c for c, a in zip(X.column_names, alias_mask[1:]) if not a)
    aliased = frozenset(c for c, a in zip(X.column_names, alias_mask[1:]) if a)

    # Column equilibration keeps R well conditioned across currency scales.
    A = design[:, keep]
    scale = np.linalg.norm(A, axis=0)
    Q, R = np.linalg.qr(A / scale)
    beta = np.linalg.solve(R, Q.T @ y) / scale
    residuals = y - A @ beta
    df = n - rank
    rss = float(residuals @ residuals)
    tss = float(((y - y.mean()) ** 2).sum())
    sigma2 = rss / df
    Rinv = np.linalg.inv(R)
    unscaled_var = (Rinv**2).sum(axis=1) / scale**2
    se = np.sqrt(sigma2 * unscaled_var)
    saturated = rss <= (1e-14 * max(np.linalg.norm(y), 1.0)) ** 2
    if saturated:
        sigma2 = 0.0
        se = np.zeros_like(se)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(beta == 0, 0.0, np.sign(beta) * np.inf)
        p = np.where(t == 0, 1.0, 0.0)
    else:
        t = beta / se
        p = 2.0 * stats.t.sf(np.abs(t), df)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return RegressionFit(
        names=names,
        intercept=float(beta[0]),
        coefficients=beta[1:],
        std_errors=se[1:],
        t_stats=t[1:],
        p_values=np.clip(p[1:], 0.0, 1.0),
        aliased=aliased,
        residual_df=df,
        sigma2=float(sigma2),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        column_order=tuple(X.column_names),
        saturated=bool(saturated),
        intercept_std_error=float(se[0]),
        intercept_p_value=float(min(max(p[0], 0.0), 1.0)),
        residuals=residuals,
    )


def select_from_p_values(
    p_values: Mapping[str, float | None], alpha: float
) -> list[str]:
    """Columns with p strictly below ``alpha``; ``None`` (aliased) is dropped.

    Input order is preserved and the customer code never survives.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    kept = [
        name
        for name, p in p_values.items()
        if name != CODE_COLUMN and p is not None and not math.isnan(p) and p < alpha
    ]
    if not kept:
        raise DegenerateDataError(f"no column has p-value below {alpha}")
    return kept


def select_features(fit: RegressionFit, alpha: float = 0.01) -> list[str]:
    return select_from_p_values(fit.p_value_table(), alpha)


def clustering_dimensions(retained: Sequence[str], schema: Sequence[str]) -> list[str]:
    """Retained predictors plus the contribution column, in schema order."""
    wanted = set(retained) | {TARGET_COLUMN}
    return [c for c in schema if c in wanted]


def format_p_value(p: float | None) -> str:
    if p is None:
        return "NA"
    if p < 2e-16:
        return "<2e-16"
    return f"{p:.4g}"


def report_table(fit: RegressionFit, retained: Sequence[str] = ()) -> str:
    """Two-column (name, p-value) text table with a retained marker."""
    rows = [("variable", "p_value", "retained")]
    keep = set(retained)
    for name, p in fit.p_value_table().items():
        rows.append((name, format_p_value(p), "yes" if name in keep else "no"))
    width = max(len(r[0]) for r in rows)
    pw = max(len(r[1]) for r in rows)
    return "".join(f"{a:<{width}}  {b:>{pw}}  {c}\n" for a, b, c in rows)


def report_json(fit: RegressionFit, retained: Sequence[str], alpha: float, excluded: int) -> str:
    doc = {
        "alpha": alpha,
        "excluded_nonpositive_rows": excluded,
        "retained": list(retained),
        "fit": fit.to_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
