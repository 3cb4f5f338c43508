"""Customer tables: schema, CSV I/O, synthetic generation and scaling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InputError, ParseError, SchemaError, ValidationError

CODE_COLUMN = "customer_code"
TARGET_COLUMN = "total_contribution"

SCHEMA: tuple[str, ...] = (
    "customer_code",
    "total_contribution",
    "assets",
    "deposit",
    "profit",
    "profit_rate",
    "trading_volume",
    "trading_amount",
    "turnover_rate",
    "order_amount",
    "withdraw_amount",
    "withdraw_rate",
    "process_fee",
    "process_fee_submitted",
    "process_fee_retained",
    "net_process_fee_retained",
    "interest_revenue",
    "interest_return",
    "exchange_return_1",
    "exchange_return_2",
)

NUMERIC_COLUMNS: tuple[str, ...] = SCHEMA[1:]
PREDICTOR_COLUMNS: tuple[str, ...] = SCHEMA[2:]

# Column names as printed in the original R output.
PINYIN_ALIASES: dict[str, str] = {
    "quanyi": "assets",
    "baozhengjin": "deposit",
    "yingkui": "profit",
    "yingkuilv": "profit_rate",
    "chengjiaojine": "trading_amount",
    "huanshoulv": "turnover_rate",
    "weituobishu": "order_amount",
    "chedanbishu": "withdraw_amount",
    "chedanlv": "withdraw_rate",
    "shouxufei": "process_fee",
    "shangjiaoshouxufei": "process_fee_submitted",
    "jingliucunshouxufei": "net_process_fee_retained",
    "lingxifanhuan": "interest_return",
    "jiaoyisuofanhuanfanhuan": "exchange_return_2",
    "zonggongxian": "total_contribution",
}

_NONNEGATIVE = ("assets", "process_fee")


def canonical_name(name: str) -> str:
    key = name.strip().lower()
    return PINYIN_ALIASES.get(key, key)


@dataclass(frozen=True)
class CustomerRecord:
    customer_code: str
    total_contribution: float
    assets: float
    deposit: float
    profit: float
    profit_rate: float
    trading_volume: float
    trading_amount: float
    turnover_rate: float
    order_amount: float
    withdraw_amount: float
    withdraw_rate: float
    process_fee: float
    process_fee_submitted: float
    process_fee_retained: float
    net_process_fee_retained: float
    interest_revenue: float
    interest_return: float
    exchange_return_1: float
    exchange_return_2: float


@dataclass(frozen=True)
class FeatureMatrix:
    """Named numeric columns over a row-major float matrix."""

    column_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            values = values.reshape(len(values), len(self.column_names))
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "values", values)
        if values.shape[1] != len(self.column_names):
            raise ValueError(
                f"{values.shape[1]} value columns but {len(self.column_names)} names"
            )
        if len(set(self.column_names)) != len(self.column_names):
            raise ValueError("duplicate column names")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise KeyError(f"unknown column: {name}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def select(self, names: Iterable[str]) -> "FeatureMatrix":
        names = tuple(names)
        idx = [self.index(n) for n in names]
        return FeatureMatrix(names, self.values[:, idx])

    def take(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(self.column_names, self.values[rows])


@dataclass(frozen=True)
class CustomerTable:
    """Customer codes plus the numeric columns, row order as read."""

    codes: tuple[str, ...]
    matrix: FeatureMatrix

    def __len__(self):
        return len(self.codes)

    def column(self, name: str) -> np.ndarray:
        return self.matrix.column(name)

    def records(self) -> list[CustomerRecord]:
        missing = [c for c in NUMERIC_COLUMNS if c not in self.matrix.column_names]
        if missing:
            raise SchemaError(missing[0], f"table lacks column {missing[0]} needed for records")
        cols = [self.matrix.column(c) for c in NUMERIC_COLUMNS]
        return [
            CustomerRecord(code, *(float(col[i]) for col in cols))
            for i, code in enumerate(self.codes)
        ]

    @classmethod
    def from_records(cls, records: Sequence[CustomerRecord]) -> "CustomerTable":
        codes = tuple(r.customer_code for r in records)
        values = np.array(
            [[getattr(r, c) for c in NUMERIC_COLUMNS] for r in records], dtype=float
        ).reshape(len(records), len(NUMERIC_COLUMNS))
        table = cls(codes, FeatureMatrix(NUMERIC_COLUMNS, values))
        validate(table)
        return table


def validate(table: CustomerTable) -> None:
    """Raise ValidationError if the table violates record invariants."""
    if len(set(table.codes)) != len(table.codes):
        seen = set()
        dup = next(c for c in table.codes if c in seen or seen.add(c))
        raise ValidationError(f"duplicate customer_code: {dup}")
    values = table.matrix.values
    if not np.all(np.isfinite(values)):
        raise ValidationError("non-finite value in table")
    for name in _NONNEGATIVE:
        if name in table.matrix.column_names:
            col = table.matrix.column(name)
            bad = np.flatnonzero(col < 0)
            if bad.size:
                raise ValidationError(f"row {bad[0] + 1}: {name} must be >= 0, got {col[bad[0]]!r}")


def read_schema_file(path) -> list[str]:
    """One column name per line; blank lines and '#' comments ignored."""
    names = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.append(canonical_name(line))
    return names


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(row, column, text) from None
    if not math.isfinite(value):
        raise ParseError(row, column, text)
    return value


def load_csv(path, schema: Sequence[str] = SCHEMA) -> CustomerTable:
    """Read a customer CSV, binding header names (English or pinyin) to ``schema``.

    Extra columns are ignored. Row numbers in errors are 1-based data rows.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    schema = [canonical_name(c) for c in schema]
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(schema[0], f"{path}: empty file, no header row") from None
        positions: dict[str, int] = {}
        for i, name in enumerate(header):
            positions.setdefault(canonical_name(name), i)
        for name in schema:
            if name not in positions:
                raise SchemaError(name)
        numeric = [c for c in schema if c != CODE_COLUMN]
        num_pos = [positions[c] for c in numeric]
        code_pos = positions.get(CODE_COLUMN) if CODE_COLUMN in schema else None
        codes: list[str] = []
        rows: list[list[float]] = []
        for rownum, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) < len(header):
                raise ParseError(rownum, header[len(cells)], "")
            if code_pos is not None:
                code = cells[code_pos].strip()
                if not code:
                    raise ParseError(rownum, CODE_COLUMN, cells[code_pos])
                codes.append(code)
            else:
                codes.append(str(rownum))
            rows.append([_parse_float(cells[p], rownum, c) for p, c in zip(num_pos, numeric)])
    values = np.array(rows, dtype=float).reshape(len(rows), len(numeric))
    table = CustomerTable(tuple(codes), FeatureMatrix(tuple(numeric), values))
    validate(table)
    return table


def write_csv(path, table: CustomerTable) -> None:
    """Write with shortest round-trip float text, so load_csv(write_csv(t)) == t."""
    names = table.matrix.column_names
    values = table.matrix.values
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow((CODE_COLUMN,) + names)
        for code, row in zip(table.codes, values.tolist()):
            writer.writerow([code] + [repr(v) for v in row])


def read_kv_file(path) -> dict[str, str]:
    """Parse flat ``key=value`` text; '#' starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


@dataclass(frozen=True)
class SyntheticConfig:
    n_customers: int = 100_000
    zero_asset_fraction: float = 0.5
    contribution_tail_exponent: float = 1.3
    seed: int = 7
    noise_scale: float = 0.1

    def __post_init__(self):
        if int(self.n_customers) != self.n_customers or self.n_customers < 0:
            raise ConfigError(f"n_customers must be a non-negative integer, got {self.n_customers}")
        if not 0.0 <= self.zero_asset_fraction <= 1.0:
            raise ConfigError(f"zero_asset_fraction must be in [0, 1], got {self.zero_asset_fraction}")
        if not self.contribution_tail_exponent > 1.0:
            raise ConfigError(
                f"contribution_tail_exponent must be > 1, got {self.contribution_tail_exponent}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.noise_scale >= 0.0:
            raise ConfigError(f"noise_scale must be >= 0, got {self.noise_scale}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "SyntheticConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ConfigError(f"unknown synthetic config key: {key}")
            try:
                kwargs[key] = int(raw) if kinds[key] == "int" else float(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return cls(**kwargs)


# Share of funded (non-zero-asset) customers who trade actively.
ACTIVE_SHARE = 0.2


def generate_synthetic(cfg: SyntheticConfig) -> CustomerTable:
    """Synthesize a futures-brokerage customer table with a planted structure.

    Half the book (by default) holds no assets and contributes nothing. Of the
    funded customers a minority trade actively, with Pareto-tailed assets;
    the rest are dormant accounts holding small balances. Contribution is a
    noisy increasing function of net retained process fee and assets, and
    falls with the withdraw (order cancel) rate. ``process_fee_retained`` is
    exactly ``process_fee - process_fee_submitted`` and is therefore aliased
    in a linear fit.
    """
    n = int(cfg.n_customers)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n_zero = int(round(cfg.zero_asset_fraction * n))
    n_active = int(round(ACTIVE_SHARE * (n - n_zero)))
    kind = np.zeros(n, dtype=np.int8)  # 0 empty, 1 dormant, 2 active
    kind[n_zero:] = 1
    kind[n_zero:n_zero + n_active] = 2
    kind = rng.permutation(kind)
    active = kind == 2
    dormant = kind == 1

    alpha = cfg.contribution_tail_exponent
    assets = np.zeros(n)
    assets[active] = 5e4 * (1.0 + rng.pareto(alpha, active.sum()))
    assets[dormant] = rng.lognormal(math.log(2e3), 1.0, dormant.sum())
    assets = np.round(assets, 2)

    utilization = np.where(active, rng.beta(2.0, 3.0, n), rng.beta(1.0, 9.0, n) * 0.2)
    deposit = np.round(assets * utilization, 2)

    turnover = np.where(
        active,
        rng.lognormal(math.log(40.0), 1.0, n),
        rng.lognormal(math.log(0.5), 1.0, n) * (rng.random(n) < 0.3),
    )
    trading_amount = np.round(assets * turnover, 2)
    turnover_rate = np.where(assets > 0, 100.0 * trading_amount / np.where(assets > 0, assets, 1.0), 0.0)

    lot_value = rng.lognormal(math.log(1e5), 0.5, n)
    trading_volume = np.round(trading_amount / lot_value)
    order_amount = rng.poisson(0.6 * trading_volume + 2.0 * (trading_amount > 0)).astype(float)
    cancel_p = rng.beta(2.0, 6.0, n)
    withdraw_amount = rng.binomial(order_amount.astype(np.int64), cancel_p).astype(float)
    withdraw_rate = np.where(order_amount > 0, 100.0 * withdraw_amount / np.maximum(order_amount, 1.0), 0.0)

    fee_rate = rng.lognormal(math.log(1.5e-4), 0.3, n)
    process_fee = np.round(trading_amount * fee_rate, 2)
    submit_share = rng.uniform(0.90, 0.99, n)
    process_fee_submitted = np.round(process_fee * submit_share, 2)
    process_fee_retained = process_fee - process_fee_submitted
    # Cancel-heavy accounts cost more to service.
    cost_share = np.clip(rng.uniform(0.0, 0.3, n) + 0.006 * withdraw_rate, 0.0, 0.95)
    net_process_fee_retained = np.round(process_fee_retained * (1.0 - cost_share), 2)

    interest_revenue = np.round(deposit * rng.uniform(0.0, 0.006, n), 2)
    interest_return = np.round(assets * rng.uniform(0.0, 0.004, n), 2)
    exchange_return_2 = np.round(process_fee_submitted * rng.uniform(0.2, 0.5, n), 2)
    exchange_return_1 = np.round(0.6 * exchange_return_2 + rng.normal(0.0, 1.0, n) * (assets > 0), 2)

    profit = np.round(assets * rng.normal(0.0, 0.08, n) * np.sqrt(1.0 + turnover / 40.0), 2)
    profit_rate = np.where(assets > 0, 100.0 * profit / np.where(assets > 0, assets, 1.0), 0.0)

    noise = rng.lognormal(0.0, cfg.noise_scale, n) if cfg.noise_scale > 0 else np.ones(n)
    total_contribution = np.round(
        (8.0 * net_process_fee_retained + 0.001 * assets) * noise, 2
    )
    total_contribution[assets == 0] = 0.0

    columns = {
        "total_contribution": total_contribution,
        "assets": assets,
        "deposit": deposit,
        "profit": profit,
        "profit_rate": profit_rate,
        "trading_volume": trading_volume,
        "trading_amount": trading_amount,
        "turnover_rate": turnover_rate,
        "order_amount": order_amount,
        "withdraw_amount": withdraw_amount,
        "withdraw_rate": withdraw_rate,
        "process_fee": process_fee,
        "process_fee_submitted": process_fee_submitted,
        "process_fee_retained": process_fee_retained,
        "net_process_fee_retained": net_process_fee_retained,
        "interest_revenue": interest_revenue,
        "interest_return": interest_return,
        "exchange_return_1": exchange_return_1,
        "exchange_return_2": exchange_return_2,
    }
    values = np.column_stack([columns[c] for c in NUMERIC_COLUMNS]) if n else np.zeros((0, len(NUMERIC_COLUMNS)))
    codes = tuple(f"C{i:07d}" for i in range(1, n + 1))
    return CustomerTable(codes, FeatureMatrix(NUMERIC_COLUMNS, values))


def generate_blobs(
    n_customers: int, n_blobs: int = 7, seed: int = 0, separation: float = 10.0
) -> CustomerTable:
    """Table whose rows fall into ``n_blobs`` equally spaced segments.

    Each segment owns its own predictor columns (the same number for every
    segment), raised above the common level of 100 for that segment's
    rows only, so any two segment centers are ``separation`` noise standard
    deviations apart. Unowned predictors are pure noise. Contribution is
    the sum of the owned columns plus noise, which keeps every owned column
    significant in the regression and makes the contribution level itself
    identical across segments. Useful for checking that the grouping stage
    recovers a known number of clusters.
    """
    predictors = len(PREDICTOR_COLUMNS)
    if not 1 <= n_blobs <= predictors:
        raise ConfigError(f"n_blobs must be in [1, {predictors}], got {n_blobs}")
    if n_customers < n_blobs:
        raise ConfigError("need at least one customer per segment")
    per = predictors // n_blobs
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = rng.permutation(np.arange(n_customers) % n_blobs)
    X = 100.0 + rng.standard_normal((n_customers, predictors))
    # Two segments differ in 2 * per columns, each by `level`.
    level = separation / np.sqrt(2.0 * per)
    owned = np.zeros((n_blobs, predictors))
    for b in range(n_blobs):
        owned[b, b * per:(b + 1) * per] = 1.0
    X += level * owned[labels]
    structured = X[:, : n_blobs * per].sum(axis=1)
    y = structured + 0.5 * rng.standard_normal(n_customers)
    values = np.column_stack([y, X])
    codes = tuple(f"B{i:07d}" for i in range(1, n_customers + 1))
    return CustomerTable(codes, FeatureMatrix(NUMERIC_COLUMNS, np.round(values, 6)))


@dataclass(frozen=True)
class Scaling:
    """Per-column z-score parameters; constant columns map to zero."""

    column_names: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray
    constant: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=float))
        if self.constant is None:
            object.__setattr__(self, "constant", self.stds == 0)
        else:
            object.__setattr__(self, "constant", np.asarray(self.constant, dtype=bool))

    def apply(self, values: np.ndarray) -> np.ndarray:
        safe = np.where(self.constant, 1.0, self.stds)
        return np.where(self.constant, 0.0, (values - self.means) / safe)

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.where(self.constant, self.means, z * self.stds + self.means)

    @classmethod
    def identity(cls, column_names) -> "Scaling":
        d = len(column_names)
        return cls(tuple(column_names), np.zeros(d), np.ones(d), np.zeros(d, dtype=bool))

    def to_dict(self) -> dict:
        return {
            "columns": list(self.column_names),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "constant": self.constant.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scaling":
        return cls(tuple(d["columns"]), d["means"], d["stds"], d["constant"])


def standardize(m: FeatureMatrix) -> tuple[FeatureMatrix, Scaling]:
    """Z-score every column with the sample (n - 1) standard deviation."""
    if m.n_rows < 2:
        raise ValueError("standardize needs at least 2 rows")
    means = m.values.mean(axis=0)
    centered = m.values - means
    stds = np.sqrt((centered**2).sum(axis=0) / (m.n_rows - 1))
    constant = np.all(centered == 0, axis=0) | (stds == 0)
    stds = np.where(constant, 0.0, stds)
    scaling = Scaling(m.column_names, means, stds, constant)
    return FeatureMatrix(m.column_names, scaling.apply(m.values)), scaling
