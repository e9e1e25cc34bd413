"""Transaction ingestion and causal feature construction.

Velocity features look strictly backwards: a row's window [t - w, t) never
includes the row itself or anything at/after its own timestamp, so a feature
value never depends on the row's own label or on later rows.

Window sums reduce each window slice with numpy's summation in time order;
the same values reduced in the same order reproduce bit-identically, which
the exactness tests against the quadratic reference rely on.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadRoleError,
    ConfigInvalidError,
    DataError,
    EmptyFeatureSetError,
    MissingColumnError,
    NotCategoricalError,
    UnparseableValueError,
)
from .evaluation import LabeledDataset

logger = logging.getLogger(__name__)

ROLES = ("timestamp", "amount", "categorical", "numeric", "label")

# canonical sliding windows, seconds
WINDOWS = {
    "15m": 900,
    "30m": 1800,
    "1h": 3600,
    "4h": 14400,
    "12h": 43200,
    "1d": 86400,
    "7d": 604800,
    "14d": 1209600,
    "30d": 2592000,
    "60d": 5184000,
    "90d": 7776000,
}

ONE_HOT_CAP = 64


def window_seconds(spelling: str) -> int:
    try:
        return WINDOWS[spelling]
    except KeyError:
        raise ConfigInvalidError(
            f"unknown window {spelling!r}; choose one of {', '.join(WINDOWS)}"
        ) from None


@dataclass(frozen=True)
class Schema:
    """Ordered column -> role assignment for a transaction CSV."""

    roles: tuple[tuple[str, str], ...]

    def __post_init__(self):
        seen = set()
        for name, role in self.roles:
            if role not in ROLES:
                raise BadRoleError(f"column {name!r} has unknown role {role!r}")
            if name in seen:
                raise BadRoleError(f"column {name!r} declared twice")
            seen.add(name)
        for role, want in (("timestamp", 1), ("label", 1)):
            got = sum(1 for _, r in self.roles if r == role)
            if got != want:
                raise BadRoleError(f"schema needs exactly {want} {role} column, found {got}")
        if sum(1 for _, r in self.roles if r == "amount") > 1:
            raise BadRoleError("schema allows at most one amount column")

    def _one(self, role: str) -> str:
        for name, r in self.roles:
            if r == role:
                return name
        raise BadRoleError(f"schema has no {role} column")

    @property
    def timestamp_column(self) -> str:
        return self._one("timestamp")

    @property
    def label_column(self) -> str:
        return self._one("label")

    @property
    def amount_column(self) -> str:
        return self._one("amount")

    @property
    def has_amount(self) -> bool:
        return any(r == "amount" for _, r in self.roles)

    @property
    def categorical_columns(self) -> tuple[str, ...]:
        return tuple(name for name, r in self.roles if r == "categorical")

    @property
    def numeric_columns(self) -> tuple[str, ...]:
        return tuple(name for name, r in self.roles if r == "numeric")

    def role_of(self, name: str) -> str:
        for col, r in self.roles:
            if col == name:
                return r
        raise MissingColumnError(f"schema has no column {name!r}")


def parse_schema(lines: Iterable[str]) -> Schema:
    """Parse `column = role` lines; comments and section headers are skipped."""
    roles = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")) or line.startswith("["):
            continue
        name, sep, role = line.partition("=")
        if not sep:
            raise BadRoleError(f"schema line {lineno} is not 'column = role': {line!r}")
        roles.append((name.strip(), role.strip().lower()))
    return Schema(tuple(roles))


def load_schema(path: str) -> Schema:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_schema(fh)
    except OSError as exc:
        raise DataError(f"cannot read schema file {path!r}: {exc}") from None


@dataclass
class TransactionTable:
    """Column-parsed transactions, sorted by timestamp (stable)."""

    schema: Schema
    timestamps: np.ndarray
    amounts: np.ndarray | None
    labels: np.ndarray
    categoricals: dict[str, list[str]]
    numerics: dict[str, np.ndarray]

    @property
    def n_rows(self) -> int:
        return len(self.timestamps)


def _parse_float(value: str, column: str, row: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise UnparseableValueError(
            f"row {row}: column {column!r} value {value!r} is not a number"
        ) from None


def load_transactions(csv_path: str, schema: Schema) -> TransactionTable:
    """Read a transaction CSV against a schema; rows come out time-sorted."""
    try:
        fh = open(csv_path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read transaction file {csv_path!r}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UnparseableValueError(f"{csv_path} is empty") from None
        positions = {}
        for name, _ in schema.roles:
            if name not in header:
                raise MissingColumnError(f"CSV is missing schema column {name!r}")
            positions[name] = header.index(name)

        times, amounts, labels = [], [], []
        categoricals: dict[str, list[str]] = {c: [] for c in schema.categorical_columns}
        numerics: dict[str, list[float]] = {c: [] for c in schema.numeric_columns}
        t_col = schema.timestamp_column
        l_col = schema.label_column
        a_col = schema.amount_column if schema.has_amount else None

        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise UnparseableValueError(
                    f"row {rownum}: expected {len(header)} cells, got {len(row)}"
                )
            times.append(_parse_float(row[positions[t_col]], t_col, rownum))
            if a_col is not None:
                amount = _parse_float(row[positions[a_col]], a_col, rownum)
                if amount < 0:
                    raise UnparseableValueError(f"row {rownum}: negative amount {amount}")
                amounts.append(amount)
            label = _parse_float(row[positions[l_col]], l_col, rownum)
            if not 0.0 <= label <= 100.0:
                raise UnparseableValueError(f"row {rownum}: label {label} outside [0, 100]")
            labels.append(label)
            for c in categoricals:
                categoricals[c].append(row[positions[c]])
            for c in numerics:
                numerics[c].append(_parse_float(row[positions[c]], c, rownum))

    order = np.argsort(np.asarray(times, dtype=np.float64), kind="stable")
    return TransactionTable(
        schema=schema,
        timestamps=np.asarray(times, dtype=np.float64)[order],
        amounts=np.asarray(amounts, dtype=np.float64)[order] if a_col is not None else None,
        labels=np.asarray(labels, dtype=np.float64)[order],
        categoricals={
            c: [vals[i] for i in order] for c, vals in categoricals.items()
        },
        numerics={c: np.asarray(v, dtype=np.float64)[order] for c, v in numerics.items()},
    )


# ---- feature builders

def _require_categorical(table: TransactionTable, column: str) -> list[str]:
    if column not in table.categoricals:
        raise NotCategoricalError(f"column {column!r} is not categorical")
    return table.categoricals[column]


def _group_positions(values: Sequence[str]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = defaultdict(list)
    for i, v in enumerate(values):
        groups[v].append(i)
    return groups


def one_hot(
    table: TransactionTable, column: str, cap: int = ONE_HOT_CAP
) -> list[tuple[str, np.ndarray]]:
    """Indicator column per distinct value, sorted; empty when over the cap."""
    values = _require_categorical(table, column)
    distinct = sorted(set(values))
    if len(distinct) > cap:
        logger.warning(
            "one-hot skipped for %r: %d distinct values exceed the cap of %d",
            column, len(distinct), cap,
        )
        return []
    arr = np.asarray(values, dtype=object)
    return [
        (f"{column}={v}", (arr == v).astype(np.float64)) for v in distinct
    ]


def velocity(
    table: TransactionTable, column: str, window: str, kind: str = "count"
) -> np.ndarray:
    """Per-row count (or amount sum) of earlier same-value rows in [t-w, t)."""
    if kind not in ("count", "sum"):
        raise ConfigInvalidError(f"velocity kind must be count or sum, got {kind!r}")
    values = _require_categorical(table, column)
    w = window_seconds(window)
    if kind == "sum":
        if table.amounts is None:
            raise MissingColumnError("sum velocity needs an amount column")
        amounts = table.amounts
    out = np.zeros(table.n_rows, dtype=np.float64)
    for positions in _group_positions(values).values():
        pos = np.asarray(positions, dtype=np.int64)
        times = table.timestamps[pos]
        lo = np.searchsorted(times, times - w, side="left")
        hi = np.searchsorted(times, times, side="left")
        if kind == "count":
            out[pos] = (hi - lo).astype(np.float64)
        else:
            group_amounts = amounts[pos]
            out[pos] = [group_amounts[a:b].sum() for a, b in zip(lo, hi)]
    return out


def relational_velocity(
    table: TransactionTable, column_a: str, column_b: str, window: str
) -> np.ndarray:
    """Distinct a-values among earlier rows sharing this row's b-value."""
    a_values = _require_categorical(table, column_a)
    b_values = _require_categorical(table, column_b)
    w = window_seconds(window)
    out = np.zeros(table.n_rows, dtype=np.float64)
    for positions in _group_positions(b_values).values():
        times = table.timestamps[positions]
        group_a = [a_values[p] for p in positions]
        counts: dict[str, int] = defaultdict(int)
        distinct = 0
        left = right = 0
        for q, t in enumerate(times):
            while right < len(times) and times[right] < t:
                counts[group_a[right]] += 1
                if counts[group_a[right]] == 1:
                    distinct += 1
                right += 1
            while left < right and times[left] < t - w:
                counts[group_a[left]] -= 1
                if counts[group_a[left]] == 0:
                    distinct -= 1
                left += 1
            out[positions[q]] = float(distinct)
    return out


# ---- feature configuration

@dataclass(frozen=True)
class FeatureSpec:
    """One derived column: kind in {count, sum, rv, onehot, raw}."""

    kind: str
    column: str
    other: str = ""
    window: str = ""

    def name(self) -> str:
        if self.kind == "rv":
            return f"rv_{self.column}_{self.other}_{self.window}"
        if self.kind in ("count", "sum"):
            return f"{self.kind}_{self.column}_{self.window}"
        return self.column


def parse_feature_config(lines: Iterable[str]) -> list[FeatureSpec]:
    """Parse one spec per line: `count col 1h`, `sum col 1d`, `rv a b 30d`,
    `onehot col`, `raw col`."""
    specs = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        parts = line.split()
        kind = parts[0].lower()
        if kind in ("count", "sum") and len(parts) == 3:
            window_seconds(parts[2])
            specs.append(FeatureSpec(kind, parts[1], window=parts[2]))
        elif kind == "rv" and len(parts) == 4:
            window_seconds(parts[3])
            specs.append(FeatureSpec(kind, parts[1], other=parts[2], window=parts[3]))
        elif kind == "onehot" and len(parts) == 2:
            specs.append(FeatureSpec(kind, parts[1]))
        elif kind == "raw" and len(parts) == 2:
            specs.append(FeatureSpec(kind, parts[1]))
        else:
            raise ConfigInvalidError(f"feature config line {lineno} is malformed: {line!r}")
    return specs


def load_feature_config(path: str) -> list[FeatureSpec]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_feature_config(fh)
    except OSError as exc:
        raise DataError(f"cannot read feature config {path!r}: {exc}") from None


def format_feature_config(specs: Sequence[FeatureSpec]) -> str:
    lines = []
    for s in specs:
        if s.kind == "rv":
            lines.append(f"rv {s.column} {s.other} {s.window}")
        elif s.kind in ("count", "sum"):
            lines.append(f"{s.kind} {s.column} {s.window}")
        else:
            lines.append(f"{s.kind} {s.column}")
    return "\n".join(lines) + "\n"


def default_feature_config(
    schema: Schema,
    rv_pairs: Sequence[tuple[str, str]] = (),
    windows: Sequence[str] = ("1h", "1d", "30d"),
) -> list[FeatureSpec]:
    """Count and sum velocities per categorical column and window, plus the
    requested relational pairs."""
    specs = []
    for col in schema.categorical_columns:
        for win in windows:
            specs.append(FeatureSpec("count", col, window=win))
            if schema.has_amount:
                specs.append(FeatureSpec("sum", col, window=win))
    for a, b in rv_pairs:
        for win in windows:
            specs.append(FeatureSpec("rv", a, b, window=win))
    for col in schema.numeric_columns:
        specs.append(FeatureSpec("raw", col))
    return specs


def build_matrix(table: TransactionTable, specs: Sequence[FeatureSpec]) -> LabeledDataset:
    """Materialise the feature matrix in spec order; targets are fs / 100."""
    names: list[str] = []
    columns: list[np.ndarray] = []
    for spec in specs:
        if spec.kind in ("count", "sum"):
            names.append(spec.name())
            columns.append(velocity(table, spec.column, spec.window, spec.kind))
        elif spec.kind == "rv":
            names.append(spec.name())
            columns.append(relational_velocity(table, spec.column, spec.other, spec.window))
        elif spec.kind == "onehot":
            for name, col in one_hot(table, spec.column):
                names.append(name)
                columns.append(col)
        elif spec.kind == "raw":
            if spec.column == (table.schema.amount_column if table.schema.has_amount else None):
                columns.append(table.amounts)
            elif spec.column in table.numerics:
                columns.append(table.numerics[spec.column])
            else:
                raise MissingColumnError(f"raw feature {spec.column!r} is not numeric")
            names.append(spec.column)
        else:
            raise ConfigInvalidError(f"unknown feature kind {spec.kind!r}")
    if not columns:
        raise EmptyFeatureSetError("feature configuration produced no columns")
    X = np.column_stack(columns)
    return LabeledDataset(X, table.labels / 100.0, tuple(names))
