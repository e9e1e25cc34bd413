"""Synthetic transaction streams with plantable fraud signal.

Legitimate traffic reuses entities with a heavy-tailed profile; fraud
arrives in rings that hammer one card and device inside a short burst, so
velocity and relational-velocity features light up on ring members. A
planted mode relabels rows from a chosen expression instead, which gives
experiments a known ground truth.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigInvalidError, SpaceTooLargeError
from .evaluation import LabeledDataset, expression_loss, expression_sort_key, sigmoid
from .expr import Expression, Vocabulary, evaluate_matrix, parse_expression
from .features import (
    FeatureSpec,
    Schema,
    TransactionTable,
    build_matrix,
    default_feature_config,
    format_feature_config,
)

ENTITY_COLUMNS = ("shipping_email", "billing_address", "card_number", "device_id", "ip")

RING_SIZE = (3, 8)
BURST_SECONDS = (900.0, 14400.0)  # 15m to 4h

ENUMERATION_LIMIT = 1_000_000


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 1000
    n_entities: int = 0  # 0 picks a size proportional to n_rows
    fraud_rate: float = 0.0107
    seed: int = 0
    span: float = 90 * 86400.0
    start: float = 1_600_000_000.0
    planted: str = ""

    def __post_init__(self):
        if self.n_rows < 10:
            raise ConfigInvalidError(f"n_rows must be >= 10, got {self.n_rows}")
        if not 0.0 <= self.fraud_rate <= 1.0:
            raise ConfigInvalidError(f"fraud_rate must be in [0, 1], got {self.fraud_rate}")
        if self.span < 0 or self.n_entities < 0:
            raise ConfigInvalidError("span and n_entities must be non-negative")

    @property
    def pool_size(self) -> int:
        return self.n_entities if self.n_entities else max(8, self.n_rows // 25)


def synth_schema() -> Schema:
    roles = [("timestamp", "timestamp"), ("amount", "amount")]
    roles += [(c, "categorical") for c in ENTITY_COLUMNS]
    roles.append(("fs", "label"))
    return Schema(tuple(roles))


def default_rv_pairs() -> list[tuple[str, str]]:
    return [("shipping_email", "card_number"), ("device_id", "card_number")]


def _heavy_tail_picker(pool: int, rng: np.random.Generator):
    weights = 1.0 / np.arange(1, pool + 1) ** 1.1
    cum = np.cumsum(weights)
    total = cum[-1]

    def pick() -> int:
        return int(np.searchsorted(cum, rng.random() * total, side="right"))

    return pick


def generate_table(cfg: SynthConfig) -> TransactionTable:
    """Draw a transaction table; rows come out time-sorted."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_rows
    pool = cfg.pool_size

    fraud = rng.random(n) < cfg.fraud_rate
    times = cfg.start + rng.uniform(0.0, max(cfg.span, 1e-9), size=n)
    amounts = np.round(rng.lognormal(3.5, 1.0, size=n), 2)
    values = {c: [""] * n for c in ENTITY_COLUMNS}
    pickers = {c: _heavy_tail_picker(pool, rng) for c in ENTITY_COLUMNS}

    for i in np.flatnonzero(~fraud):
        for col in ENTITY_COLUMNS:
            values[col][i] = f"{col}_{pickers[col]():05d}"

    # fraud rows form rings: shared card/device/ip, fresh emails, one burst
    fraud_rows = list(np.flatnonzero(fraud))
    ring_id = 0
    cursor = 0
    while cursor < len(fraud_rows):
        size = int(rng.integers(RING_SIZE[0], RING_SIZE[1] + 1))
        members = fraud_rows[cursor : cursor + size]
        cursor += size
        burst = min(float(rng.uniform(*BURST_SECONDS)), max(cfg.span, 1e-9))
        burst_start = cfg.start + rng.uniform(0.0, max(cfg.span - burst, 1e-9))
        offsets = np.sort(rng.uniform(0.0, burst, size=len(members)))
        card = f"card_ring{ring_id:04d}"
        device = f"device_ring{ring_id:04d}"
        ip = f"ip_ring{ring_id:04d}"
        for j, row in enumerate(members):
            times[row] = burst_start + offsets[j]
            values["card_number"][row] = card
            values["device_id"][row] = device
            values["ip"][row] = ip
            values["shipping_email"][row] = f"email_ring{ring_id:04d}_{j}"
            values["billing_address"][row] = (
                f"billing_address_{pickers['billing_address']():05d}"
            )
        ring_id += 1

    order = np.argsort(times, kind="stable")
    return TransactionTable(
        schema=synth_schema(),
        timestamps=times[order],
        amounts=amounts[order],
        labels=(fraud[order] * 100.0),
        categoricals={c: [values[c][i] for i in order] for c in ENTITY_COLUMNS},
        numerics={},
    )


def write_transactions_csv(path: str, table: TransactionTable) -> None:
    columns = ["timestamp", "amount", *ENTITY_COLUMNS, "fs"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for i in range(table.n_rows):
            cells = [f"{table.timestamps[i]:.3f}", f"{table.amounts[i]:.2f}"]
            cells += [table.categoricals[c][i] for c in ENTITY_COLUMNS]
            cells.append(f"{table.labels[i]:g}")
            fh.write(",".join(cells) + "\n")


def format_schema(schema: Schema) -> str:
    return "\n".join(f"{name} = {role}" for name, role in schema.roles) + "\n"


def plant_labels(
    table: TransactionTable,
    expression: Expression,
    data: LabeledDataset,
    rng: np.random.Generator,
) -> dict:
    """Relabel the table from sigma(expression) and report the label entropy."""
    raw = evaluate_matrix(expression, data.features)
    probs = sigmoid(raw)
    draws = (rng.random(table.n_rows) < probs).astype(np.float64)
    table.labels[:] = draws * 100.0
    safe = np.clip(probs, 1e-12, 1.0 - 1e-12)
    entropy = float(np.mean(-safe * np.log(safe) - (1 - safe) * np.log1p(-safe)))
    return {"entropy": entropy, "fraud_rate": float(draws.mean())}


def generate_transactions(
    cfg: SynthConfig,
    out_dir: str,
    feature_specs: Sequence[FeatureSpec] | None = None,
) -> dict:
    """Write transactions.csv, schema.ini and features.conf into out_dir.

    With cfg.planted set, labels are redrawn as Bernoulli(sigma(e)) of the
    planted expression over the materialised features and a manifest.json
    records the expression, the label entropy, and the config.
    """
    os.makedirs(out_dir, exist_ok=True)
    table = generate_table(cfg)
    schema = table.schema
    if feature_specs is None:
        feature_specs = default_feature_config(schema, rv_pairs=default_rv_pairs())

    paths = {
        "transactions": os.path.join(out_dir, "transactions.csv"),
        "schema": os.path.join(out_dir, "schema.ini"),
        "features": os.path.join(out_dir, "features.conf"),
    }
    if cfg.planted:
        data = build_matrix(table, feature_specs)
        expression = parse_expression(cfg.planted, feature_names=data.columns)
        # the label stream gets its own generator so feature tweaks cannot
        # silently shift which rows flip positive
        label_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
        stats = plant_labels(table, expression, data, label_rng)
        manifest = {
            "planted_expression": cfg.planted,
            "entropy": stats["entropy"],
            "fraud_rate": stats["fraud_rate"],
            "seed": cfg.seed,
            "config": asdict(cfg),
            "feature_columns": list(data.columns),
        }
        paths["manifest"] = os.path.join(out_dir, "manifest.json")
        with open(paths["manifest"], "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    write_transactions_csv(paths["transactions"], table)
    with open(paths["schema"], "w", encoding="utf-8") as fh:
        fh.write(format_schema(schema))
    with open(paths["features"], "w", encoding="utf-8") as fh:
        fh.write(format_feature_config(feature_specs))
    return paths


# ---- exhaustive reference search

def count_expressions(vocab: Vocabulary, max_len: int) -> int:
    """Number of slot-complete sequences of length <= max_len."""
    by_arity = [0, 0, 0]
    for a in vocab.arities:
        by_arity[int(a)] += 1
    memo: dict[tuple[int, int], int] = {}

    def count(pending: int, budget: int) -> int:
        if pending == 0:
            return 1 if budget == 0 else 0
        if pending > budget:
            return 0
        key = (pending, budget)
        if key not in memo:
            memo[key] = sum(
                by_arity[a] * count(pending - 1 + a, budget - 1) for a in range(3)
            )
        return memo[key]

    return sum(count(1, b) for b in range(1, max_len + 1))


def enumerate_complete(vocab: Vocabulary, max_len: int):
    """Yield every slot-complete action sequence, lowest action index first."""
    arities = vocab.arities

    def rec(tokens: tuple[int, ...], pending: int):
        base = len(tokens) + pending
        for action in range(vocab.size):
            if base + arities[action] > max_len:
                continue
            nxt_tokens = tokens + (action,)
            nxt_pending = pending - 1 + int(arities[action])
            if nxt_pending == 0:
                yield nxt_tokens
            else:
                yield from rec(nxt_tokens, nxt_pending)

    yield from rec((), 1)


def brute_force_best(
    vocab: Vocabulary,
    max_len: int,
    data: LabeledDataset,
    limit: int = ENUMERATION_LIMIT,
) -> tuple[Expression, float]:
    """Exhaustively find the single lowest-loss expression.

    Counts the space first and refuses to enumerate more than `limit`
    candidates. Ties break exactly like trajectory ranking: shorter first,
    then lexicographic token order.
    """
    total = count_expressions(vocab, max_len)
    if total > limit:
        raise SpaceTooLargeError(total, limit)
    best_key = None
    best: tuple[Expression, float] | None = None
    for actions in enumerate_complete(vocab, max_len):
        expression = vocab.to_expression(actions)
        loss = expression_loss(expression, data)
        key = (loss,) + expression_sort_key(expression)
        if best_key is None or key < best_key:
            best_key = key
            best = (expression, loss)
    assert best is not None  # vocabulary always admits one operand
    return best
