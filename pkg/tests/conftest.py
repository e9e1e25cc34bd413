from __future__ import annotations

import numpy as np
import pytest

from exprmine import expr, features, mdp


def make_vocab(n_features: int = 2, constants=(2.0,)) -> expr.Vocabulary:
    names = tuple(f"x{i}" for i in range(n_features))
    return expr.Vocabulary.from_parts(names, constants)


def random_expression(
    vocab: expr.Vocabulary, max_len: int, rng: np.random.Generator
) -> expr.Expression:
    state = mdp.random_completion(mdp.initial_state(), vocab, max_len, rng)
    return mdp.to_expression(state, vocab)


@pytest.fixture
def small_vocab() -> expr.Vocabulary:
    return make_vocab()


# ---- transaction-table helpers shared by feature and acceptance tests

def make_table(times, labels, amounts=None, **categoricals) -> features.TransactionTable:
    """Build an in-memory table; rows are stably sorted by time like the loader."""
    roles = [("ts", "timestamp"), ("fs", "label")]
    if amounts is not None:
        roles.append(("amount", "amount"))
    roles += [(c, "categorical") for c in categoricals]
    schema = features.Schema(tuple(roles))
    times = np.asarray(times, dtype=np.float64)
    order = np.argsort(times, kind="stable")
    return features.TransactionTable(
        schema=schema,
        timestamps=times[order],
        amounts=None if amounts is None else np.asarray(amounts, dtype=np.float64)[order],
        labels=np.asarray(labels, dtype=np.float64)[order],
        categoricals={c: [v[i] for i in order] for c, v in categoricals.items()},
        numerics={},
    )


def random_table(rng: np.random.Generator, n: int, n_entities: int = 12,
                 span: float = 5000.0) -> features.TransactionTable:
    times = np.round(rng.uniform(0, span, size=n), 1)
    # force timestamp collisions so exactness tests cover ties
    times[rng.integers(0, n, size=n // 10)] = times[rng.integers(0, n, size=n // 10)]
    return make_table(
        times=times,
        labels=rng.integers(0, 2, size=n) * 100.0,
        amounts=np.round(rng.uniform(0.5, 200.0, size=n), 2),
        ip=[f"ip{rng.integers(0, n_entities)}" for _ in range(n)],
        card=[f"c{rng.integers(0, n_entities)}" for _ in range(n)],
        email=[f"e{rng.integers(0, max(2, n_entities // 2))}" for _ in range(n)],
    )


def quadratic_velocity(table, column, window, kind) -> np.ndarray:
    """O(n^2) reference: boolean-mask scan per row, numpy sum per window."""
    w = features.window_seconds(window)
    times = table.timestamps
    values = np.asarray(table.categoricals[column], dtype=object)
    out = np.zeros(table.n_rows)
    for i in range(table.n_rows):
        mask = (times >= times[i] - w) & (times < times[i]) & (values == values[i])
        if kind == "count":
            out[i] = float(mask.sum())
        else:
            out[i] = np.sum(table.amounts[mask])
    return out


def quadratic_rv(table, column_a, column_b, window) -> np.ndarray:
    w = features.window_seconds(window)
    times = table.timestamps
    a_vals = np.asarray(table.categoricals[column_a], dtype=object)
    b_vals = np.asarray(table.categoricals[column_b], dtype=object)
    out = np.zeros(table.n_rows)
    for i in range(table.n_rows):
        mask = (times >= times[i] - w) & (times < times[i]) & (b_vals == b_vals[i])
        out[i] = float(len(set(a_vals[mask])))
    return out
