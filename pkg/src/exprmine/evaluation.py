"""Candidate scoring: squashed predictions, BCE loss, reward, recall, AUC.

An expression's raw value is squashed through the logistic function to give
a fraud probability; the search minimises mean binary cross-entropy against
the (possibly soft) targets in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateLabelsError,
    NonFiniteLossError,
    NoPositivesError,
)
from .expr import BINARY_OPS, UNARY_OPS, Expression, Vocabulary, evaluate_matrix

PROB_FLOOR = 1e-7
REWARD_EPSILON = 1e-6


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix plus targets in [0, 1], columns named."""

    features: np.ndarray
    targets: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.float64)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-d array, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"targets shape {y.shape} does not match {X.shape[0]} rows")
        if X.shape[1] != len(self.columns):
            raise ValueError(
                f"{X.shape[1]} feature columns but {len(self.columns)} column names"
            )
        if not np.isfinite(X).all():
            raise ValueError("features contain NaN or infinity")
        if not np.isfinite(y).all() or (y < 0).any() or (y > 1).any():
            raise ValueError("targets must lie in [0, 1]")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.targets[idx], self.columns)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """Elementwise binary cross-entropy with predictions clamped away from 0/1."""
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(y_hat, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def predict_scores(expr: Expression, X: np.ndarray) -> np.ndarray:
    """Fraud scores in (0, 1): sigmoid of the expression value per row."""
    return sigmoid(evaluate_matrix(expr, X))


def expression_loss(expr: Expression, data: LabeledDataset) -> float:
    """Mean BCE of the squashed expression against data.targets.

    The mean uses numpy's pairwise summation; that fixed reduction order is
    the canonical one, and any parallel row-partitioned evaluation must
    reduce in the same order to stay bit-identical.
    """
    scores = predict_scores(expr, data.features)
    loss = float(np.mean(bce_loss(data.targets, scores)))
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"loss is {loss} for {expr}")
    return loss


def reward(loss: float, epsilon: float = REWARD_EPSILON) -> float:
    if loss < 0 or not math.isfinite(loss):
        raise ValueError(f"loss must be finite and >= 0, got {loss}")
    return 1.0 / (loss + epsilon)


def make_loss_fn(
    vocab: Vocabulary, data: LabeledDataset
) -> Callable[[tuple[int, ...]], float]:
    """Loss over action-index tuples, memoised per distinct expression."""
    cache: dict[tuple[int, ...], float] = {}

    def loss_fn(actions: tuple[int, ...]) -> float:
        actions = tuple(actions)
        hit = cache.get(actions)
        if hit is None:
            hit = expression_loss(vocab.to_expression(actions), data)
            cache[actions] = hit
        return hit

    return loss_fn


# ---- trajectory ranking

def _token_sort_key(tok) -> tuple[int, float]:
    if tok.kind == "feature":
        return (0, float(tok.index))
    if tok.kind == "const":
        return (1, tok.value)
    if tok.kind == "unary":
        return (2, float(UNARY_OPS.index(tok.op)))
    return (3, float(BINARY_OPS.index(tok.op)))


def expression_sort_key(expr: Expression) -> tuple:
    """Deterministic total order on expressions: length, then token order."""
    return (len(expr.tokens), tuple(_token_sort_key(t) for t in expr.tokens))


def top_k_count(k: float, n: int) -> int:
    """ceil(k * n), guarded against float artifacts near integers."""
    if not 0.0 < k <= 1.0:
        raise ValueError(f"k must be in (0, 1], got {k}")
    if n < 1:
        raise ValueError(f"need at least one item, got {n}")
    return min(n, max(1, math.ceil(k * n - 1e-9)))


def select_top_k(trajectories: Sequence, k: float) -> list:
    """Lowest-loss ceil(k*n) trajectories; ties break shorter-then-lexicographic."""
    count = top_k_count(k, len(trajectories))
    ranked = sorted(
        trajectories, key=lambda t: (t.loss,) + expression_sort_key(t.expression)
    )
    return ranked[:count]


# ---- decision metrics

def binarize(values: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) >= threshold


def recall(labels: np.ndarray, predictions: np.ndarray) -> float:
    """True-positive rate over boolean arrays."""
    labels = np.asarray(labels, dtype=bool)
    predictions = np.asarray(predictions, dtype=bool)
    positives = int(labels.sum())
    if positives == 0:
        raise NoPositivesError("recall is undefined: no positive labels")
    tp = int((labels & predictions).sum())
    return tp / positives


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Exact ROC area via the rank-sum identity with tie-averaged ranks."""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("AUC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
