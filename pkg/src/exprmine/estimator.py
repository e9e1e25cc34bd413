"""Array-first facade over the search engine, estimator style.

fit(X, y) runs the same epoch loop the CLI uses, just on an in-memory
matrix instead of a transaction CSV. Hyperparameters mirror the config
file knobs; defaults are trimmed for interactive use.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .config import DEFAULT_CONSTANTS, EvalConfig, MctsConfig, PolicyConfig
from .engine import SearchEngine
from .errors import DegenerateLabelsError
from .evaluation import LabeledDataset, auc, predict_scores
from .expr import Vocabulary


class ExpressionSearchClassifier(BaseEstimator):
    """Binary classifier whose decision function is a learned expression.

    The positive-class score is sigmoid(e(x)) for the single best
    expression found by guided tree search over the training data.
    """

    def __init__(
        self,
        n_expr: int = 16,
        sims_per_move: int = 100,
        c: float = 1.5,
        temperature: float = 1.0,
        variant: str = "alphazero",
        max_len: int = 12,
        k: float = 0.2,
        constants: tuple[float, ...] = DEFAULT_CONSTANTS,
        max_epochs: int = 20,
        patience: int = 5,
        min_improvement: float = 1e-6,
        seed: int = 0,
        lr: float = 0.05,
        l2: float = 1e-4,
        context: int = 4,
        passes: int = 5,
        reward_weighting: bool = False,
        minibatch: int = 256,
        epsilon: float = 1e-6,
        threshold: float = 0.5,
    ):
        self.n_expr = n_expr
        self.sims_per_move = sims_per_move
        self.c = c
        self.temperature = temperature
        self.variant = variant
        self.max_len = max_len
        self.k = k
        self.constants = constants
        self.max_epochs = max_epochs
        self.patience = patience
        self.min_improvement = min_improvement
        self.seed = seed
        self.lr = lr
        self.l2 = l2
        self.context = context
        self.passes = passes
        self.reward_weighting = reward_weighting
        self.minibatch = minibatch
        self.epsilon = epsilon
        self.threshold = threshold

    def _configs(self) -> tuple[MctsConfig, PolicyConfig, EvalConfig]:
        mcts = MctsConfig(
            n_expr=self.n_expr,
            sims_per_move=self.sims_per_move,
            c=self.c,
            temperature=self.temperature,
            variant=self.variant,
            max_len=self.max_len,
            k=self.k,
            constants=tuple(self.constants),
            max_epochs=self.max_epochs,
            patience=self.patience,
            min_improvement=self.min_improvement,
            seed=self.seed,
        )
        policy = PolicyConfig(
            lr=self.lr,
            l2=self.l2,
            context=self.context,
            passes=self.passes,
            reward_weighting=self.reward_weighting,
        )
        ev = EvalConfig(
            threshold=self.threshold, epsilon=self.epsilon, minibatch=self.minibatch
        )
        return mcts, policy, ev

    def fit(self, X, y):
        feature_names = getattr(X, "columns", None)
        X, y = check_X_y(X, y, dtype=np.float64, ensure_min_samples=2)
        y = np.asarray(y, dtype=np.float64)
        if np.any((y < 0) | (y > 1)):
            raise ValueError("y must contain values in [0, 1]")
        if np.all(y == y[0]):
            raise DegenerateLabelsError("y is constant; nothing to fit")
        if feature_names is not None:
            names = tuple(str(c) for c in feature_names)
        else:
            names = tuple(f"x{i}" for i in range(X.shape[1]))
        data = LabeledDataset(X, y, names)
        vocab = Vocabulary.from_parts(names, constants=tuple(self.constants))
        mcts, policy, ev = self._configs()
        engine = SearchEngine(vocab, data, mcts, policy, ev)
        history = engine.run()

        self.n_features_in_ = X.shape[1]
        self.feature_names_in_ = np.asarray(names, dtype=object)
        self.classes_ = np.array([0, 1])
        self.expression_ = engine.best_expression()
        self.expression_text_ = engine.render(self.expression_)
        self.best_loss_ = engine.best_loss()
        self.history_ = history
        self.archive_ = engine.archive
        return self

    def _validate_for_predict(self, X) -> np.ndarray:
        check_is_fitted(self, "expression_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X

    def decision_function(self, X) -> np.ndarray:
        """Raw expression value per row; the sigmoid of this is the score."""
        from .expr import evaluate_matrix

        X = self._validate_for_predict(X)
        return evaluate_matrix(self.expression_, X)

    def predict_proba(self, X) -> np.ndarray:
        X = self._validate_for_predict(X)
        p = predict_scores(self.expression_, X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba(X)[:, 1]
        return (p >= self.threshold).astype(np.int64)

    def score(self, X, y) -> float:
        """Holdout AUC of the expression's scores."""
        X = self._validate_for_predict(X)
        labels = np.asarray(y, dtype=np.float64) >= 0.5
        return auc(labels, predict_scores(self.expression_, X))
