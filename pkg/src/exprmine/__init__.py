"""Expression mining for fraud signals.

Searches prefix-notation expressions over transaction velocity features
with prior-guided Monte Carlo tree search, scores them by classification
loss, and distills the best into human-readable threshold rules.
"""

from .config import (
    DEFAULT_CONSTANTS,
    DataConfig,
    EvalConfig,
    MctsConfig,
    PolicyConfig,
    RulesConfig,
    RunConfig,
    load_run_config,
    load_synth_config,
)
from .driver import run_until_convergence, split_time_ordered
from .engine import Archive, ArchiveEntry, EpochReport, SearchEngine
from .errors import DataError, ExprMineError, SearchError
from .estimator import ExpressionSearchClassifier
from .evaluation import (
    LabeledDataset,
    auc,
    bce_loss,
    expression_loss,
    predict_scores,
    recall,
    reward,
    select_top_k,
)
from .expr import (
    Expression,
    Token,
    Vocabulary,
    evaluate,
    evaluate_matrix,
    format_expression,
    parse_expression,
)
from .features import (
    Schema,
    TransactionTable,
    build_matrix,
    default_feature_config,
    load_feature_config,
    load_schema,
    load_transactions,
    relational_velocity,
    velocity,
)
from .mcts import Trajectory, generate_trajectory, puct_score, search
from .policy import ExternalPolicy, NGramPolicy, UniformPolicy
from .rules import (
    Rule,
    apply_rules,
    equate_expressions,
    read_rule_file,
    solve_boundary,
    threshold_rule,
    write_rule_file,
)
from .synth import SynthConfig, brute_force_best, count_expressions, generate_transactions

__version__ = "0.1.0"

__all__ = [
    "Archive",
    "ArchiveEntry",
    "DEFAULT_CONSTANTS",
    "DataConfig",
    "DataError",
    "EpochReport",
    "EvalConfig",
    "ExprMineError",
    "Expression",
    "ExpressionSearchClassifier",
    "ExternalPolicy",
    "LabeledDataset",
    "MctsConfig",
    "NGramPolicy",
    "PolicyConfig",
    "Rule",
    "RulesConfig",
    "RunConfig",
    "Schema",
    "SearchEngine",
    "SearchError",
    "SynthConfig",
    "Token",
    "Trajectory",
    "TransactionTable",
    "UniformPolicy",
    "Vocabulary",
    "__version__",
    "apply_rules",
    "auc",
    "bce_loss",
    "brute_force_best",
    "build_matrix",
    "count_expressions",
    "default_feature_config",
    "equate_expressions",
    "evaluate",
    "evaluate_matrix",
    "expression_loss",
    "format_expression",
    "generate_trajectory",
    "generate_transactions",
    "load_feature_config",
    "load_run_config",
    "load_schema",
    "load_synth_config",
    "load_transactions",
    "parse_expression",
    "predict_scores",
    "puct_score",
    "read_rule_file",
    "recall",
    "relational_velocity",
    "reward",
    "run_until_convergence",
    "search",
    "select_top_k",
    "solve_boundary",
    "split_time_ordered",
    "threshold_rule",
    "velocity",
    "write_rule_file",
]
