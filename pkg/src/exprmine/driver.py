"""End-to-end run: data in, converged search out, artifacts on disk.

Features are materialised over the full table first so holdout rows keep
their real transaction history; only the label rows are split, time-ordered,
so training never sees the future. Artifacts are written with fixed float
formatting and sorted JSON keys, which makes a rerun of the same config and
seed byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os

import numpy as np

from .config import RunConfig
from .engine import Archive, EpochReport, SearchEngine
from .errors import DegenerateLabelsError, TooFewExpressionsError
from .evaluation import (
    LabeledDataset,
    auc,
    binarize,
    predict_scores,
    recall,
    top_k_count,
)
from .expr import Vocabulary, format_expression
from .features import build_matrix, default_feature_config, load_feature_config, load_schema, load_transactions
from .rules import Rule, solve_boundary, equate_expressions, threshold_rule, write_rule_file

logger = logging.getLogger(__name__)


def split_time_ordered(
    data: LabeledDataset, holdout_fraction: float
) -> tuple[LabeledDataset, LabeledDataset | None]:
    """Earliest rows train, latest rows hold out. Rows must be time-sorted."""
    n = data.features.shape[0]
    cut = n - int(round(n * holdout_fraction))
    if cut < 1:
        raise DegenerateLabelsError("holdout fraction leaves no training rows")
    if cut >= n:
        return data, None
    idx = np.arange(n)
    return data.subset(idx[:cut]), data.subset(idx[cut:])


def load_run_data(cfg: RunConfig) -> LabeledDataset:
    schema = load_schema(cfg.data.schema)
    table = load_transactions(cfg.data.csv, schema)
    if cfg.data.features:
        specs = load_feature_config(cfg.data.features)
    else:
        specs = default_feature_config(schema)
    return build_matrix(table, specs)


def holdout_metrics(engine: SearchEngine, holdout: LabeledDataset | None, threshold: float) -> dict:
    """Recall and AUC of the best expression; None where undefined."""
    metrics = {"recall": None, "auc": None, "holdout_loss": None}
    if holdout is None:
        return metrics
    best = engine.best_expression()
    scores = predict_scores(best, holdout.features)
    labels = holdout.targets >= 0.5
    metrics["holdout_loss"] = engine.holdout_loss(holdout)
    if labels.any():
        metrics["recall"] = recall(labels, binarize(scores, threshold))
    if labels.any() and not labels.all():
        metrics["auc"] = auc(labels, scores)
    return metrics


def extract_rules(
    archive: Archive, k: float, tau: float, feature_names
) -> tuple[list[Rule], list[str]]:
    """Threshold rules from the archive's top slice, plus boundary relations."""
    if not len(archive):
        return [], []
    entries = archive.top(top_k_count(k, len(archive)))
    rules = [
        threshold_rule(e.expression, tau, rule_id=i, epoch=e.epoch)
        for i, e in enumerate(entries)
    ]
    relations: list[str] = []
    try:
        equations = equate_expressions([e.expression for e in entries])
        relations = solve_boundary(
            equations, names=list(feature_names)
        ).relations
    except (TooFewExpressionsError, ValueError):
        pass  # fewer than two distinct boundaries; no relations to report
    return rules, relations


def _report_dict(
    cfg: RunConfig,
    history: list[EpochReport],
    engine: SearchEngine,
    metrics: dict,
    relations: list[str],
    n_rules: int,
) -> dict:
    best = engine.archive.best()
    return {
        "best_expression": engine.render(best.expression),
        "best_loss": best.loss,
        "best_epoch": best.epoch,
        "n_epochs": len(history),
        "recall": metrics["recall"],
        "auc": metrics["auc"],
        "holdout_loss": metrics["holdout_loss"],
        "n_rules": n_rules,
        "relations": relations,
        "epochs": [dataclasses.asdict(r) for r in history],
        "config": cfg.to_dict(),
    }


def _report_text(report: dict) -> str:
    lines = [
        f"best expression: {report['best_expression']}",
        f"best loss: {report['best_loss']:.6g} (epoch {report['best_epoch']})",
        f"epochs run: {report['n_epochs']}",
    ]
    for key in ("recall", "auc", "holdout_loss"):
        value = report[key]
        lines.append(f"{key}: " + ("n/a" if value is None else f"{value:.6g}"))
    lines.append(f"rules extracted: {report['n_rules']}")
    for rel in report["relations"]:
        lines.append(f"relation: {rel}")
    return "\n".join(lines) + "\n"


def write_archive(path: str, archive: Archive, feature_names) -> None:
    """Expressions are stored in their feature-named rendering so the rules
    subcommand can parse them back against the same columns."""
    payload = {
        "columns": list(feature_names),
        "entries": [
            {
                "expression": format_expression(e.expression, feature_names),
                "loss": e.loss,
                "epoch": e.epoch,
                "actions": list(e.actions),
            }
            for e in archive.entries
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_until_convergence(cfg: RunConfig) -> dict:
    """Full pipeline; returns the report dict and writes artifacts to out_dir."""
    data = load_run_data(cfg)
    train, holdout = split_time_ordered(data, cfg.data.holdout_fraction)
    if np.all(train.targets == train.targets[0]):
        raise DegenerateLabelsError("training labels are constant; nothing to fit")

    vocab = Vocabulary.from_parts(data.columns, constants=cfg.mcts.constants)
    engine = SearchEngine.from_run_config(vocab, train, cfg)
    history = engine.run()

    metrics = holdout_metrics(engine, holdout, cfg.eval.threshold)
    rules, relations = extract_rules(
        engine.archive, cfg.mcts.k, cfg.rules.tau, data.columns
    )
    report = _report_dict(cfg, history, engine, metrics, relations, len(rules))

    out_dir = cfg.data.out_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(_report_text(report))
    write_rule_file(
        os.path.join(out_dir, "rules.txt"), rules, names=data.columns, relations=relations
    )
    write_archive(os.path.join(out_dir, "archive.json"), engine.archive, data.columns)
    logger.info("run complete: %s (loss %.6g)", report["best_expression"], report["best_loss"])
    return report
