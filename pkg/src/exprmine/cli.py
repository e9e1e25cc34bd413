"""Command-line entry points.

Subcommands: synth (write a synthetic transaction set), run (search until
convergence and write artifacts), eval (score one expression against a
labeled CSV), rules (re-extract decision rules from a run archive), and
oracle (exhaustive best expression over a small numeric dataset).

Exit codes: 0 success, 1 usage, 2 data/config problems, 3 search problems.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .config import load_run_config, load_synth_config
from .driver import run_until_convergence
from .errors import (
    DataError,
    MissingColumnError,
    SearchError,
    TooFewExpressionsError,
    UnparseableValueError,
)
from .evaluation import (
    LabeledDataset,
    auc,
    binarize,
    expression_loss,
    expression_sort_key,
    predict_scores,
    recall,
    top_k_count,
)
from .expr import Vocabulary, format_expression, parse_expression
from .features import build_matrix, default_feature_config, load_feature_config, load_schema, load_transactions
from .rules import equate_expressions, format_rule_file, solve_boundary, threshold_rule
from .synth import brute_force_best, count_expressions, generate_transactions

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; 2 is reserved for data problems."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exprmine", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic transaction set")
    p.add_argument("--config", required=True, help="INI file with a [synth] section")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("run", help="search until convergence and write artifacts")
    p.add_argument("--config", required=True, help="INI run configuration")

    p = sub.add_parser("eval", help="score one expression against labeled transactions")
    p.add_argument("--expr", required=True, help="expression text, or a file containing it")
    p.add_argument("--data", required=True, help="transaction CSV")
    p.add_argument("--schema", required=True, help="schema file")
    p.add_argument("--features", default="", help="feature config (defaults from schema)")
    p.add_argument("--threshold", type=float, default=0.5, help="score cut for recall")

    p = sub.add_parser("rules", help="extract decision rules from a run archive")
    p.add_argument("--archive", required=True, help="archive.json from a run")
    p.add_argument("--tau", type=float, default=0.5, help="score threshold in (0, 1)")
    p.add_argument("--k", type=float, default=0.2, help="top fraction of the archive")
    p.add_argument("--out", default="", help="write rules here instead of stdout")

    p = sub.add_parser("oracle", help="exhaustive best expression over a numeric CSV")
    p.add_argument("--vocab", required=True,
                   help="comma-separated token spellings, e.g. f:x0,f:x1,c:2,add,mul")
    p.add_argument("--max-len", type=int, required=True, help="token budget")
    p.add_argument("--data", required=True, help="numeric CSV with a y label column")
    return parser


def _load_eval_data(args) -> LabeledDataset:
    schema = load_schema(args.schema)
    table = load_transactions(args.data, schema)
    if args.features:
        specs = load_feature_config(args.features)
    else:
        specs = default_feature_config(schema)
    return build_matrix(table, specs)


def _expression_text(raw: str) -> str:
    if os.path.isfile(raw):
        with open(raw, encoding="utf-8") as fh:
            return fh.read().strip()
    return raw


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_synth(args) -> int:
    cfg = load_synth_config(args.config)
    paths = generate_transactions(cfg, args.out)
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def cmd_run(args) -> int:
    cfg = load_run_config(args.config)
    report = run_until_convergence(cfg)
    _print_json(
        {
            "best_expression": report["best_expression"],
            "best_loss": report["best_loss"],
            "n_epochs": report["n_epochs"],
            "recall": report["recall"],
            "auc": report["auc"],
            "out_dir": cfg.data.out_dir,
        }
    )
    return 0


def cmd_eval(args) -> int:
    data = _load_eval_data(args)
    expr = parse_expression(_expression_text(args.expr), feature_names=data.columns)
    scores = predict_scores(expr, data.features)
    labels = data.targets >= 0.5
    payload = {
        "expression": format_expression(expr, data.columns),
        "loss": expression_loss(expr, data),
        "n_rows": int(data.features.shape[0]),
        "threshold": args.threshold,
        "recall": None,
        "auc": None,
    }
    if labels.any():
        payload["recall"] = recall(labels, binarize(scores, args.threshold))
    if labels.any() and not labels.all():
        payload["auc"] = auc(labels, scores)
    _print_json(payload)
    return 0


def cmd_rules(args) -> int:
    try:
        with open(args.archive, encoding="utf-8") as fh:
            payload = json.load(fh)
        columns = payload["columns"]
        entries = payload["entries"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read archive {args.archive!r}: {exc}") from None
    expressions = [
        parse_expression(e["expression"], feature_names=columns)
        for e in entries
    ]
    epochs = [int(e.get("epoch", -1)) for e in entries]
    losses = [float(e["loss"]) for e in entries]
    if not expressions:
        raise TooFewExpressionsError("archive holds no expressions")
    order = sorted(
        range(len(expressions)),
        key=lambda i: (losses[i],) + expression_sort_key(expressions[i]),
    )
    keep = order[: top_k_count(args.k, len(order))]
    rules = [
        threshold_rule(expressions[i], args.tau, rule_id=rank, epoch=epochs[i])
        for rank, i in enumerate(keep)
    ]
    relations: list[str] = []
    try:
        equations = equate_expressions([expressions[i] for i in keep])
        relations = solve_boundary(equations, names=columns).relations
    except (TooFewExpressionsError, ValueError):
        pass
    text = format_rule_file(rules, names=columns, relations=relations)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def _load_numeric_csv(path: str) -> LabeledDataset:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read data file {path!r}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumnError(f"{path!r} is empty") from None
        header = [h.strip() for h in header]
        if "y" not in header:
            raise MissingColumnError(f"{path!r} needs a y label column")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise UnparseableValueError(f"row {lineno}: expected {len(header)} cells")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise UnparseableValueError(f"row {lineno}: non-numeric cell") from None
    matrix = np.asarray(rows, dtype=np.float64)
    y_col = header.index("y")
    keep = [i for i in range(len(header)) if i != y_col]
    names = tuple(header[i] for i in keep)
    return LabeledDataset(matrix[:, keep], matrix[:, y_col], names)


def cmd_oracle(args) -> int:
    data = _load_numeric_csv(args.data)
    spellings = [s for s in args.vocab.split(",") if s.strip()]
    vocab = Vocabulary.from_spellings(spellings, feature_names=data.columns)
    best, loss = brute_force_best(vocab, args.max_len, data)
    _print_json(
        {
            "expression": format_expression(best, data.columns),
            "loss": loss,
            "searched": count_expressions(vocab, args.max_len),
            "max_len": args.max_len,
        }
    )
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "run": cmd_run,
    "eval": cmd_eval,
    "rules": cmd_rules,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"exprmine: {exc}", file=sys.stderr)
        return 2
    except SearchError as exc:
        print(f"exprmine: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"exprmine: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
