"""Turning archived expressions into decision rules and boundary relations.

A score threshold tau on sigma(e(x)) is the linear condition
e(x) >= logit(tau), so rules carry the logit as their threshold. Comparing
several near-optimal expressions pairwise over their shared additive terms
yields homogeneous equations whose solved form exposes which terms trade
off against each other along the decision boundary.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigInvalidError, ExpressionSyntaxError, TooFewExpressionsError
from .expr import Expression, evaluate, format_expression, parse_expression, subtree_end

PIVOT_TOLERANCE = 1e-10


@dataclass(frozen=True)
class Rule:
    """Fire when the expression value reaches the threshold."""

    expression: Expression
    threshold: float
    tau: float
    rule_id: int = 0
    epoch: int = -1


def logit(tau: float) -> float:
    if not 0.0 < tau < 1.0:
        raise ConfigInvalidError(f"tau must be strictly inside (0, 1), got {tau}")
    return math.log(tau / (1.0 - tau))


def threshold_rule(
    expression: Expression, tau: float, rule_id: int = 0, epoch: int = -1
) -> Rule:
    return Rule(expression, logit(tau), tau, rule_id, epoch)


def fires(rule: Rule, row: Sequence[float]) -> bool:
    return evaluate(rule.expression, row) >= rule.threshold


def apply_rules(
    rules: Sequence[Rule], row: Sequence[float], combine: str = "any"
) -> tuple[bool, list[int]]:
    """Evaluate every rule on a row: (decision, ids of rules that fired)."""
    if not rules:
        raise ValueError("need at least one rule")
    if combine not in ("any", "all"):
        raise ConfigInvalidError(f"combine must be any or all, got {combine!r}")
    fired = [r.rule_id for r in rules if fires(r, row)]
    decision = len(fired) == len(rules) if combine == "all" else bool(fired)
    return decision, fired


# ---- boundary equations

def additive_terms(expression: Expression) -> list[tuple[tuple, int]]:
    """Flatten top-level additive structure into (term tokens, sign) pairs."""

    def walk(tokens: tuple, sign: int) -> list[tuple[tuple, int]]:
        head = tokens[0]
        if head.kind == "binary" and head.op in ("add", "sub"):
            left_end = subtree_end(tokens, 1)
            left = tokens[1:left_end]
            right = tokens[left_end:]
            right_sign = sign if head.op == "add" else -sign
            return walk(left, sign) + walk(right, right_sign)
        return [(tokens, sign)]

    return walk(expression.tokens, 1)


@dataclass(frozen=True)
class BoundaryEquation:
    """Homogeneous equation sum(coefficients * basis terms) = 0."""

    basis: tuple[Expression, ...]
    coefficients: np.ndarray
    pair: tuple[int, int]


def equate_expressions(expressions: Sequence[Expression]) -> list[BoundaryEquation]:
    """Pairwise-equate expressions over their shared additive-term basis.

    Terms are identified by their token sequence; the basis lists distinct
    terms in first appearance order. Identical expressions contribute no
    equation.
    """
    if len(expressions) < 2:
        raise TooFewExpressionsError("boundary equating needs at least two expressions")
    basis_keys: list[tuple] = []
    key_index: dict[tuple, int] = {}
    signed: list[dict[int, int]] = []
    for e in expressions:
        counts: dict[int, int] = {}
        for term, sign in additive_terms(e):
            if term not in key_index:
                key_index[term] = len(basis_keys)
                basis_keys.append(term)
            idx = key_index[term]
            counts[idx] = counts.get(idx, 0) + sign
        signed.append(counts)

    basis = tuple(Expression(term) for term in basis_keys)
    width = len(basis_keys)
    equations = []
    for i in range(len(expressions)):
        for j in range(i + 1, len(expressions)):
            coeffs = np.zeros(width, dtype=np.float64)
            for idx, c in signed[i].items():
                coeffs[idx] += c
            for idx, c in signed[j].items():
                coeffs[idx] -= c
            if np.any(coeffs != 0.0):
                equations.append(BoundaryEquation(basis, coeffs, (i, j)))
    return equations


@dataclass(frozen=True)
class BoundarySolution:
    """Reduced row echelon form of the boundary system."""

    basis: tuple[Expression, ...]
    rref: np.ndarray
    pivot_columns: tuple[int, ...]
    relations: tuple[str, ...]
    nullspace_dim: int

    @property
    def rank(self) -> int:
        return len(self.pivot_columns)


def _rref(matrix: np.ndarray, tolerance: float = PIVOT_TOLERANCE):
    """Gaussian elimination with partial pivoting to reduced echelon form."""
    m = matrix.astype(np.float64).copy()
    n_rows, n_cols = m.shape
    pivots = []
    row = 0
    for col in range(n_cols):
        if row >= n_rows:
            break
        candidate = row + int(np.argmax(np.abs(m[row:, col])))
        if abs(m[candidate, col]) < tolerance:
            m[row:, col][np.abs(m[row:, col]) < tolerance] = 0.0
            continue
        if candidate != row:
            m[[row, candidate]] = m[[candidate, row]]
        m[row] = m[row] / m[row, col]
        for r in range(n_rows):
            if r != row and m[r, col] != 0.0:
                m[r] = m[r] - m[r, col] * m[row]
        pivots.append(col)
        row += 1
    m[np.abs(m) < tolerance] = 0.0
    return m, tuple(pivots)


def _format_coefficient(value: float, term: str) -> str:
    if value == 1.0:
        return term
    return f"{value:g}*{term}"


def solve_boundary(
    equations: Sequence[BoundaryEquation],
    names: Sequence[str] | None = None,
) -> BoundarySolution:
    """Reduce the equations and render one relation per pivot."""
    if not equations:
        raise ValueError("need at least one boundary equation")
    basis = equations[0].basis
    for eq in equations[1:]:
        if eq.basis != basis:
            raise ValueError("equations were built over different bases")
    matrix = np.vstack([eq.coefficients for eq in equations])
    rref, pivot_columns = _rref(matrix)

    term_text = [format_expression(t, names) for t in basis]
    relations = []
    for row_idx, pivot in enumerate(pivot_columns):
        lhs = term_text[pivot]
        pieces = []
        for col in range(len(basis)):
            if col == pivot:
                continue
            coef = -rref[row_idx, col]
            if coef == 0.0:
                continue
            if pieces:
                joiner = " + " if coef > 0 else " - "
                pieces.append(joiner + _format_coefficient(abs(coef), term_text[col]))
            else:
                text = _format_coefficient(abs(coef), term_text[col])
                pieces.append(text if coef > 0 else "-" + text)
        rhs = "".join(pieces) if pieces else "0"
        relations.append(f"{lhs} = {rhs}")

    return BoundarySolution(
        basis=basis,
        rref=rref,
        pivot_columns=pivot_columns,
        relations=tuple(relations),
        nullspace_dim=len(basis) - len(pivot_columns),
    )


# ---- rule files

_RULE_LINE_RE = re.compile(
    r"^(?P<expr>.*?)\s*>=\s*(?P<threshold>[^#\s]+)\s*(?:#\s*id=(?P<id>\d+)\s+epoch=(?P<epoch>-?\d+)\s*)?$"
)


def format_rule_file(
    rules: Sequence[Rule],
    names: Sequence[str] | None = None,
    relations: Sequence[str] = (),
) -> str:
    lines = ["# decision rules: fire when expression >= threshold"]
    for r in rules:
        text = format_expression(r.expression, names)
        lines.append(f"{text} >= {r.threshold:.12g} # id={r.rule_id} epoch={r.epoch}")
    if relations:
        lines.append("# boundary relations between archived candidates:")
        for rel in relations:
            lines.append(f"# {rel}")
    return "\n".join(lines) + "\n"


def write_rule_file(
    path: str,
    rules: Sequence[Rule],
    names: Sequence[str] | None = None,
    relations: Sequence[str] = (),
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_rule_file(rules, names, relations))


def read_rule_file(path: str, feature_names: Sequence[str] | None = None) -> list[Rule]:
    """Parse rule lines back into Rule objects; comment lines are skipped."""
    rules = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            match = _RULE_LINE_RE.match(line)
            if not match:
                raise ExpressionSyntaxError(f"rule line {lineno} is malformed: {line!r}")
            expression = parse_expression(match.group("expr"), feature_names)
            threshold = float(match.group("threshold"))
            tau = 1.0 / (1.0 + math.exp(-threshold))
            rules.append(
                Rule(
                    expression=expression,
                    threshold=threshold,
                    tau=tau,
                    rule_id=int(match.group("id") or 0),
                    epoch=int(match.group("epoch") or -1),
                )
            )
    return rules
