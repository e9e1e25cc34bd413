"""Expression tokens, protected evaluation, and the text round trip.

Expressions live in prefix (Polish) order: an operator token is followed by
its operand subtrees. Every operator is total over finite inputs, so any
slot-complete token sequence evaluates to a finite float on any finite row.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigInvalidError,
    ExpressionSyntaxError,
    IncompleteExpressionError,
    UnknownFeatureError,
)

UNARY_OPS = ("sin", "cos", "log", "exp")
BINARY_OPS = ("add", "sub", "mul", "div")

_BINARY_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_SYMBOL_BINARY = {v: k for k, v in _BINARY_SYMBOL.items()}

# exp input clamp and the division denominator floor, per the protected forms
EXP_CLAMP = 50.0
MIN_DENOM = 1e-9

# float64 overflow guard: mul/div/add/sub of in-range operands can leave
# float64 even though the protected semantics promise a finite real, so every
# operator result is pulled back into [-VALUE_LIMIT, VALUE_LIMIT]
VALUE_LIMIT = 1e300


@dataclass(frozen=True)
class Token:
    """One vocabulary element: a feature, a constant, or an operator."""

    kind: str  # "feature" | "const" | "unary" | "binary"
    index: int = -1
    value: float = 0.0
    op: str = ""


def feature(index: int) -> Token:
    if index < 0:
        raise ValueError(f"feature index must be >= 0, got {index}")
    return Token("feature", index=index)


def constant(value: float) -> Token:
    return Token("const", value=float(value))


def unary(op: str) -> Token:
    if op not in UNARY_OPS:
        raise ValueError(f"unknown unary operator {op!r}")
    return Token("unary", op=op)


def binary(op: str) -> Token:
    if op not in BINARY_OPS:
        raise ValueError(f"unknown binary operator {op!r}")
    return Token("binary", op=op)


def arity(token: Token) -> int:
    if token.kind == "unary":
        return 1
    if token.kind == "binary":
        return 2
    return 0


def check_slot_complete(tokens: Sequence[Token]) -> None:
    """Raise IncompleteExpressionError unless tokens form exactly one tree."""
    if not tokens:
        raise IncompleteExpressionError("empty token sequence")
    need = 1
    last = len(tokens) - 1
    for i, tok in enumerate(tokens):
        need += arity(tok) - 1
        if need == 0 and i < last:
            raise IncompleteExpressionError(
                f"expression complete at token {i + 1} but {last - i} tokens remain"
            )
    if need != 0:
        raise IncompleteExpressionError(f"{need} operand slot(s) left open")


@dataclass(frozen=True)
class Expression:
    """A slot-complete prefix token sequence."""

    tokens: tuple[Token, ...]

    def __post_init__(self):
        check_slot_complete(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __str__(self) -> str:
        return format_expression(self)


def subtree_end(tokens: Sequence[Token], start: int) -> int:
    """Index one past the subtree rooted at tokens[start]."""
    need = 1
    i = start
    while need > 0:
        if i >= len(tokens):
            raise IncompleteExpressionError("subtree runs past end of tokens")
        need += arity(tokens[i]) - 1
        i += 1
    return i


# ---- evaluation

def _protected_div(x, y):
    # sign(0) counts as +1, so the denominator floor keeps y's direction
    denom = np.where(y >= 0.0, np.maximum(y, MIN_DENOM), np.minimum(y, -MIN_DENOM))
    return x / denom


def _clamp(values):
    return np.clip(values, -VALUE_LIMIT, VALUE_LIMIT)


def evaluate_matrix(expr: Expression, X: np.ndarray) -> np.ndarray:
    """Evaluate expr on every row of X, returning shape (n,).

    X is an (n, d) float array; every value must be finite. The result is
    always finite: log/exp/div use their protected forms and each operator
    result is clamped into float64's comfortable range.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got shape {X.shape}")
    n, d = X.shape
    stack: list = []
    for tok in reversed(expr.tokens):
        if tok.kind == "feature":
            if tok.index >= d:
                raise UnknownFeatureError(
                    f"expression uses feature {tok.index} but data has {d} columns"
                )
            stack.append(X[:, tok.index])
        elif tok.kind == "const":
            stack.append(tok.value)
        elif tok.kind == "unary":
            a = stack.pop()
            if tok.op == "sin":
                stack.append(np.sin(a))
            elif tok.op == "cos":
                stack.append(np.cos(a))
            elif tok.op == "log":
                stack.append(np.log1p(np.abs(a)))
            else:
                stack.append(np.exp(np.clip(a, -EXP_CLAMP, EXP_CLAMP)))
        else:
            a = stack.pop()
            b = stack.pop()
            # transient infinities are expected here; _clamp pulls them back
            with np.errstate(over="ignore"):
                if tok.op == "add":
                    stack.append(_clamp(a + b))
                elif tok.op == "sub":
                    stack.append(_clamp(a - b))
                elif tok.op == "mul":
                    stack.append(_clamp(a * b))
                else:
                    stack.append(_clamp(_protected_div(a, b)))
    out = stack.pop()
    if np.ndim(out) == 0:
        return np.full(n, float(out))
    return np.asarray(out, dtype=np.float64)


def evaluate(expr: Expression, row: Sequence[float]) -> float:
    """Evaluate expr on a single feature row."""
    row = np.asarray(row, dtype=np.float64)
    return float(evaluate_matrix(expr, row.reshape(1, -1))[0])


# ---- text form

def format_constant(value: float) -> str:
    return f"{value:.6g}"


def format_expression(expr: Expression, names: Sequence[str] | None = None) -> str:
    """Render infix text with full parentheses; inverse of parse_expression."""
    tokens = expr.tokens
    pos = 0

    def emit() -> str:
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok.kind == "feature":
            if names is not None:
                if tok.index >= len(names):
                    raise UnknownFeatureError(
                        f"feature {tok.index} has no name in a {len(names)}-column list"
                    )
                return names[tok.index]
            return f"x{tok.index}"
        if tok.kind == "const":
            return format_constant(tok.value)
        if tok.kind == "unary":
            inner = emit()
            if tok.op == "log":
                return f"log(1 + |{inner}|)"
            return f"{tok.op}({inner})"
        left = emit()
        right = emit()
        return f"({left} {_BINARY_SYMBOL[tok.op]} {right})"

    return emit()


_NUMBER_RE = re.compile(r"-?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_NAME_RE = re.compile(r"[^\s()|+*/-]+")


def _lex(text: str) -> list[tuple[str, str, int]]:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        m = _NUMBER_RE.match(text, i)
        if m:
            out.append(("num", m.group(), i))
            i = m.end()
            continue
        if ch in "()|+-*/":
            out.append(("sym", ch, i))
            i += 1
            continue
        m = _NAME_RE.match(text, i)
        if m:
            out.append(("name", m.group(), i))
            i = m.end()
            continue
        raise ExpressionSyntaxError(f"unexpected character {ch!r}", i)
    return out


def parse_expression(text: str, feature_names: Sequence[str] | None = None) -> Expression:
    """Parse the infix text format back into an Expression.

    With feature_names, bare names resolve to their column index; otherwise
    only x<i> names are accepted. sin/cos/exp/log count as operators only
    when followed by '(' so columns sharing those names stay reachable.
    """
    toks = _lex(text)
    pos = 0
    name_index = (
        {name: i for i, name in enumerate(feature_names)} if feature_names is not None else None
    )

    def peek():
        return toks[pos] if pos < len(toks) else ("end", "", len(text))

    def take():
        nonlocal pos
        t = peek()
        pos += 1
        return t

    def expect(kind: str, value: str):
        t = take()
        if t[0] != kind or t[1] != value:
            raise ExpressionSyntaxError(f"expected {value!r}, got {t[1]!r}", t[2])

    def parse_feature(name: str) -> Token:
        if name_index is not None:
            if name not in name_index:
                raise UnknownFeatureError(f"unknown feature name {name!r}")
            return feature(name_index[name])
        m = re.fullmatch(r"x(\d+)", name)
        if not m:
            raise UnknownFeatureError(f"unknown feature name {name!r}")
        return feature(int(m.group(1)))

    def parse_node() -> list[Token]:
        kind, value, at = take()
        if kind == "sym" and value == "(":
            left = parse_node()
            op_kind, op_value, op_at = take()
            if op_kind != "sym" or op_value not in _SYMBOL_BINARY:
                raise ExpressionSyntaxError(f"expected an operator, got {op_value!r}", op_at)
            right = parse_node()
            expect("sym", ")")
            return [binary(_SYMBOL_BINARY[op_value])] + left + right
        if kind == "num":
            return [constant(float(value))]
        if kind == "name":
            nxt = peek()
            follows_paren = nxt[0] == "sym" and nxt[1] == "("
            if value in ("sin", "cos", "exp") and follows_paren:
                expect("sym", "(")
                inner = parse_node()
                expect("sym", ")")
                return [unary(value)] + inner
            if value == "log" and follows_paren:
                expect("sym", "(")
                expect("num", "1")
                expect("sym", "+")
                expect("sym", "|")
                inner = parse_node()
                expect("sym", "|")
                expect("sym", ")")
                return [unary("log")] + inner
            return [parse_feature(value)]
        raise ExpressionSyntaxError(f"unexpected token {value!r}", at)

    tokens = parse_node()
    if pos != len(toks):
        raise ExpressionSyntaxError(f"trailing input {toks[pos][1]!r}", toks[pos][2])
    return Expression(tuple(tokens))


# ---- vocabulary

def token_spelling(token: Token, names: Sequence[str] | None = None) -> str:
    if token.kind == "feature":
        name = names[token.index] if names is not None else f"x{token.index}"
        return f"f:{name}"
    if token.kind == "const":
        return f"c:{format_constant(token.value)}"
    return token.op


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token set the search chooses from.

    Order is the action-index order everywhere: masks are boolean per
    vocabulary index and ties break toward the lowest index.
    """

    tokens: tuple[Token, ...]
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.tokens:
            raise ConfigInvalidError("vocabulary is empty")
        if all(arity(t) > 0 for t in self.tokens):
            raise ConfigInvalidError("vocabulary needs at least one operand token")

    @classmethod
    def from_parts(
        cls,
        feature_names: Sequence[str],
        constants: Iterable[float] = (),
        unary_ops: Sequence[str] = UNARY_OPS,
        binary_ops: Sequence[str] = BINARY_OPS,
    ) -> "Vocabulary":
        tokens = [feature(i) for i in range(len(feature_names))]
        tokens += [constant(v) for v in constants]
        tokens += [unary(op) for op in unary_ops]
        tokens += [binary(op) for op in binary_ops]
        return cls(tuple(tokens), tuple(feature_names))

    @classmethod
    def from_spellings(
        cls, spellings: Sequence[str], feature_names: Sequence[str]
    ) -> "Vocabulary":
        """Build from token spellings like f:<name>, c:<value>, add, sin."""
        name_index = {name: i for i, name in enumerate(feature_names)}
        tokens = []
        for s in spellings:
            s = s.strip()
            if not s:
                continue
            if s.startswith("f:"):
                name = s[2:]
                if name not in name_index:
                    raise UnknownFeatureError(f"vocabulary names unknown feature {name!r}")
                tokens.append(feature(name_index[name]))
            elif s.startswith("c:"):
                try:
                    tokens.append(constant(float(s[2:])))
                except ValueError:
                    raise ConfigInvalidError(f"bad constant spelling {s!r}") from None
            elif s in UNARY_OPS:
                tokens.append(unary(s))
            elif s in BINARY_OPS:
                tokens.append(binary(s))
            else:
                raise ConfigInvalidError(f"unknown token spelling {s!r}")
        return cls(tuple(tokens), tuple(feature_names))

    @property
    def size(self) -> int:
        return len(self.tokens)

    @cached_property
    def arities(self) -> np.ndarray:
        a = np.array([arity(t) for t in self.tokens], dtype=np.int64)
        a.setflags(write=False)
        return a

    @cached_property
    def _index(self) -> dict:
        return {tok: i for i, tok in enumerate(self.tokens)}

    def index_of(self, token: Token) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise KeyError(f"token {token} not in vocabulary") from None

    def spelling(self, index: int) -> str:
        return token_spelling(self.tokens[index], self.feature_names or None)

    def spellings(self) -> list[str]:
        return [self.spelling(i) for i in range(self.size)]

    def to_expression(self, actions: Sequence[int]) -> Expression:
        return Expression(tuple(self.tokens[a] for a in actions))
