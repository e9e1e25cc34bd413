from __future__ import annotations

import math

import numpy as np
import pytest

from exprmine import expr
from exprmine.errors import (
    ConfigInvalidError,
    ExpressionSyntaxError,
    IncompleteExpressionError,
    UnknownFeatureError,
)

from conftest import make_vocab, random_expression


def E(*tokens) -> expr.Expression:
    return expr.Expression(tuple(tokens))


class TestTokens:
    def test_arities(self):
        assert expr.arity(expr.binary("add")) == 2
        assert expr.arity(expr.unary("sin")) == 1
        assert expr.arity(expr.feature(0)) == 0
        assert expr.arity(expr.constant(2.0)) == 0

    def test_bad_operator_names(self):
        with pytest.raises(ValueError):
            expr.unary("tan")
        with pytest.raises(ValueError):
            expr.binary("pow")
        with pytest.raises(ValueError):
            expr.feature(-1)


class TestSlotCompleteness:
    def test_empty_rejected(self):
        with pytest.raises(IncompleteExpressionError):
            E()

    def test_open_slot_rejected(self):
        with pytest.raises(IncompleteExpressionError):
            E(expr.binary("add"), expr.feature(0))

    def test_trailing_tokens_rejected(self):
        with pytest.raises(IncompleteExpressionError):
            E(expr.binary("add"), expr.feature(0), expr.feature(1), expr.feature(1))

    def test_subtree_end(self):
        toks = (
            expr.binary("add"),
            expr.feature(0),
            expr.binary("mul"),
            expr.feature(1),
            expr.constant(2.0),
        )
        assert expr.subtree_end(toks, 1) == 2
        assert expr.subtree_end(toks, 2) == 5
        assert expr.subtree_end(toks, 0) == 5


class TestEvaluate:
    def test_add(self):
        e = E(expr.binary("add"), expr.feature(0), expr.constant(2.0))
        assert expr.evaluate(e, [3.0]) == 5.0

    def test_protected_div_by_zero(self):
        e = E(expr.binary("div"), expr.constant(1.0), expr.constant(0.0))
        assert expr.evaluate(e, [0.0]) == pytest.approx(1e9, rel=1e-12)

    def test_protected_div_keeps_sign(self):
        e = E(expr.binary("div"), expr.constant(1.0), expr.feature(0))
        assert expr.evaluate(e, [-1e-12]) == pytest.approx(-1e9, rel=1e-12)
        assert expr.evaluate(e, [4.0]) == 0.25

    def test_protected_log_of_negative(self):
        e = E(expr.unary("log"), expr.constant(-1.0))
        assert expr.evaluate(e, [0.0]) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_protected_exp_clamps(self):
        e = E(expr.unary("exp"), expr.constant(100.0))
        assert expr.evaluate(e, [0.0]) == pytest.approx(math.exp(50.0), rel=1e-12)

    def test_sin_cos_unprotected(self):
        e = E(expr.unary("sin"), expr.feature(0))
        assert expr.evaluate(e, [math.pi / 2]) == pytest.approx(1.0, abs=1e-12)
        e = E(expr.unary("cos"), expr.feature(0))
        assert expr.evaluate(e, [0.0]) == 1.0

    def test_nested(self):
        e = expr.parse_expression("((x0 * 2) - cos(x1))")
        assert expr.evaluate(e, [1.5, 0.0]) == pytest.approx(2.0, abs=1e-12)

    def test_matrix_matches_rowwise(self):
        rng = np.random.default_rng(3)
        vocab = make_vocab(3, constants=(-2.0, 0.5, 2.0))
        X = rng.normal(size=(17, 3)) * 10
        for _ in range(25):
            e = random_expression(vocab, 12, rng)
            col = expr.evaluate_matrix(e, X)
            rows = [expr.evaluate(e, X[i]) for i in range(len(X))]
            np.testing.assert_allclose(col, rows, rtol=0, atol=0)

    def test_unknown_feature_index(self):
        e = E(expr.feature(5))
        with pytest.raises(UnknownFeatureError):
            expr.evaluate(e, [1.0, 2.0])

    def test_totality_random_expressions(self):
        # overflow-prone vocabulary on purpose: exp towers and huge features
        rng = np.random.default_rng(11)
        vocab = make_vocab(2, constants=(10.0, -10.0))
        X = np.array([[1e9, -1e9], [0.0, 1e-12], [3.14, -0.5]])
        for _ in range(300):
            e = random_expression(vocab, 40, rng)
            out = expr.evaluate_matrix(e, X)
            assert np.isfinite(out).all(), str(e)

    def test_mul_tower_of_exp_stays_finite(self):
        # balanced mul tree over exp(50) leaves overflows raw float64
        leaf = [expr.unary("exp"), expr.constant(100.0)]
        toks = leaf
        for _ in range(4):
            toks = [expr.binary("mul")] + toks + toks
        e = E(*toks)
        assert len(e) == 47
        assert np.isfinite(expr.evaluate(e, [0.0]))

    def test_huge_row_values_stay_finite(self):
        e = E(expr.binary("mul"), expr.feature(0), expr.feature(0))
        assert np.isfinite(expr.evaluate(e, [1e300]))
        e = E(expr.binary("sub"), expr.feature(0), expr.feature(1))
        assert np.isfinite(expr.evaluate(e, [1e308, -1e308]))


class TestTextRoundTrip:
    def test_format_hand_examples(self):
        assert str(E(expr.binary("add"), expr.feature(0), expr.constant(2.0))) == "(x0 + 2)"
        assert str(E(expr.unary("log"), expr.feature(1))) == "log(1 + |x1|)"
        assert str(E(expr.binary("sub"), expr.feature(0), expr.constant(-2.0))) == "(x0 - -2)"
        assert str(E(expr.unary("exp"), expr.constant(0.5))) == "exp(0.5)"

    def test_format_with_names(self):
        e = E(expr.binary("mul"), expr.feature(1), expr.feature(0))
        text = expr.format_expression(e, names=["count_ip_1h", "sum_card_1d"])
        assert text == "(sum_card_1d * count_ip_1h)"

    def test_parse_named_features(self):
        names = ["count_ip_1h", "sum_card_1d"]
        e = expr.parse_expression("(count_ip_1h + sum_card_1d)", feature_names=names)
        assert e.tokens[1] == expr.feature(0)
        assert e.tokens[2] == expr.feature(1)

    def test_parse_unknown_name(self):
        with pytest.raises(UnknownFeatureError):
            expr.parse_expression("(a + b)", feature_names=["a"])
        with pytest.raises(UnknownFeatureError):
            expr.parse_expression("y1")

    def test_parse_errors(self):
        for text in ["(x0 +)", "(x0 + x1", "x0 x1", "sin()", "", "(x0 ? x1)"]:
            with pytest.raises(ExpressionSyntaxError):
                expr.parse_expression(text)

    def test_operator_named_feature(self):
        # a column called "sin" is only an operator when followed by (
        e = expr.parse_expression("(sin + sin(x))", feature_names=["sin", "x"])
        assert e.tokens[1] == expr.feature(0)
        assert e.tokens[2] == expr.unary("sin")

    def test_negative_constant_round_trip(self):
        e = E(expr.binary("div"), expr.constant(-0.5), expr.feature(0))
        assert expr.parse_expression(str(e)) == e

    def test_round_trip_random(self):
        rng = np.random.default_rng(5)
        vocab = make_vocab(4, constants=(-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 5.0, 10.0))
        names = vocab.feature_names
        for _ in range(150):
            e = random_expression(vocab, 40, rng)
            assert expr.parse_expression(str(e)) == e
            named = expr.format_expression(e, names=names)
            assert expr.parse_expression(named, feature_names=names) == e


class TestVocabulary:
    def test_ordering_and_spellings(self):
        vocab = make_vocab(2, constants=(2.0,))
        assert vocab.spellings() == [
            "f:x0", "f:x1", "c:2",
            "sin", "cos", "log", "exp",
            "add", "sub", "mul", "div",
        ]
        assert vocab.index_of(expr.constant(2.0)) == 2
        assert list(vocab.arities) == [0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]

    def test_from_spellings(self):
        vocab = make_vocab(2, constants=(2.0,))
        rebuilt = expr.Vocabulary.from_spellings(vocab.spellings(), vocab.feature_names)
        assert rebuilt.tokens == vocab.tokens

    def test_needs_operand(self):
        with pytest.raises(ConfigInvalidError):
            expr.Vocabulary((expr.binary("add"), expr.unary("sin")))
        with pytest.raises(ConfigInvalidError):
            expr.Vocabulary(())

    def test_to_expression(self):
        vocab = make_vocab(2, constants=(2.0,))
        e = vocab.to_expression([7, 0, 2])
        assert str(e) == "(x0 + 2)"
