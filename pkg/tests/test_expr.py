import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from commonfix.errors import EvaluationError, ParseError
from commonfix.expr import (
    BinOp,
    Neg,
    Num,
    Pow,
    Var,
    affine_coeffs,
    evaluate,
    parse,
    unparse,
    variables,
)

numbers = st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False).map(Num)
names = st.sampled_from(["x", "x_1", "x_2"]).map(Var)

trees = st.recursive(
    numbers | names,
    lambda sub: st.one_of(
        sub.map(Neg),
        st.tuples(st.sampled_from("+-*/"), sub, sub).map(lambda t: BinOp(*t)),
        st.tuples(sub, st.integers(-4, 4)).map(lambda t: Pow(*t)),
    ),
    max_leaves=12,
)


@given(trees)
def test_print_then_parse_recovers_tree(tree):
    assert parse(unparse(tree)) == tree


@given(trees)
def test_printing_is_idempotent(tree):
    once = unparse(parse(unparse(tree)))
    assert unparse(parse(once)) == once


@pytest.mark.parametrize(
    "text, value",
    [
        ("1 + 2 * 3", 7.0),
        ("(1 + 2) * 3", 9.0),
        ("2^3", 8.0),
        ("-2^2", -4.0),
        ("(-2)^2", 4.0),
        ("8 / 4 / 2", 1.0),
        ("8 - 4 - 2", 2.0),
        ("2^-1", 0.5),
        ("10/32", 0.3125),
        ("1e-3 * 1000", 1.0),
    ],
)
def test_precedence_and_associativity(text, value):
    assert evaluate(parse(text), {}) == value


def test_variables_and_vector_evaluation():
    e = parse("(1 + x)/2")
    assert variables(e) == {"x"}
    x = np.array([0.0, 0.5, 1.0])
    np.testing.assert_array_equal(evaluate(e, {"x": x}), (1 + x) / 2)


@pytest.mark.parametrize("text", ["", "1 +", "x ^ 0.5", "2^2^2", "(x", "x)", "y", "1 $ 2", "s + t"])
def test_rejects_malformed_input(text):
    with pytest.raises(ParseError):
        parse(text)


def test_custom_variable_sets():
    assert variables(parse("s*t", {"s", "t"})) == {"s", "t"}
    with pytest.raises(ParseError):
        parse("x", {"n"})


def test_parse_error_reports_offset():
    with pytest.raises(ParseError) as info:
        parse("1 + * 2")
    assert info.value.offset == 4


def test_division_by_zero_strict_and_lenient():
    e = parse("1/x")
    with pytest.raises(EvaluationError):
        evaluate(e, {"x": np.array([1.0, 0.0])})
    out = evaluate(e, {"x": np.array([2.0, 0.0])}, strict=False)
    assert out[0] == 0.5 and math.isnan(out[1])


def test_unbound_variable():
    with pytest.raises(EvaluationError):
        evaluate(parse("x + 1"), {})


@pytest.mark.parametrize(
    "text, coeffs",
    [
        ("x/2", (0.5, 0.0)),
        ("(1+x)/4", (0.25, 0.25)),
        ("11/32", (0.0, 11 / 32)),
        ("3 - 2*x", (-2.0, 3.0)),
        ("x^2", None),
        ("1/x", None),
    ],
)
def test_affine_coefficients(text, coeffs):
    assert affine_coeffs(parse(text), {"x"}) == coeffs
