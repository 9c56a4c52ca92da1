import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intcurve.cli.expr import (
    BinOp,
    Call,
    EvalError,
    ExprSyntaxError,
    Neg,
    Num,
    UnknownVariable,
    Var,
    compile_components,
    evaluate,
    parse_field_expr,
    to_source,
)


@pytest.mark.parametrize(
    "src, t, x, expected",
    [
        ("1 + 2 * 3", 0.0, [0.0], 7.0),
        ("(1 + 2) * 3", 0.0, [0.0], 9.0),
        ("1 - 2 - 3", 0.0, [0.0], -4.0),
        ("8 / 4 / 2", 0.0, [0.0], 1.0),
        ("-x0 * -x1", 0.0, [2.0, 3.0], 6.0),
        ("t * x1 + sin(0)", 2.0, [0.0, 5.0], 10.0),
        ("pow(x0, 2) + exp(0) - cos(0)", 0.0, [3.0], 9.0),
        ("1.5e1 + .5", 0.0, [0.0], 15.5),
        ("--2", 0.0, [0.0], 2.0),
    ],
)
def test_evaluation_examples(src, t, x, expected):
    tree = parse_field_expr(src, len(x))
    assert evaluate(tree, t, np.array(x)) == pytest.approx(expected, rel=1e-15)


def test_tree_shape():
    assert parse_field_expr("x0 - x1 * 2", 2) == BinOp("-", Var("x0", 0), BinOp("*", Var("x1", 1), Num(2.0)))
    assert parse_field_expr("-sin(t)", 1) == Neg(Call("sin", (Var("t"),)))


@pytest.mark.parametrize(
    "src, pos",
    [("1 +", 3), ("(x0", 3), ("x0 x0", 3), ("2 * * 3", 4), ("sin 1", 4), ("1 $ 2", 2), ("", 0)],
)
def test_syntax_errors_report_position(src, pos):
    with pytest.raises(ExprSyntaxError) as info:
        parse_field_expr(src, 1)
    assert info.value.position == pos
    assert f"position {pos}" in str(info.value)


def test_wrong_arity():
    with pytest.raises(ExprSyntaxError, match="pow takes 2"):
        parse_field_expr("pow(x0)", 1)


@pytest.mark.parametrize("src, name, pos", [("x2 + 1", "x2", 0), ("1 + y", "y", 4), ("tan(t)", "tan", 0)])
def test_unknown_variable(src, name, pos):
    with pytest.raises(UnknownVariable) as info:
        parse_field_expr(src, 2)
    assert (info.value.name, info.value.position) == (name, pos)


@pytest.mark.parametrize("src", ["1 / x0", "exp(1000)", "pow(x0, 0.5) + pow(-1, 0.5)", "pow(x0, -1)"])
def test_eval_errors(src):
    tree = parse_field_expr(src, 1)
    with pytest.raises(EvalError):
        evaluate(tree, 0.0, np.array([0.0]))


def test_vectorized_components():
    func, trees = compile_components(["x1", "-x0 + t"], 2)
    xs = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(func(1.0, xs), [[2.0, 0.0], [4.0, -2.0]])
    np.testing.assert_array_equal(func(0.0, np.array([1.0, 2.0])), [2.0, -1.0])
    const, _ = compile_components(["3"], 1)
    assert const(0.0, np.zeros((4, 1))).shape == (4, 1)
    with pytest.raises(ValueError):
        compile_components(["x0"], 2)


leaf = st.one_of(
    st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(Num),
    st.just(Var("t")),
    st.integers(0, 2).map(lambda k: Var(f"x{k}", k)),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/"), children, children).map(lambda a: BinOp(*a)),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda a: Call(a[0], (a[1],))),
        st.tuples(children, children).map(lambda a: Call("pow", a)),
    )


trees = st.recursive(leaf, _extend, max_leaves=12)


@settings(max_examples=100)
@given(trees)
def test_print_parse_round_trip(tree):
    assert parse_field_expr(to_source(tree), 3) == tree
