import math
import pickle

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shadow_ode.errors import (
    ArityMismatch,
    DimensionMismatch,
    DomainError,
    ExpressionSyntaxError,
    UnknownIdentifier,
)
from shadow_ode.expr import evaluate, parse, parse_expression, to_text, zero_field


def test_precedence_and_associativity():
    e = parse("2 + 3*4^2^0.5 - -1", 1)
    assert evaluate(e, 0.0, (0.0,))[0] == pytest.approx(2 + 3 * 4 ** (2**0.5) + 1)
    # unary minus binds looser than ^
    assert parse("-x^2", 1).evaluate(3.0, (0.0,))[0] == -9.0
    assert parse("2^3^2", 1).evaluate(0.0, (0.0,))[0] == 512.0
    assert parse("8/4/2", 1).evaluate(0.0, (0.0,))[0] == 1.0


def test_functions_and_constants():
    f = parse("sin(pi/2) + cos(0) + exp(0) + log(e) + sqrt(4) + abs(-3) + sign(-2)", 1)
    assert f.evaluate(0.0, (0.0,))[0] == pytest.approx(1 + 1 + 1 + 1 + 2 + 3 - 1)
    g = parse("pow(2, 10) + min(x, y) + max(x, y)", 1)
    assert g.evaluate(1.0, (5.0,))[0] == 1024 + 1 + 5


def test_aliases_for_scalar_problems():
    a = parse("t + y", 1).evaluate(2.0, (3.0,))
    b = parse("x + y0", 1).evaluate(2.0, (3.0,))
    assert a == b == (5.0,)


def test_system_components():
    f = parse("y1; -y0", 2)
    assert f.evaluate(0.0, (1.0, 2.0)) == (2.0, -1.0)
    assert f.evaluate_array(np.zeros(3), [np.ones(3), np.zeros(3)]).shape == (2, 3)


def test_syntax_error_offset():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("y + * 2", 1)
    assert info.value.offset == 4


def test_unknown_identifier_and_arity():
    with pytest.raises(UnknownIdentifier) as info:
        parse("y + z", 1)
    assert info.value.name == "z"
    with pytest.raises(ArityMismatch):
        parse("sin(x, y)", 1)
    with pytest.raises(ArityMismatch):
        parse("pow(x)", 1)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        parse("y; x", 1)
    with pytest.raises(UnknownIdentifier):
        parse("y2", 2)


def test_domain_and_overflow():
    f = parse("log(y)", 1)
    with pytest.raises(DomainError):
        f.evaluate(0.0, (-1.0,))
    with pytest.raises(DomainError) as info:
        f.evaluate_array(np.zeros(4), [np.array([1.0, 2.0, -1.0, 3.0])])
    assert info.value.index == 2
    assert parse("exp(y)", 1).evaluate(0.0, (1000.0,))[0] == math.inf


def test_zero_field_and_pickle():
    z = zero_field(3)
    assert z.evaluate(1.0, (1.0, 2.0, 3.0)) == (0.0, 0.0, 0.0)
    f = parse("y*y", 1)
    f.evaluate(0.0, (2.0,))
    g = pickle.loads(pickle.dumps(f))
    assert g.evaluate(0.0, (2.0,)) == (4.0,)


# -- properties ---------------------------------------------------------------

_leaf = st.one_of(
    st.sampled_from(["x", "y", "pi", "e"]),
    st.integers(0, 9).map(str),
    st.floats(0.0, 10.0, allow_nan=False).map(lambda v: repr(round(v, 3))),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*/"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        children.map(lambda c: f"-{c}"),
        st.tuples(st.sampled_from(["sin", "cos", "abs", "exp"]), children).map(lambda t: f"{t[0]}({t[1]})"),
        st.tuples(children, children).map(lambda t: f"max({t[0]}, {t[1]})"),
    )


expressions = st.recursive(_leaf, _combine, max_leaves=12)
points = st.floats(-3, 3, allow_nan=False)


def _value(text, x, y):
    try:
        return parse(text, 1).evaluate(x, (y,))[0]
    except DomainError:
        return "domain"


@given(expressions, points, points)
def test_print_parse_roundtrip(text, x, y):
    e = parse_expression(text, ("x", "y"))
    again = parse_expression(to_text(e.root), ("x", "y"))
    assert again.root == e.root
    a, b = _value(text, x, y), _value(to_text(e.root), x, y)
    assert a == b or (a != a and b != b)


@given(expressions, points, points)
def test_referential_transparency(text, x, y):
    a, b = _value(text, x, y), _value(text, x, y)
    assert a == b or (a != a and b != b)


@given(expressions, st.lists(points, min_size=1, max_size=8), points)
def test_array_matches_scalar(text, xs, y):
    f = parse(text, 1)
    try:
        arr = f.evaluate_array(np.array(xs), [np.full(len(xs), y)])[0]
    except DomainError as err:
        with pytest.raises(DomainError):
            f.evaluate(xs[err.index], (y,))
        return
    for x, v in zip(xs, arr):
        s = f.evaluate(x, (y,))[0]
        if math.isfinite(s) and math.isfinite(v):
            assert v == pytest.approx(s, rel=1e-12, abs=1e-300)
