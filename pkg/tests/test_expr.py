import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from hamforge.expr import (DivisionByZeroError, ExprError, ExprSyntaxError,
                           RationalExpr, SymbolKind, UnknownIdentifierError,
                           Workspace, canonical, parse, reduce_sign_powers,
                           to_string)

from props import check_parse_round_trip


@pytest.fixture
def ws():
    w = Workspace()
    for name in ("x", "y", "z"):
        w.declare(name, SymbolKind.PARAMETER)
    return w


def test_parse_basic_arithmetic(ws):
    assert parse("2 + 3*4", ws) == parse("14", ws)
    assert parse("(x + y)^2", ws) == parse("x^2 + 2*x*y + y^2", ws)
    assert parse("x - x", ws) == parse("0", ws)


def test_parse_cancellation(ws):
    # canonical form reduces to lowest terms
    assert parse("(x^2 - 1)/(x - 1)", ws) == parse("x + 1", ws)
    assert parse("(x*y + y)/(y)", ws) == parse("x + 1", ws)


def test_power_right_associative(ws):
    assert parse("x^2^3", ws) == parse("x^8", ws)


def test_negative_exponent(ws):
    e = parse("x^-2", ws)
    assert e == parse("1/(x^2)", ws)


def test_unary_signs(ws):
    assert parse("--x", ws) == parse("x", ws)
    assert parse("-x + x", ws) == parse("0", ws)
    assert parse("3 - -2", ws) == parse("5", ws)


def test_unknown_identifier_rejected(ws):
    with pytest.raises(UnknownIdentifierError):
        parse("x + q", ws)


def test_syntax_error_carries_position(ws):
    with pytest.raises(ExprSyntaxError) as err:
        parse("x + ", ws)
    assert err.value.pos == 4


def test_unbalanced_paren(ws):
    with pytest.raises(ExprSyntaxError):
        parse("(x + y", ws)


def test_division_by_syntactic_zero(ws):
    with pytest.raises(DivisionByZeroError):
        parse("1/(x - x)", ws)
    with pytest.raises(DivisionByZeroError):
        parse("(y - y)^-1", ws)


def test_non_integer_exponent_rejected(ws):
    with pytest.raises(ExprSyntaxError):
        parse("x^y", ws)


def test_rational_expr_arithmetic(ws):
    a = parse("x/(y + 1)", ws)
    b = parse("y/(y + 1)", ws)
    assert a + b == parse("(x + y)/(y + 1)", ws)
    assert a * b == parse("x*y/(y^2 + 2*y + 1)", ws)
    assert (a - a).is_zero
    with pytest.raises(DivisionByZeroError):
        a / (b - b)


def test_rational_expr_factor(ws):
    e = parse("2*x^2 - 2*y^2", ws)
    factors = e.factor()
    assert [(str(f), k) for f, k in factors] == [
        ("2", 1), ("x - y", 1), ("x + y", 1)]
    # the product of the factors reconstructs the expression
    prod = parse("1", ws)
    for f, k in factors:
        for _ in range(k):
            prod = prod * f
    assert prod == e


def test_reduce_sign_powers(ws):
    lam = sp.Symbol("lam")
    e = lam ** 2 * sp.Symbol("x") + lam ** 3
    r = reduce_sign_powers(e, [lam])
    assert sp.expand(r - (sp.Symbol("x") + lam)) == 0


def test_workspace_kind_conflict():
    w = Workspace()
    w.declare("a", SymbolKind.PARAMETER)
    with pytest.raises(ExprError):
        w.declare("a", SymbolKind.FIELD)
    # re-declaring with the same kind is allowed
    w.declare("a", SymbolKind.PARAMETER)


def test_workspace_invalid_identifier():
    w = Workspace()
    with pytest.raises(ExprError):
        w.declare("1bad", SymbolKind.PARAMETER)


def test_to_string_uses_grammar(ws):
    e = parse("x^2/(y + 3)", ws)
    s = to_string(e)
    assert "**" not in s
    assert parse(s, ws) == e


def test_canonical_rejects_undefined():
    with pytest.raises(DivisionByZeroError):
        canonical(sp.zoo)


def test_parse_round_trip_property():
    assert check_parse_round_trip(100) == []


@settings(max_examples=100, deadline=None)
@given(st.integers(-10 ** 9, 10 ** 9), st.integers(-10 ** 9, 10 ** 9),
       st.integers(1, 10 ** 6))
def test_rational_arithmetic_exact(p, q, r):
    # exact rational arithmetic survives the parser and printer
    w = Workspace()
    e = parse(f"({p}) / {r} + ({q}) / {r}", w)
    assert e == RationalExpr(sp.Rational(p + q, r))
