"""Expression parsing, printing and second-order forward-mode derivatives."""

import math

import numpy as np
import numpy.testing as npt
import pytest

from app.backend.errors import (
    ExprDomainError,
    ExprSyntaxError,
    NonConstantExponentError,
    UnknownFunctionError,
    UnknownVariableError,
)
from app.backend.expr import (
    BinOp,
    Call,
    Const,
    Neg,
    Pow,
    Var,
    eval_gradient,
    eval_jet2,
    eval_value,
    free_variables,
    parse_expr,
    to_source,
)


def value(src, point=(), names=()):
    return eval_value(parse_expr(src), list(point), names)


@pytest.mark.parametrize(
    "src, expected",
    [
        ("1 + 2*3^2", 19.0),
        ("8/4/2", 1.0),
        ("2^3^2", 64.0),
        ("-2^2", -4.0),
        ("2^-1", 0.5),
        ("-(1 - 3)", 2.0),
        ("+3", 3.0),
        ("pi", math.pi),
        ("e", math.e),
        ("1e-3 * 1000", 1.0),
        (".5 + 0.5", 1.0),
    ],
)
def test_precedence_and_literals(src, expected):
    assert value(src) == pytest.approx(expected, rel=1e-15)


def test_negative_literal_folds_to_constant():
    assert parse_expr("-2") == Const(-2.0)
    assert parse_expr("-x") == Neg(Var("x"))
    assert parse_expr("x^2") == Pow(Var("x"), 2.0)


def test_syntax_error_offsets():
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("1 +")
    assert err.value.offset == 3
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("2 $ 3")
    assert err.value.offset == 2
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("sin(x")
    assert err.value.offset == 5
    with pytest.raises(ExprSyntaxError):
        parse_expr("(1 + 2) 3")


def test_unknown_function_and_nonconstant_exponent():
    with pytest.raises(UnknownFunctionError) as err:
        parse_expr("1 + foo(x)")
    assert err.value.name == "foo"
    assert err.value.offset == 4
    with pytest.raises(NonConstantExponentError) as err:
        parse_expr("x^y")
    assert err.value.offset == 1


def test_jet_of_polynomial_and_trig():
    jet = eval_jet2(parse_expr("x^2*y + sin(x)"), [1.0, 2.0], ("x", "y"))
    assert jet.value == pytest.approx(2.0 + math.sin(1.0), rel=1e-15)
    npt.assert_allclose(jet.grad, [4.0 + math.cos(1.0), 1.0], rtol=1e-15)
    npt.assert_allclose(jet.hess, [[4.0 - math.sin(1.0), 2.0], [2.0, 0.0]], rtol=1e-15, atol=1e-15)
    assert jet.variables == ("x", "y")


def test_hessian_is_exactly_symmetric():
    jet = eval_jet2(parse_expr("exp(x*y) / (1 + z^2) + tanh(x - z)*cosh(y)"), [0.3, -0.7, 1.1], ("x", "y", "z"))
    assert np.array_equal(jet.hess, jet.hess.T)


def test_fractional_power_derivatives():
    jet = eval_jet2(parse_expr("x^1.5"), [4.0], ("x",))
    assert jet.value == pytest.approx(8.0)
    assert jet.grad[0] == pytest.approx(3.0)
    assert jet.hess[0, 0] == pytest.approx(0.375)


def test_quotient_and_log_derivatives():
    jet = eval_jet2(parse_expr("ln(x)/x"), [2.0], ("x",))
    assert jet.grad[0] == pytest.approx((1.0 - math.log(2.0)) / 4.0, rel=1e-14)
    assert jet.hess[0, 0] == pytest.approx((2.0 * math.log(2.0) - 3.0) / 8.0, rel=1e-14)


def test_gradient_only_matches_full_jet():
    e = parse_expr("sqrt(x^2 + y^2)")
    v, g = eval_gradient(e, [3.0, 4.0], ("x", "y"))
    assert v == pytest.approx(5.0)
    npt.assert_allclose(g, [0.6, 0.8], rtol=1e-15)


@pytest.mark.parametrize("src, point", [("ln(x)", 0.0), ("sqrt(x)", 0.0), ("1/x", 0.0), ("abs(x)", 0.0), ("x^0.5", -1.0)])
def test_domain_errors(src, point):
    with pytest.raises(ExprDomainError):
        eval_jet2(parse_expr(src), [point], ("x",))


def test_domain_error_names_subexpression():
    with pytest.raises(ExprDomainError) as err:
        eval_jet2(parse_expr("1 + ln(x - 1)"), [1.0], ("x",))
    assert "ln" in err.value.subexpr


def test_unknown_variable():
    with pytest.raises(UnknownVariableError) as err:
        eval_jet2(parse_expr("x + z"), [1.0], ("x",))
    assert err.value.name == "z"


@pytest.mark.parametrize(
    "src",
    ["x^2*y + sin(x)", "-x - -2", "exp(-(x/2))", "1/(1 + u*v)", "2^-1 * x^-2", "sin(psi)*sin(theta)", "-(2^2)"],
)
def test_printed_source_reparses_identically(src):
    e = parse_expr(src)
    assert parse_expr(to_source(e)) == e


def test_free_variables():
    assert free_variables(parse_expr("x*sin(y) + pi + e")) == frozenset({"x", "y"})
    assert free_variables(parse_expr("2^3")) == frozenset()


def test_overflowing_literal_is_rejected():
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("x + 1e999")
    assert err.value.offset == 4
    with pytest.raises(ExprSyntaxError):
        parse_expr("2^1e400")


NAMES = ("x", "y", "z")


def random_expr(rng, depth):
    """Smooth, everywhere-defined AST; denominators are 2 + (...)^2."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return Var(NAMES[rng.integers(len(NAMES))])
        return Const(round(float(rng.uniform(-2.0, 2.0)), 3))
    kind = rng.integers(5)
    if kind == 0:
        op = ("+", "-", "*")[rng.integers(3)]
        return BinOp(op, random_expr(rng, depth - 1), random_expr(rng, depth - 1))
    if kind == 1:
        den = BinOp("+", Const(2.0), Pow(random_expr(rng, depth - 1), 2.0))
        return BinOp("/", random_expr(rng, depth - 1), den)
    if kind == 2:
        return Call(("sin", "cos", "tanh")[rng.integers(3)], random_expr(rng, depth - 1))
    if kind == 3:
        return Pow(random_expr(rng, depth - 1), 2.0)
    return Neg(random_expr(rng, depth - 1))


def central_gradient(e, p, h=1e-5):
    out = np.zeros(len(p))
    for k in range(len(p)):
        step = np.zeros(len(p))
        step[k] = h
        out[k] = (eval_value(e, p + step, NAMES) - eval_value(e, p - step, NAMES)) / (2 * h)
    return out


def central_hessian(e, p, h=1e-5):
    cols = []
    for k in range(len(p)):
        step = np.zeros(len(p))
        step[k] = h
        cols.append((eval_gradient(e, p + step, NAMES)[1] - eval_gradient(e, p - step, NAMES)[1]) / (2 * h))
    return np.array(cols)


@pytest.mark.parametrize("seed", range(12))
def test_jet_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    e = random_expr(rng, 3)
    p = rng.uniform(-1.0, 1.0, size=3)
    jet = eval_jet2(e, p, NAMES)
    scale = max(1.0, float(np.max(np.abs(jet.hess))), abs(jet.value))
    npt.assert_allclose(jet.grad, central_gradient(e, p), rtol=1e-6, atol=1e-6 * scale)
    npt.assert_allclose(jet.hess, central_hessian(e, p), rtol=1e-6, atol=1e-6 * scale)


@pytest.mark.parametrize("seed", range(8))
def test_jet_is_linear(seed):
    rng = np.random.default_rng(100 + seed)
    e1, e2 = random_expr(rng, 3), random_expr(rng, 3)
    a, b = float(rng.normal()), float(rng.normal())
    combo = BinOp("+", BinOp("*", Const(a), e1), BinOp("*", Const(b), e2))
    p = rng.uniform(-1.0, 1.0, size=3)
    j1, j2, jc = (eval_jet2(x, p, NAMES) for x in (e1, e2, combo))
    scale = max(1.0, abs(j1.value), abs(j2.value), float(np.max(np.abs(j1.hess))), float(np.max(np.abs(j2.hess))))
    assert jc.value == pytest.approx(a * j1.value + b * j2.value, abs=1e-12 * scale)
    npt.assert_allclose(jc.grad, a * j1.grad + b * j2.grad, rtol=1e-12, atol=1e-12 * scale)
    npt.assert_allclose(jc.hess, a * j1.hess + b * j2.hess, rtol=1e-12, atol=1e-12 * scale)
