"""Closed-form scalar expressions with exact second-order forward-mode derivatives.

Grammar (precedence high to low, left-associative within a level)::

    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := ('-' | '+') unary | power
    power    := atom ('^' exponent)*
    exponent := ('-' | '+')* atom              # must evaluate to a constant
    atom     := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

    NUMBER   := decimal or scientific literal, e.g. 2, 0.5, .5, 1e-3
    IDENT    := [a-zA-Z_][a-zA-Z0-9_]*

Functions: sin cos tan exp ln sqrt sinh cosh tanh abs. ``pi`` and ``e`` are
reserved constants. A general power f^g is written exp(g*ln(f)).
"""

import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.backend.errors import (
    ExprDomainError,
    ExprSyntaxError,
    NonConstantExponentError,
    UnknownFunctionError,
    UnknownVariableError,
)

logger = logging.getLogger(__name__)

FUNCTIONS: Tuple[str, ...] = ("sin", "cos", "tan", "exp", "ln", "sqrt", "sinh", "cosh", "tanh", "abs")
CONSTANTS: Dict[str, float] = {"pi": math.pi, "e": math.e}
ABS_KINK = 1e-12


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float


Expr = Union[Const, Var, Neg, Call, BinOp, Pow]


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and Hessian of an expression w.r.t. ``variables``."""

    value: float
    grad: np.ndarray
    hess: np.ndarray
    variables: Tuple[str, ...]


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _byte_offset(src: str, index: int) -> int:
    return len(src[:index].encode("utf-8"))


def _tokenize(src: str) -> List[_Token]:
    tokens: List[_Token] = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", _byte_offset(src, pos))
        kind = m.lastgroup or ""
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), _byte_offset(src, pos)))
        pos = m.end()
    tokens.append(_Token("eof", "", _byte_offset(src, len(src))))
    return tokens


class _Parser:
    def __init__(self, src: str) -> None:
        self.tokens = _tokenize(src)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text in ops

    def expect(self, text: str) -> None:
        tok = self.peek()
        if not (tok.kind == "op" and tok.text == text):
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ExprSyntaxError(f"expected '{text}', found {found}", tok.offset)
        self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.at_op("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.at_op("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.at_op("-"):
            self.advance()
            return _negate(self.unary())
        if self.at_op("+"):
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        node = self.atom()
        while self.at_op("^"):
            offset = self.advance().offset
            exponent = self.exponent()
            if free_variables(exponent):
                raise NonConstantExponentError(offset)
            node = Pow(node, _fold_constant(exponent))
        return node

    def exponent(self) -> Expr:
        if self.at_op("-"):
            self.advance()
            return _negate(self.exponent())
        if self.at_op("+"):
            self.advance()
            return self.exponent()
        return self.atom()

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            value = float(tok.text)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"literal '{tok.text}' is out of range", tok.offset)
            self.advance()
            return Const(value)
        if tok.kind == "ident":
            self.advance()
            if self.at_op("("):
                if tok.text not in FUNCTIONS:
                    raise UnknownFunctionError(tok.text, tok.offset)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in CONSTANTS:
                return Const(CONSTANTS[tok.text])
            return Var(tok.text)
        if self.at_op("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ExprSyntaxError(f"unexpected {found}", tok.offset)


def _negate(node: Expr) -> Expr:
    # "-2" is a literal, "-x" and "-(2^2)" stay as negations
    if isinstance(node, Const):
        return Const(-node.value)
    return Neg(node)


def _fold_constant(node: Expr) -> float:
    return float(eval_jet2(node, np.zeros(0), ()).value)


def parse_expr(src: str) -> Expr:
    """Parse ``src`` into an AST (see module docstring for the grammar)."""
    return _Parser(src).parse()


def as_expr(value: Union[str, float, int, Expr]) -> Expr:
    if isinstance(value, str):
        return parse_expr(value)
    if isinstance(value, (int, float)):
        return Const(float(value))
    return value


# ---------------------------------------------------------------------------
# Printing, inspection and builders
# ---------------------------------------------------------------------------

def _const_source(value: float) -> str:
    text = repr(float(value))
    return f"({text})" if text.startswith("-") else text


def to_source(node: Expr) -> str:
    """Fully parenthesized source; ``parse_expr(to_source(e)) == e`` for parsed ASTs."""
    if isinstance(node, Const):
        return _const_source(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.arg)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Pow):
        return f"({to_source(node.base)} ^ {_const_source(node.exponent)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Expr) -> FrozenSet[str]:
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, Const):
        return frozenset()
    if isinstance(node, (Neg, Call)):
        return free_variables(node.arg)
    if isinstance(node, Pow):
        return free_variables(node.base)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    raise TypeError(f"not an expression node: {node!r}")


def is_constant(node: Expr) -> bool:
    return not free_variables(node)


ZERO = Const(0.0)
ONE = Const(1.0)


def const(value: float) -> Const:
    return Const(float(value))


def add(*terms: Expr) -> Expr:
    node = terms[0]
    for term in terms[1:]:
        node = BinOp("+", node, term)
    return node


def mul(*factors: Expr) -> Expr:
    node = factors[0]
    for factor in factors[1:]:
        node = BinOp("*", node, factor)
    return node


def div(num: Expr, den: Expr) -> Expr:
    return BinOp("/", num, den)


def power(base: Expr, exponent: float) -> Expr:
    return Pow(base, float(exponent))


def call(func: str, arg: Expr) -> Expr:
    if func not in FUNCTIONS:
        raise UnknownFunctionError(func, 0)
    return Call(func, arg)


# ---------------------------------------------------------------------------
# Second-order forward mode
# ---------------------------------------------------------------------------

_Triple = Tuple[float, np.ndarray, Optional[np.ndarray]]


class _JetEvaluator:
    """Propagates truncated jets (value, gradient, Hessian) bottom-up through the AST."""

    def __init__(self, variables: Sequence[str], point: np.ndarray, order: int) -> None:
        self.n = len(variables)
        self.order = order
        self.index = {name: i for i, name in enumerate(variables)}
        self.point = point

    def zeros(self, value: float) -> _Triple:
        hess = np.zeros((self.n, self.n)) if self.order > 1 else None
        return value, np.zeros(self.n), hess

    def chain(self, node: Expr, a: _Triple, d0: float, d1: float, d2: float) -> _Triple:
        _v, g, h = a
        hess = None
        if h is not None:
            hess = d1 * h + d2 * np.outer(g, g)
        return _finite(node, d0), d1 * g, hess

    def eval(self, node: Expr) -> _Triple:
        if isinstance(node, Const):
            return self.zeros(node.value)
        if isinstance(node, Var):
            i = self.index[node.name]
            value, grad, hess = self.zeros(float(self.point[i]))
            grad[i] = 1.0
            return value, grad, hess
        if isinstance(node, Neg):
            v, g, h = self.eval(node.arg)
            return -v, -g, None if h is None else -h
        if isinstance(node, Call):
            return self.call(node, self.eval(node.arg))
        if isinstance(node, BinOp):
            return self.binop(node, self.eval(node.left), self.eval(node.right))
        if isinstance(node, Pow):
            return self.power(node, self.eval(node.base))
        raise TypeError(f"not an expression node: {node!r}")

    def binop(self, node: BinOp, a: _Triple, b: _Triple) -> _Triple:
        av, ag, ah = a
        bv, bg, bh = b
        if node.op == "+":
            return av + bv, ag + bg, None if ah is None else ah + bh
        if node.op == "-":
            return av - bv, ag - bg, None if ah is None else ah - bh
        if node.op == "/":
            if bv == 0.0:
                raise ExprDomainError(to_source(node), "division by zero")
            b = self.chain(node, b, 1.0 / bv, -1.0 / (bv * bv), 2.0 / (bv * bv * bv))
            bv, bg, bh = b
        elif node.op != "*":
            raise TypeError(f"unknown operator {node.op!r}")
        hess = None
        if ah is not None:
            cross = np.outer(ag, bg)
            hess = av * bh + bv * ah + cross + cross.T
        return _finite(node, av * bv), av * bg + bv * ag, hess

    def call(self, node: Call, a: _Triple) -> _Triple:
        x = a[0]
        name = node.func
        try:
            if name == "sin":
                s, c = math.sin(x), math.cos(x)
                return self.chain(node, a, s, c, -s)
            if name == "cos":
                s, c = math.sin(x), math.cos(x)
                return self.chain(node, a, c, -s, -c)
            if name == "tan":
                if abs(math.cos(x)) < 1e-15:
                    raise ExprDomainError(to_source(node), "tan at a pole")
                t = math.tan(x)
                sec2 = 1.0 + t * t
                return self.chain(node, a, t, sec2, 2.0 * t * sec2)
            if name == "exp":
                ex = math.exp(x)
                return self.chain(node, a, ex, ex, ex)
            if name == "ln":
                if x <= 0.0:
                    raise ExprDomainError(to_source(node), "ln of non-positive value")
                return self.chain(node, a, math.log(x), 1.0 / x, -1.0 / (x * x))
            if name == "sqrt":
                if x < 0.0:
                    raise ExprDomainError(to_source(node), "sqrt of negative value")
                if x == 0.0:
                    raise ExprDomainError(to_source(node), "sqrt is not differentiable at 0")
                r = math.sqrt(x)
                return self.chain(node, a, r, 0.5 / r, -0.25 / (r * x))
            if name == "sinh":
                sh, ch = math.sinh(x), math.cosh(x)
                return self.chain(node, a, sh, ch, sh)
            if name == "cosh":
                sh, ch = math.sinh(x), math.cosh(x)
                return self.chain(node, a, ch, sh, ch)
            if name == "tanh":
                t = math.tanh(x)
                d1 = 1.0 - t * t
                return self.chain(node, a, t, d1, -2.0 * t * d1)
            if name == "abs":
                if abs(x) < ABS_KINK:
                    raise ExprDomainError(to_source(node), "abs is not differentiable at 0")
                sign = 1.0 if x > 0 else -1.0
                return self.chain(node, a, abs(x), sign, 0.0)
        except OverflowError:
            raise ExprDomainError(to_source(node), "overflow") from None
        raise ExprDomainError(to_source(node), f"unknown function {name}")

    def power(self, node: Pow, a: _Triple) -> _Triple:
        x = a[0]
        c = node.exponent
        if c == 0.0:
            return self.zeros(1.0)
        try:
            if float(c).is_integer():
                k = int(c)
                if k < 0 and x == 0.0:
                    raise ExprDomainError(to_source(node), "division by zero")
                d1 = k * x ** (k - 1)
                d2 = k * (k - 1) * x ** (k - 2) if k not in (0, 1) else 0.0
                return self.chain(node, a, x ** k, d1, d2)
            if x < 0.0:
                raise ExprDomainError(to_source(node), "fractional power of negative value")
            if x == 0.0:
                if c > 2.0:
                    return self.chain(node, a, 0.0, 0.0, 0.0)
                raise ExprDomainError(to_source(node), "fractional power is not differentiable at 0")
            return self.chain(node, a, x ** c, c * x ** (c - 1.0), c * (c - 1.0) * x ** (c - 2.0))
        except (OverflowError, ZeroDivisionError):
            raise ExprDomainError(to_source(node), "overflow") from None


def _finite(node: Expr, value: float) -> float:
    if not math.isfinite(value):
        raise ExprDomainError(to_source(node), "non-finite value")
    return value


def _check_inputs(e: Expr, point: Iterable[float], variables: Sequence[str]) -> np.ndarray:
    declared = set(variables)
    for name in sorted(free_variables(e)):
        if name not in declared:
            raise UnknownVariableError(name)
    p = np.asarray(point, dtype=float).reshape(-1)
    if p.shape[0] != len(variables):
        raise ValueError(f"point has {p.shape[0]} entries for {len(variables)} variables")
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    return p


def eval_jet2(e: Expr, point: Iterable[float], variables: Sequence[str]) -> Jet2:
    """Value, gradient and (exactly symmetric) Hessian of ``e`` at ``point``."""
    p = _check_inputs(e, point, variables)
    value, grad, hess = _JetEvaluator(variables, p, order=2).eval(e)
    assert hess is not None
    return Jet2(float(value), grad, 0.5 * (hess + hess.T), tuple(variables))


def eval_gradient(e: Expr, point: Iterable[float], variables: Sequence[str]) -> Tuple[float, np.ndarray]:
    """First-order jet only; used where Hessians are never needed (Christoffel symbols)."""
    p = _check_inputs(e, point, variables)
    value, grad, _ = _JetEvaluator(variables, p, order=1).eval(e)
    return float(value), grad


def eval_value(e: Expr, point: Iterable[float], variables: Sequence[str]) -> float:
    return eval_gradient(e, point, variables)[0]
