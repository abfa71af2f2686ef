"""Expression language for coefficient functions.

Coefficients of the stochastic equations handled by this package are
functions of time ``t``, state ``x`` and a scalar parameter ``a``. They are
written in a small text language:

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' integer)?
    base   := number | 't' | 'x' | 'a' | func '(' expr ')'
            | '(' expr ')' | '-' base

where ``func`` is one of ``sin``, ``cos``, ``exp``, ``tanh`` and power
exponents are constant integers. The function set deliberately excludes
non-smooth primitives (absolute value, max, square root), so every parsed
expression is infinitely differentiable in ``x`` and ``a`` wherever its
divisions are defined, and its derivatives are locally Lipschitz.

Derivatives are exact and symbolic (:func:`differentiate`), simplified only
by constant folding and identity elimination; correctness is defined by
evaluation equivalence, not canonical form. Evaluation broadcasts over
numpy arrays, which the solvers rely on for per-path vectorisation.

Expressions are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Bin",
    "Power",
    "ParseError",
    "UnknownIdentifierError",
    "DomainError",
    "parse",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "evaluate",
    "differentiate",
    "to_source",
    "variables",
    "is_zero",
]

VARIABLES = ("t", "x", "a")
FUNCTIONS = ("sin", "cos", "exp", "tanh")


class ParseError(ValueError):
    """Malformed source text; carries the byte offset and what was expected."""

    def __init__(self, message: str, offset: int, expected: str):
        super().__init__(f"{message} at byte offset {offset}, expected {expected}")
        self.offset = offset
        self.expected = expected


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(
            f"unknown identifier {name!r}",
            offset,
            "one of 't', 'x', 'a', " + ", ".join(FUNCTIONS),
        )
        self.name = name


class DomainError(ArithmeticError):
    """A division hit a zero denominator; the expression is ill-posed there."""


@dataclass(frozen=True)
class Expr:
    """Base node of the abstract syntax tree."""

    def evaluate(self, t, x, a):
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def evaluate(self, t, x, a):
        return self.value

    def diff(self, var):
        return _ZERO


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def evaluate(self, t, x, a):
        if self.name == "t":
            return t
        if self.name == "x":
            return x
        return a

    def diff(self, var):
        return _ONE if self.name == var else _ZERO


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # 'neg', 'sin', 'cos', 'exp', 'tanh'
    arg: Expr

    def evaluate(self, t, x, a):
        v = self.arg.evaluate(t, x, a)
        if self.op == "neg":
            return -v
        if self.op == "sin":
            return np.sin(v)
        if self.op == "cos":
            return np.cos(v)
        if self.op == "exp":
            return np.exp(v)
        return np.tanh(v)

    def diff(self, var):
        u, du = self.arg, self.arg.diff(var)
        if self.op == "neg":
            return neg(du)
        if self.op == "sin":
            return mul(Unary("cos", u), du)
        if self.op == "cos":
            return neg(mul(Unary("sin", u), du))
        if self.op == "exp":
            return mul(Unary("exp", u), du)
        # d tanh = 1 - tanh^2
        return mul(sub(_ONE, power(Unary("tanh", u), 2)), du)


@dataclass(frozen=True)
class Bin(Expr):
    op: str  # '+', '-', '*', '/'
    left: Expr
    right: Expr

    def evaluate(self, t, x, a):
        lv = self.left.evaluate(t, x, a)
        rv = self.right.evaluate(t, x, a)
        if self.op == "+":
            return lv + rv
        if self.op == "-":
            return lv - rv
        if self.op == "*":
            return lv * rv
        if np.any(np.asarray(rv) == 0.0):
            raise DomainError(f"division by zero in {to_source(self)!r}")
        return lv / rv

    def diff(self, var):
        u, v = self.left, self.right
        du, dv = u.diff(var), v.diff(var)
        if self.op == "+":
            return add(du, dv)
        if self.op == "-":
            return sub(du, dv)
        if self.op == "*":
            return add(mul(du, v), mul(u, dv))
        return div(sub(mul(du, v), mul(u, dv)), power(v, 2))


@dataclass(frozen=True)
class Power(Expr):
    base: Expr
    exponent: int

    def evaluate(self, t, x, a):
        b = self.base.evaluate(t, x, a)
        if self.exponent < 0 and np.any(np.asarray(b) == 0.0):
            raise DomainError(f"zero base with negative exponent in {to_source(self)!r}")
        return b ** self.exponent

    def diff(self, var):
        n = self.exponent
        if n == 0:
            return _ZERO
        return mul(mul(Const(float(n)), power(self.base, n - 1)), self.base.diff(var))


_ZERO = Const(0.0)
_ONE = Const(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# Folding constructors: they apply constant folding and identity elimination
# (0*e -> 0, e+0 -> e, e^1 -> e and friends) and are what differentiation and
# programmatic expression building go through.


def add(l: Expr, r: Expr) -> Expr:
    if _is_const(l) and _is_const(r):
        return Const(l.value + r.value)
    if _is_const(l, 0.0):
        return r
    if _is_const(r, 0.0):
        return l
    return Bin("+", l, r)


def sub(l: Expr, r: Expr) -> Expr:
    if _is_const(l) and _is_const(r):
        return Const(l.value - r.value)
    if _is_const(r, 0.0):
        return l
    if _is_const(l, 0.0):
        return neg(r)
    return Bin("-", l, r)


def mul(l: Expr, r: Expr) -> Expr:
    if _is_const(l) and _is_const(r):
        return Const(l.value * r.value)
    if _is_const(l, 0.0) or _is_const(r, 0.0):
        return _ZERO
    if _is_const(l, 1.0):
        return r
    if _is_const(r, 1.0):
        return l
    return Bin("*", l, r)


def div(l: Expr, r: Expr) -> Expr:
    if _is_const(l) and _is_const(r) and r.value != 0.0:
        return Const(l.value / r.value)
    if _is_const(r, 1.0):
        return l
    return Bin("/", l, r)


def neg(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Unary) and e.op == "neg":
        return e.arg
    return Unary("neg", e)


def power(base: Expr, n: int) -> Expr:
    if n == 0:
        return _ONE
    if n == 1:
        return base
    if isinstance(base, Const) and not (base.value == 0.0 and n < 0):
        return Const(base.value ** n)
    return Power(base, n)


_TOKEN_RE = re.compile(
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)

_INT_RE = re.compile(r"\d+\Z")


def _byte_offset(source: str, pos: int) -> int:
    return len(source[:pos].encode("utf-8"))


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(
                f"unexpected character {source[pos]!r}",
                _byte_offset(source, pos),
                "a number, identifier or operator",
            )
        kind = m.lastgroup
        tokens.append((kind, m.group(), _byte_offset(source, pos)))
        pos = m.end()
    tokens.append(("eof", "", _byte_offset(source, n)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def accept_op(self, *ops: str):
        kind, text, _ = self.peek()
        if kind == "op" and text in ops:
            return self.advance()
        return None

    def fail(self, expected: str):
        kind, text, offset = self.peek()
        what = "end of input" if kind == "eof" else f"{text!r}"
        raise ParseError(f"unexpected {what}", offset, expected)

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "eof":
            self.fail("end of input or an operator")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            tok = self.accept_op("+", "-")
            if tok is None:
                return e
            e = Bin(tok[1], e, self.term())

    def term(self) -> Expr:
        e = self.factor()
        while True:
            tok = self.accept_op("*", "/")
            if tok is None:
                return e
            e = Bin(tok[1], e, self.factor())

    def factor(self) -> Expr:
        e = self.base()
        if self.accept_op("^"):
            sign = -1 if self.accept_op("-") else 1
            kind, text, offset = self.peek()
            if kind != "number" or not _INT_RE.match(text):
                self.fail("an integer exponent")
            self.advance()
            return Power(e, sign * int(text))
        return e

    def base(self) -> Expr:
        kind, text, offset = self.peek()
        if kind == "number":
            self.advance()
            return Const(float(text))
        if kind == "ident":
            self.advance()
            if text in VARIABLES:
                return Var(text)
            if text in FUNCTIONS:
                if not self.accept_op("("):
                    self.fail("'(' after function name")
                e = self.expr()
                if not self.accept_op(")"):
                    self.fail("')'")
                return Unary(text, e)
            raise UnknownIdentifierError(text, offset)
        if kind == "op" and text == "(":
            self.advance()
            e = self.expr()
            if not self.accept_op(")"):
                self.fail("')'")
            return e
        if kind == "op" and text == "-":
            self.advance()
            return Unary("neg", self.base())
        self.fail("a number, 't', 'x', 'a', a function, '(' or '-'")


def parse(source: str) -> Expr:
    """Parse source text into an expression tree."""
    return _Parser(source).parse()


def evaluate(e: Expr, t, x, a=0.0):
    """Evaluate ``e`` at ``(t, x, a)``; arguments may be scalars or arrays."""
    return e.evaluate(t, x, a)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``var`` ('x' or 'a').

    The result is simplified by constant folding and identity elimination
    (``0*e -> 0``, ``e+0 -> e``, ``e^1 -> e``), so derivatives of constants
    and of expressions free of ``var`` fold to the literal zero constant.
    """
    if var not in ("x", "a"):
        raise ValueError(f"derivative variable must be 'x' or 'a', got {var!r}")
    return e.diff(var)


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return 1 if e.op in "+-" else 2
    if isinstance(e, Unary) and e.op == "neg":
        return 3
    if isinstance(e, Const) and e.value < 0:
        return 3  # prints with a leading '-', same binding as neg
    if isinstance(e, Power):
        return 4
    return 5


def to_source(e: Expr) -> str:
    """Print ``e`` in the grammar accepted by :func:`parse`.

    Reparsing the output yields an evaluation-equivalent expression.
    """
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_source(e.arg)
            if _prec(e.arg) <= 4:  # anything but an atom needs parens after '-'
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({to_source(e.arg)})"
    if isinstance(e, Power):
        base = to_source(e.base)
        if _prec(e.base) < 5:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    assert isinstance(e, Bin)
    p = _prec(e)
    left = to_source(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = to_source(e.right)
    # same-precedence right children keep their parentheses: reparsing is
    # left-associative and float arithmetic is not associative
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def variables(e: Expr) -> frozenset[str]:
    """Set of variable names appearing in ``e``."""
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Unary):
        return variables(e.arg)
    if isinstance(e, Bin):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Power):
        return variables(e.base)
    return frozenset()


def is_zero(e: Expr) -> bool:
    """True when ``e`` is the folded zero constant."""
    return isinstance(e, Const) and e.value == 0.0
