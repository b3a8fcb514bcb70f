"""A small expression language over the variables ``x`` and ``y``.

Coefficients, forcing terms and boundary data are supplied as strings such as
``"1 + 0.25*abs(x)^0.5"``.  They are parsed into an immutable AST that can be
evaluated (on scalars or numpy arrays) and differentiated exactly.

Grammar, lowest to highest precedence::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^-1`` is ``2^(-1)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvalError, ExprSyntaxError, NonDifferentiable, UnknownIdentifier

VARIABLES = ("x", "y")
FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "abs": 1, "min": None, "max": None}
_NONSMOOTH = frozenset({"abs", "min", "max"})

ArrayLike = Union[float, np.ndarray]


class Expr:
    """Base node.  Nodes are frozen dataclasses and therefore hashable."""

    def __call__(self, x: ArrayLike = 0.0, y: ArrayLike = 0.0) -> ArrayLike:
        return evaluate(self, (x, y))

    def diff(self, var: str) -> Expr:
        return differentiate(self, var)

    def variables(self) -> frozenset[str]:
        raise NotImplementedError

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def variables(self):
        return frozenset()


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def variables(self):
        return frozenset({self.name})


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def variables(self):
        return self.arg.variables()


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple[Expr, ...]

    def variables(self):
        out = frozenset()
        for a in self.args:
            out |= a.variables()
        return out


# --------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _tokenize(self, text):
        tokens = []
        i = 0
        while i < len(text):
            m = _TOKEN_RE.match(text, i)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {text[i]!r}", _byte_offset(text, i))
            kind = m.lastgroup
            if kind != "ws":
                tokens.append((kind, m.group(), i))
            i = m.end()
        tokens.append(("end", "", len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, _byte_offset(self.text, tok[2]))

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] == "end":
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {value!r}, found {what}")
        return self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            operand = self.unary()
            # negated literals are stored as negative constants
            return Const(-operand.value) if isinstance(operand, Const) else Neg(operand)
        if tok[0] == "op" and tok[1] == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        tok = self.advance()
        kind, value, _ = tok
        if kind == "num":
            return Const(float(value))
        if kind == "name":
            if value in VARIABLES:
                return Var(value)
            if value not in FUNCTIONS:
                raise UnknownIdentifier(value, _byte_offset(self.text, tok[2]))
            self.expect("(")
            args = [self.expr()]
            while self.peek()[1] == "," and self.peek()[0] == "op":
                self.advance()
                args.append(self.expr())
            self.expect(")")
            arity = FUNCTIONS[value]
            if arity is not None and len(args) != arity:
                raise self.error(f"{value} takes {arity} argument(s), got {len(args)}", tok)
            if arity is None and len(args) < 2:
                raise self.error(f"{value} takes at least 2 arguments", tok)
            return Call(value, tuple(args))
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(value)
        raise self.error(f"unexpected {what}", tok)


def parse(text: str | Expr) -> Expr:
    """Parse ``text`` into an :class:`Expr`.  Expressions pass through unchanged."""
    if isinstance(text, Expr):
        return text
    if isinstance(text, (int, float)):
        return Const(float(text))
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# evaluation


def _first_bad(mask, x, y):
    idx = np.argwhere(np.atleast_1d(mask))[0]
    xs = np.broadcast_to(np.atleast_1d(x), np.atleast_1d(mask).shape)
    ys = np.broadcast_to(np.atleast_1d(y), np.atleast_1d(mask).shape)
    return (xs[tuple(idx)], ys[tuple(idx)])


def _eval(e: Expr, x, y):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return x if e.name == "x" else y
    if isinstance(e, Neg):
        return -_eval(e.arg, x, y)
    if isinstance(e, BinOp):
        a = _eval(e.left, x, y)
        b = _eval(e.right, x, y)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            zero = np.asarray(b) == 0
            if np.any(zero):
                raise EvalError("division by zero", _first_bad(zero, x, y))
            return a / b
        return _pow(a, b, x, y)
    if isinstance(e, Call):
        vals = [_eval(a, x, y) for a in e.args]
        if e.func == "sin":
            return np.sin(vals[0])
        if e.func == "cos":
            return np.cos(vals[0])
        if e.func == "exp":
            return np.exp(vals[0])
        if e.func == "abs":
            return np.abs(vals[0])
        fold = np.minimum if e.func == "min" else np.maximum
        out = vals[0]
        for v in vals[1:]:
            out = fold(out, v)
        return out
    raise TypeError(f"not an expression node: {e!r}")


def _pow(a, b, x, y):
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    integral = b_arr == np.round(b_arr)
    bad = (a_arr == 0) & (b_arr < 0)
    if np.any(bad):
        raise EvalError("zero raised to a negative power", _first_bad(bad, x, y))
    bad = (a_arr < 0) & ~integral
    if np.any(bad):
        raise EvalError("negative base with non-integer exponent", _first_bad(bad, x, y))
    return np.power(a_arr, b_arr)


def evaluate(e: Expr, p) -> ArrayLike:
    """Evaluate ``e`` at the point ``p = (x, y)``; coordinates may be arrays.

    A 1D point may be given as a bare number or a 1-tuple.  Scalar input gives a
    Python float; array input gives an array broadcast to the coordinate shape.
    """
    if np.ndim(p) == 0:
        x, y = p, 0.0
    else:
        x = p[0]
        y = p[1] if len(p) > 1 else 0.0
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    with np.errstate(all="ignore"):
        val = _eval(e, np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    val = np.broadcast_to(np.asarray(val, dtype=float), np.broadcast(np.asarray(x), np.asarray(y)).shape)
    if not np.all(np.isfinite(val)):
        bad = ~np.isfinite(val)
        raise EvalError("non-finite value", _first_bad(bad, x, y))
    return float(val) if scalar else np.array(val)


# --------------------------------------------------------------------------
# differentiation with constant folding

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def _add(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b) and b.value != 0:
        return Const(a.value / b.value)
    return BinOp("/", a, b)


def _pow_node(a, b):
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``var``.

    Subtrees not depending on ``var`` differentiate to zero, so ``abs(x)`` is
    accepted when differentiating in ``y``.  Otherwise abs/min/max raise
    :class:`NonDifferentiable`, as do powers with a ``var``-dependent exponent.
    """
    if var not in VARIABLES:
        raise ValueError(f"cannot differentiate with respect to {var!r}")
    if var not in e.variables():
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg, var))
    if isinstance(e, BinOp):
        u, v = e.left, e.right
        if e.op == "+":
            return _add(differentiate(u, var), differentiate(v, var))
        if e.op == "-":
            return _sub(differentiate(u, var), differentiate(v, var))
        if e.op == "*":
            return _add(_mul(differentiate(u, var), v), _mul(u, differentiate(v, var)))
        if e.op == "/":
            num = _sub(_mul(differentiate(u, var), v), _mul(u, differentiate(v, var)))
            return _div(num, _pow_node(v, Const(2.0)))
        if var in v.variables():
            raise NonDifferentiable(f"exponent depends on {var}: {to_string(e)}")
        # d(u^c) = c u^(c-1) u'
        lowered = _sub(v, ONE) if not _is_const(v) else Const(v.value - 1.0)
        return _mul(_mul(v, _pow_node(u, lowered)), differentiate(u, var))
    if isinstance(e, Call):
        if e.func in _NONSMOOTH:
            raise NonDifferentiable(f"{e.func} is not differentiable in {var}")
        (arg,) = e.args
        inner = differentiate(arg, var)
        if e.func == "sin":
            outer = Call("cos", (arg,))
        elif e.func == "cos":
            outer = _neg(Call("sin", (arg,)))
        else:
            outer = e
        return _mul(outer, inner)
    raise TypeError(f"not an expression node: {e!r}")


def gradient(e: Expr) -> tuple[Expr, Expr]:
    return differentiate(e, "x"), differentiate(e, "y")


def laplacian(e: Expr) -> Expr:
    return _add(differentiate(differentiate(e, "x"), "x"), differentiate(differentiate(e, "y"), "y"))


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_const(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = repr(v)
    return f"({s})" if v < 0 else s


def _prec(e):
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    if isinstance(e, Const) and e.value < 0:
        return 5
    return 6


def to_string(e: Expr) -> str:
    """Render ``e`` with the minimal parentheses needed to reparse it identically."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_string(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        # -(a^b) prints bare; anything looser needs parentheses
        if _prec(e.arg) < _PREC["^"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[e.op]
    left, right = to_string(e.left), to_string(e.right)
    if e.op == "^":
        # the base must bind tighter than '^'; the exponent is a unary
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    # left-associative: equal precedence on the right needs parentheses
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def is_constant(e: Expr) -> bool:
    return not e.variables()


def constant_value(e: Expr) -> float:
    """Value of a variable-free expression."""
    if not is_constant(e):
        raise ValueError(f"expression {to_string(e)!r} is not constant")
    return float(evaluate(e, (0.0, 0.0)))


__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse",
    "evaluate",
    "differentiate",
    "gradient",
    "laplacian",
    "to_string",
    "is_constant",
    "constant_value",
]
