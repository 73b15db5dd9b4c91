"""Scalar math expressions: parsing, evaluation, exact differentiation.

Expressions are immutable trees over state variables ``x1..xn``, time ``t``
and inputs ``u1..um``. Every tree can be lowered to a flat postfix
:class:`Program` which the numerical kernels evaluate quickly.

Grammar (whitespace insignificant)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' uint)?
    atom  := number | ident | '(' expr ')' | func '(' expr ')'

``^`` binds tighter than unary minus, so ``-x1^2`` is ``-(x1^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ExpressionError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "EvaluationError",
    "Expression",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "Environment",
    "Program",
    "FUNCTIONS",
    "parse",
    "evaluate",
    "diff",
    "gradient",
    "jacobian",
    "render",
    "compile_program",
    "variables",
    "const",
    "var",
]


class ExpressionError(ValueError):
    """Base class for malformed or unevaluable expressions."""


class ExprSyntaxError(ExpressionError):
    def __init__(self, message: str, position: int, expected: Sequence[str] = ()):
        self.position = position
        self.expected = tuple(expected)
        detail = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at position {position}{detail}")


class UnknownIdentifierError(ExpressionError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r} at position {position}")


class EvaluationError(ExpressionError, ArithmeticError):
    def __init__(self, message: str, path: tuple[int, ...]):
        self.path = path
        where = "/".join(str(p) for p in path) or "<root>"
        super().__init__(f"{message} at node {where}")


# -- nodes -------------------------------------------------------------------


class Expression:
    """Base node. Arithmetic operators build new (constant-folded) trees."""

    __slots__ = ()

    def children(self) -> tuple["Expression", ...]:
        return ()

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True, eq=True, repr=True)
class Const(Expression):
    value: float


@dataclass(frozen=True, eq=True, repr=True)
class Var(Expression):
    """A variable: ``kind`` is ``'x'``, ``'u'`` or ``'t'``; index is 0-based."""

    kind: str
    index: int = 0


@dataclass(frozen=True, eq=True, repr=True)
class Neg(Expression):
    arg: Expression

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True, repr=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True, repr=True)
class Pow(Expression):
    base: Expression
    exponent: int

    def children(self):
        return (self.base,)


@dataclass(frozen=True, eq=True, repr=True)
class Call(Expression):
    func: str
    arg: Expression

    def children(self):
        return (self.arg,)


def _sat(s: float) -> float:
    return 1.0 if s > 1.0 else (-1.0 if s < -1.0 else s)


def _sign(s: float) -> float:
    # right-continuous at 0
    return 1.0 if s >= 0.0 else -1.0


def _dsat(s: float) -> float:
    # derivative of sat, right-continuous at the kinks
    return 1.0 if -1.0 <= s < 1.0 else 0.0


def _checked_sqrt(s: float) -> float:
    if s < 0.0:
        raise ValueError("sqrt of negative number")
    return math.sqrt(s)


FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "sqrt": _checked_sqrt,
    "abs": abs,
    "tanh": math.tanh,
    "sat": _sat,
    # derivative helpers; parseable so that rendered Jacobians round-trip
    "sign": _sign,
    "dsat": _dsat,
}

CONSTANTS = {"pi": math.pi, "e": math.e}

ZERO = Const(0.0)
ONE = Const(1.0)


def _wrap(value) -> Expression:
    if isinstance(value, Expression):
        return value
    return Const(float(value))


def const(value: float) -> Const:
    return Const(float(value))


def var(name: str) -> Var:
    """``var('x2')`` -> ``Var('x', 1)``; also ``'t'`` and ``'u1'``."""
    if name == "t":
        return Var("t", 0)
    m = re.fullmatch(r"([xu])([1-9][0-9]*)", name)
    if not m:
        raise UnknownIdentifierError(name, 0)
    return Var(m.group(1), int(m.group(2)) - 1)


# -- constructors with constant folding ----------------------------------------


def _is(e: Expression, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return BinOp("/", a, b)


def power(a: Expression, n: int) -> Expression:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value**n)
    return Pow(a, n)


def call(func: str, a: Expression) -> Expression:
    if isinstance(a, Const):
        try:
            return Const(float(FUNCTIONS[func](a.value)))
        except (ValueError, OverflowError):
            pass
    return Call(func, a)


# -- parser ------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, source: str, n: int | None, m: int | None):
        self.source = source
        self.n = n
        self.m = m
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            while pos < len(source) and source[pos].isspace():
                pos += 1
            if pos >= len(source):
                break
            mt = _TOKEN.match(source, pos)
            if not mt or mt.end() == pos:
                raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
            kind = mt.lastgroup
            start = mt.start(kind)
            self.tokens.append((kind, mt.group(kind), start))
            pos = mt.end()
        self.tokens.append(("end", "", len(source)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.take()
        if kind != "op" or text != op:
            raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", pos, [repr(op)])

    def parse(self) -> Expression:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", pos, ["operator", "end of input"])
        return e

    def expr(self) -> Expression:
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                rhs = self.term()
                e = add(e, rhs) if text == "+" else sub(e, rhs)
            else:
                return e

    def term(self) -> Expression:
        e = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                rhs = self.unary()
                e = mul(e, rhs) if text == "*" else div(e, rhs)
            else:
                return e

    def unary(self) -> Expression:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            kind, text, pos = self.take()
            if kind != "num" or not text.isdigit():
                raise ExprSyntaxError(
                    "exponent must be a non-negative integer literal", pos, ["integer"]
                )
            return power(base, int(text))
        return base

    def atom(self) -> Expression:
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if kind == "ident":
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return call(text, arg)
            if text in CONSTANTS:
                return Const(CONSTANTS[text])
            if text == "t":
                return Var("t", 0)
            mt = re.fullmatch(r"([xu])([1-9][0-9]*)", text)
            if mt:
                k, idx = mt.group(1), int(mt.group(2))
                limit = self.n if k == "x" else self.m
                if limit is not None and idx > limit:
                    raise UnknownIdentifierError(text, pos)
                return Var(k, idx - 1)
            raise UnknownIdentifierError(text, pos)
        expected = ["number", "identifier", "'('", "'-'"]
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", pos, expected)


def parse(source: str, n: int | None = None, m: int | None = None) -> Expression:
    """Parse ``source``; if ``n``/``m`` are given, variable indices are checked."""
    return _Parser(source, n, m).parse()


# -- evaluation --------------------------------------------------------------


@dataclass(frozen=True)
class Environment:
    x: Sequence[float]
    t: float = 0.0
    u: Sequence[float] = ()


def evaluate(e: Expression, env: Environment) -> float:
    """Evaluate by walking the tree. Domain errors carry the node path."""
    return _eval(e, env, ())


def _eval(e: Expression, env: Environment, path: tuple[int, ...]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.kind == "t":
            return float(env.t)
        seq = env.x if e.kind == "x" else env.u
        if e.index >= len(seq):
            raise EvaluationError(f"variable {e.kind}{e.index + 1} out of range", path)
        return float(seq[e.index])
    if isinstance(e, Neg):
        return -_eval(e.arg, env, path + (0,))
    if isinstance(e, BinOp):
        a = _eval(e.left, env, path + (0,))
        b = _eval(e.right, env, path + (1,))
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0.0:
            raise EvaluationError("division by zero", path)
        return a / b
    if isinstance(e, Pow):
        return _eval(e.base, env, path + (0,)) ** e.exponent
    if isinstance(e, Call):
        a = _eval(e.arg, env, path + (0,))
        try:
            return float(FUNCTIONS[e.func](a))
        except (ValueError, OverflowError) as exc:
            raise EvaluationError(f"{e.func}: {exc}", path) from None
    raise TypeError(f"not an expression node: {e!r}")


# -- differentiation ---------------------------------------------------------


def diff(e: Expression, wrt: Var) -> Expression:
    """Exact symbolic partial derivative of ``e`` with respect to ``wrt``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e == wrt else ZERO
    if isinstance(e, Neg):
        return neg(diff(e.arg, wrt))
    if isinstance(e, BinOp):
        da, db = diff(e.left, wrt), diff(e.right, wrt)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, e.right), mul(e.left, db))
        # quotient rule
        if _is(db, 0.0):
            return div(da, e.right)
        return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, 2))
    if isinstance(e, Pow):
        db = diff(e.base, wrt)
        if _is(db, 0.0):
            return ZERO
        n = e.exponent
        return mul(mul(Const(float(n)), power(e.base, n - 1)), db)
    if isinstance(e, Call):
        g = e.arg
        dg = diff(g, wrt)
        if _is(dg, 0.0):
            return ZERO
        f = e.func
        if f == "sin":
            outer = call("cos", g)
        elif f == "cos":
            outer = neg(call("sin", g))
        elif f == "exp":
            outer = e
        elif f == "sqrt":
            outer = div(ONE, mul(Const(2.0), e))
        elif f == "abs":
            outer = call("sign", g)
        elif f == "tanh":
            outer = sub(ONE, power(e, 2))
        elif f == "sat":
            outer = call("dsat", g)
        else:  # sign, dsat: piecewise constant
            return ZERO
        return mul(outer, dg)
    raise TypeError(f"not an expression node: {e!r}")


def gradient(e: Expression, n: int) -> list[Expression]:
    return [diff(e, Var("x", j)) for j in range(n)]


def jacobian(fields: Sequence[Expression], n: int) -> list[list[Expression]]:
    """Matrix of exact partials ``d fields[i] / d x_j``."""
    return [gradient(f, n) for f in fields]


def variables(e: Expression) -> set[Var]:
    if isinstance(e, Var):
        return {e}
    out: set[Var] = set()
    for c in e.children():
        out |= variables(c)
    return out


# -- rendering ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_const(v: float) -> str:
    if v == math.pi:
        return "pi"
    if v == math.e:
        return "e"
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def render(e: Expression) -> str:
    """Infix text that parses back to an equal-valued tree."""
    return _render(e)[0]


def _render(e: Expression) -> tuple[str, int]:
    # returns (text, precedence); atoms get 5
    if isinstance(e, Const):
        if e.value < 0 or (e.value == 0 and math.copysign(1.0, e.value) < 0):
            return f"-{_fmt_const(-e.value)}", 3
        return _fmt_const(e.value), 5
    if isinstance(e, Var):
        return ("t" if e.kind == "t" else f"{e.kind}{e.index + 1}"), 5
    if isinstance(e, Neg):
        s, p = _render(e.arg)
        return f"-{s if p >= 3 else '(' + s + ')'}", 3
    if isinstance(e, BinOp):
        prec = _PREC[e.op]
        ls, lp = _render(e.left)
        rs, rp = _render(e.right)
        if lp < prec:
            ls = f"({ls})"
        # parenthesize equal precedence on the right too: keeps the tree shape,
        # so re-parsed trees round bit-identically
        if rp <= prec:
            rs = f"({rs})"
        return f"{ls} {e.op} {rs}", prec
    if isinstance(e, Pow):
        s, p = _render(e.base)
        if p < 5:
            s = f"({s})"
        return f"{s}^{e.exponent}", 4
    if isinstance(e, Call):
        return f"{e.func}({_render(e.arg)[0]})", 5
    raise TypeError(f"not an expression node: {e!r}")


# -- lowering to postfix programs --------------------------------------------

# opcode table shared with the compiled and pure kernels
OP_CONST, OP_X, OP_U, OP_T = 0, 1, 2, 3
OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = 4, 5, 6, 7, 8, 9
OP_SIN, OP_COS, OP_EXP, OP_SQRT, OP_ABS, OP_TANH, OP_SAT, OP_SIGN, OP_DSAT = range(10, 19)

_BIN_OPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}
_FUNC_OPS = {
    "sin": OP_SIN,
    "cos": OP_COS,
    "exp": OP_EXP,
    "sqrt": OP_SQRT,
    "abs": OP_ABS,
    "tanh": OP_TANH,
    "sat": OP_SAT,
    "sign": OP_SIGN,
    "dsat": OP_DSAT,
}


@dataclass(frozen=True)
class Program:
    """Postfix form of one expression: parallel opcode/argument arrays."""

    ops: np.ndarray  # int32
    args: np.ndarray  # float64: constant value, variable index or exponent
    depth: int

    def __len__(self) -> int:
        return len(self.ops)


def compile_program(e: Expression) -> Program:
    ops: list[int] = []
    args: list[float] = []
    depth = 0
    max_depth = 0

    def emit(op: int, arg: float, delta: int):
        nonlocal depth, max_depth
        ops.append(op)
        args.append(arg)
        depth += delta
        max_depth = max(max_depth, depth)

    def walk(node: Expression):
        if isinstance(node, Const):
            emit(OP_CONST, node.value, 1)
        elif isinstance(node, Var):
            code = {"x": OP_X, "u": OP_U, "t": OP_T}[node.kind]
            emit(code, float(node.index), 1)
        elif isinstance(node, Neg):
            walk(node.arg)
            emit(OP_NEG, 0.0, 0)
        elif isinstance(node, BinOp):
            walk(node.left)
            walk(node.right)
            emit(_BIN_OPS[node.op], 0.0, -1)
        elif isinstance(node, Pow):
            walk(node.base)
            emit(OP_POW, float(node.exponent), 0)
        elif isinstance(node, Call):
            walk(node.arg)
            emit(_FUNC_OPS[node.func], 0.0, 0)
        else:
            raise TypeError(f"not an expression node: {node!r}")

    walk(e)
    return Program(
        np.asarray(ops, dtype=np.int32), np.asarray(args, dtype=np.float64), max_depth
    )


ExpressionLike = Union[Expression, str, float, int]


def as_expression(value: ExpressionLike, n: int | None = None, m: int | None = None) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, str):
        return parse(value, n, m)
    return Const(float(value))
