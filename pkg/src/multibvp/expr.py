"""Parser/evaluator for the scalar expressions used in problem configs.

Weight functions are expressions in one variable (``x`` on the line, ``r``
on an annulus) and nonlinearities are expressions in ``s``.  The grammar is
deliberately small: numbers, one free variable, ``pi``, the arithmetic
operators ``+ - * / ^``, unary minus, the one-argument functions
``sin cos exp log atan sqrt abs pos neg`` and the two-argument ``max min``.
``pos(e)`` is the positive part max(e, 0) and ``neg(e)`` the negative part
max(-e, 0), so e.g. ``pos(sin(x))`` is a non-negative single-signed weight.

Precedence is the usual one: ``^`` (right associative) binds tighter than
unary minus, which binds tighter than ``* /``, which bind tighter than
``+ -``.  Trees are immutable and evaluation is a pure function of one real
argument.
"""

from __future__ import annotations

import builtins
import math
import re
from dataclasses import dataclass

__all__ = [
    "Expr",
    "ParseError",
    "EvalDomainError",
    "parse",
    "eval",
    "print",
    "substitute",
    "product",
    "power_of",
]

FUNC1 = ("sin", "cos", "exp", "log", "atan", "sqrt", "abs", "pos", "neg")
FUNC2 = ("max", "min")


class ParseError(ValueError):
    """Raised for malformed expression text.

    ``pos`` is the byte offset of the offending token and ``kind`` is one of
    ``syntax``, ``unknown_identifier``, ``wrong_variable``, ``arity``.
    """

    def __init__(self, message: str, pos: int, kind: str = "syntax"):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos
        self.kind = kind


class EvalDomainError(ArithmeticError):
    """Raised when evaluation leaves the real domain (log of a non-positive
    number, sqrt of a negative, division by zero, negative base with a
    non-integer exponent, or any NaN intermediate)."""


# ---------------------------------------------------------------------------
# tree nodes


@dataclass(frozen=True, slots=True)
class Num:
    value: float


@dataclass(frozen=True, slots=True)
class Pi:
    pass


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class Neg:
    arg: object


@dataclass(frozen=True, slots=True)
class Bin:
    op: str  # one of + - * / ^
    left: object
    right: object


@dataclass(frozen=True, slots=True)
class Fn1:
    name: str
    arg: object


@dataclass(frozen=True, slots=True)
class Fn2:
    name: str
    a: object
    b: object


# ---------------------------------------------------------------------------
# tokenizer

_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


def _tokenize(text: str):
    tokens = []  # (kind, value, pos)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        m = _NUMBER.match(text, i)
        if m:
            tokens.append(("num", float(m.group()), i))
            i = m.end()
            continue
        m = _NAME.match(text, i)
        if m:
            tokens.append(("name", m.group(), i))
            i = m.end()
            continue
        if c in "+-*/^(),":
            tokens.append((c, c, i))
            i += 1
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("end", None, n))
    return tokens


# ---------------------------------------------------------------------------
# recursive-descent parser


class _Parser:
    def __init__(self, tokens, variable: str):
        self.toks = tokens
        self.i = 0
        self.var = variable

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str):
        t = self.take()
        if t[0] != kind:
            raise ParseError(f"expected {kind!r}, found {t[1]!r}", t[2])
        return t

    def parse(self):
        node = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected trailing input {t[1]!r}", t[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in "+-":
            op = self.take()[0]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] in "*/":
            op = self.take()[0]
            node = Bin(op, node, self.factor())
        return node

    def factor(self):
        # unary minus binds looser than ^, so -x^2 is -(x^2)
        if self.peek()[0] == "-":
            self.take()
            return Neg(self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            return Bin("^", base, self.factor())
        return base

    def atom(self):
        t = self.take()
        kind, value, pos = t
        if kind == "num":
            return Num(value)
        if kind == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if value == "pi":
                return Pi()
            if value in FUNC1 or value in FUNC2:
                return self.call(value, pos)
            if value == self.var:
                return Var(value)
            if len(value) == 1:
                raise ParseError(
                    f"wrong variable name {value!r} (this expression uses {self.var!r})",
                    pos,
                    kind="wrong_variable",
                )
            raise ParseError(f"unknown identifier {value!r}", pos, kind="unknown_identifier")
        raise ParseError(f"unexpected token {value!r}", pos)

    def call(self, name: str, pos: int):
        self.expect("(")
        first = self.expr()
        if name in FUNC1:
            t = self.peek()
            if t[0] == ",":
                raise ParseError(f"{name} takes one argument", t[2], kind="arity")
            self.expect(")")
            return Fn1(name, first)
        t = self.peek()
        if t[0] == ")":
            raise ParseError(f"{name} takes two arguments", t[2], kind="arity")
        self.expect(",")
        second = self.expr()
        self.expect(")")
        return Fn2(name, first, second)


# ---------------------------------------------------------------------------
# compilation to a plain python callable

_INF = math.inf


def _pos(a):
    return a if a > 0.0 else 0.0


def _neg(a):
    return -a if a < 0.0 else 0.0


def _exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        return _INF


def _pow(a, b):
    if a < 0.0 and b != math.floor(b):
        raise EvalDomainError(f"negative base {a!r} with non-integer exponent {b!r}")
    try:
        return a ** b
    except OverflowError:
        if a < 0.0 and math.floor(b) % 2 == 1:
            return -_INF
        return _INF


_NAMESPACE = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": _exp,
    "_log": math.log,
    "_atan": math.atan,
    "_sqrt": math.sqrt,
    "_abs": abs,
    "_pos": _pos,
    "_neg": _neg,
    "_max": max,
    "_min": min,
    "_pow": _pow,
    "_pi": math.pi,
    "__builtins__": {},
}


def _emit(node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Pi):
        return "_pi"
    if isinstance(node, Var):
        return "_v"
    if isinstance(node, Neg):
        return f"(-{_emit(node.arg)})"
    if isinstance(node, Bin):
        if node.op == "^":
            return f"_pow({_emit(node.left)}, {_emit(node.right)})"
        return f"({_emit(node.left)} {node.op} {_emit(node.right)})"
    if isinstance(node, Fn1):
        return f"_{node.name}({_emit(node.arg)})"
    if isinstance(node, Fn2):
        return f"_{node.name}({_emit(node.a)}, {_emit(node.b)})"
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# printing with minimal parentheses

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt(node, ctx: int) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        s = "-" + _fmt(node.arg, _PREC["neg"])
        return f"({s})" if ctx > _PREC["neg"] else s
    if isinstance(node, Bin):
        p = _PREC[node.op]
        if node.op == "^":
            # right associative: left child needs stronger context
            s = _fmt(node.left, p + 1) + "^" + _fmt(node.right, p)
        else:
            s = _fmt(node.left, p) + node.op + _fmt(node.right, p + 1)
        return f"({s})" if ctx > p else s
    if isinstance(node, Fn1):
        return f"{node.name}({_fmt(node.arg, 0)})"
    if isinstance(node, Fn2):
        return f"{node.name}({_fmt(node.a, 0)},{_fmt(node.b, 0)})"
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# public API


class Expr:
    """An immutable parsed expression of one real variable.

    Calling the object evaluates it; ``fn`` is the bare compiled callable
    for hot loops (it raises ValueError/ZeroDivisionError instead of
    EvalDomainError and does not screen NaN, callers that care should go
    through ``__call__``).
    """

    __slots__ = ("root", "var", "fn")

    def __init__(self, root, var: str):
        self.root = root
        self.var = var
        code = compile(f"lambda _v: ({_emit(root)})", "<expr>", "eval")
        # builtins.eval: the module-level `eval` below is this API's operation
        self.fn = builtins.eval(code, dict(_NAMESPACE))

    def __call__(self, v: float) -> float:
        if not math.isfinite(v):
            raise EvalDomainError(f"non-finite argument {v!r}")
        try:
            r = self.fn(v)
        except (ValueError, ZeroDivisionError) as ex:
            raise EvalDomainError(f"{ex} at {self.var}={v!r}") from ex
        if isinstance(r, float) and math.isnan(r):
            raise EvalDomainError(f"NaN result at {self.var}={v!r}")
        return float(r)

    def text(self) -> str:
        return _fmt(self.root, 0)

    def __eq__(self, other):
        return isinstance(other, Expr) and self.root == other.root and self.var == other.var

    def __hash__(self):
        return hash((self.root, self.var))

    def __repr__(self):
        return f"Expr({self.text()!r}, var={self.var!r})"


def parse(text: str, variable: str) -> Expr:
    """Parse ``text`` into an Expr whose single free variable is ``variable``."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    root = _Parser(_tokenize(text), variable).parse()
    return Expr(root, variable)


def eval(e: Expr, v: float) -> float:  # noqa: A001 - op name from the API contract
    """Evaluate ``e`` at ``v``; domain failures raise EvalDomainError."""
    return e(v)


def print(e: Expr) -> str:  # noqa: A001 - op name from the API contract
    """Render ``e`` as text; ``parse(print(e))`` reproduces the tree exactly."""
    return e.text()


def substitute(e: Expr, replacement: Expr) -> Expr:
    """Replace every occurrence of e's variable with ``replacement``."""

    def walk(node):
        if isinstance(node, Var):
            return replacement.root
        if isinstance(node, Neg):
            return Neg(walk(node.arg))
        if isinstance(node, Bin):
            return Bin(node.op, walk(node.left), walk(node.right))
        if isinstance(node, Fn1):
            return Fn1(node.name, walk(node.arg))
        if isinstance(node, Fn2):
            return Fn2(node.name, walk(node.a), walk(node.b))
        return node

    return Expr(walk(e.root), replacement.var)


def product(a: Expr, b: Expr) -> Expr:
    """The expression a*b (both must share a variable)."""
    if a.var != b.var:
        raise ValueError(f"variable mismatch: {a.var!r} vs {b.var!r}")
    return Expr(Bin("*", a.root, b.root), a.var)


def power_of(base: Expr, exponent: float) -> Expr:
    """The expression base^exponent with a numeric exponent."""
    exponent = float(exponent)
    if exponent < 0:
        # keep the tree in the shape the parser itself would build
        return Expr(Bin("^", base.root, Neg(Num(-exponent))), base.var)
    return Expr(Bin("^", base.root, Num(exponent)), base.var)
