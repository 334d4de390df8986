"""A small real-valued expression language for torus-invariant potentials.

Grammar (precedence from loosest to tightest)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' int)?
    atom   := number | name | call | '(' expr ')'
    call   := ('log' | 'exp') '(' expr ')'
            | 'pow' '(' expr ',' int ')'
            | ('abs2' | 're' | 'im') '(' 'w'k ')'

Names are ``s1..sn`` (fiber-log coordinates), ``t1..tn`` (``exp(s_i)``) and
declared constants.  Base coordinates ``w1..wm`` only enter through
``abs2``, ``re`` and ``im``, so every expression is real-valued.
"""
from __future__ import annotations

import re as _re
from dataclasses import dataclass
from typing import Mapping

from . import calculus as C
from .errors import DomainError, ParseError, UnknownSymbol, ValidationError


class Expr:
    __slots__ = ()

    def __add__(self, o):
        return BinOp("+", self, _wrap(o))

    def __radd__(self, o):
        return BinOp("+", _wrap(o), self)

    def __sub__(self, o):
        return BinOp("-", self, _wrap(o))

    def __rsub__(self, o):
        return BinOp("-", _wrap(o), self)

    def __mul__(self, o):
        return BinOp("*", self, _wrap(o))

    def __rmul__(self, o):
        return BinOp("*", _wrap(o), self)

    def __truediv__(self, o):
        return BinOp("/", self, _wrap(o))

    def __rtruediv__(self, o):
        return BinOp("/", _wrap(o), self)

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Const(Expr):
    name: str


@dataclass(frozen=True)
class Var(Expr):
    kind: str  # 's' or 't'
    index: int  # 1-based


@dataclass(frozen=True)
class WAtom(Expr):
    kind: str  # 'abs2', 're', 'im'
    index: int  # 1-based


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    fn: str  # 'log' or 'exp'
    arg: Expr


def _wrap(o) -> Expr:
    if isinstance(o, Expr):
        return o
    return Num(float(o))


def s(i: int) -> Var:
    return Var("s", i)


def t(i: int) -> Var:
    return Var("t", i)


def abs2(i: int) -> WAtom:
    return WAtom("abs2", i)


def log(e) -> Call:
    return Call("log", _wrap(e))


def exp(e) -> Call:
    return Call("exp", _wrap(e))


def total(terms) -> Expr:
    terms = list(terms)
    if not terms:
        return Num(0.0)
    out = _wrap(terms[0])
    for term in terms[1:]:
        out = out + term
    return out


# -- printing -----------------------------------------------------------------


def to_text(e: Expr) -> str:
    """Canonical, fully parenthesized text; ``parse_expr`` inverts it."""
    if isinstance(e, Num):
        if e.value < 0:
            raise ValueError("negative literals are represented with Neg")
        return repr(float(e.value))
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Var):
        return f"{e.kind}{e.index}"
    if isinstance(e, WAtom):
        return f"{e.kind}(w{e.index})"
    if isinstance(e, Neg):
        return "-" + to_text(e.arg)
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Pow):
        return f"pow({to_text(e.base)}, {e.exponent})"
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


# -- parsing ------------------------------------------------------------------

_TOKEN = _re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_FUNCS = {"log", "exp", "pow", "abs2", "re", "im"}
_INDEXED = _re.compile(r"([st])([1-9]\d*)$")
_WNAME = _re.compile(r"w([1-9]\d*)$")


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        mt = _TOKEN.match(text, pos)
        if not mt:
            j = pos
            while j < len(text) and text[j].isspace():
                j += 1
            raise ParseError(f"unexpected character {text[j]!r}", position=j)
        kind = mt.lastgroup
        out.append((kind, mt.group(kind), mt.start(kind)))
        pos = mt.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, constants):
        self.toks = _tokenize(text)
        self.i = 0
        self.constants = set(constants)

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            what = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {what}", position=pos)

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {val!r}", position=pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.peek()[0:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        e = self.atom()
        if self.peek()[0:2] == ("op", "^"):
            self.take()
            e = Pow(e, self.integer())
        return e

    def integer(self):
        sign = 1
        if self.peek()[0:2] == ("op", "-"):
            self.take()
            sign = -1
        kind, val, pos = self.take()
        if kind != "num" or not val.isdigit():
            what = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected an integer exponent, found {what}", position=pos)
        return sign * int(val)

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val in _FUNCS and self.peek()[0:2] == ("op", "("):
                return self.call(val, pos)
            mt = _INDEXED.match(val)
            if mt:
                return Var(mt.group(1), int(mt.group(2)))
            if val in self.constants:
                return Const(val)
            if _WNAME.match(val):
                raise UnknownSymbol(f"{val} may only appear inside abs2/re/im", position=pos)
            raise UnknownSymbol(f"unknown symbol {val!r}", position=pos)
        what = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {what}", position=pos)

    def call(self, fn, pos):
        self.expect("(")
        if fn in ("abs2", "re", "im"):
            kind, val, p2 = self.take()
            mt = _WNAME.match(val) if kind == "name" else None
            if not mt:
                what = "end of input" if kind == "end" else repr(val)
                raise ParseError(f"{fn} expects a base coordinate w<k>, found {what}", position=p2)
            self.expect(")")
            return WAtom(fn, int(mt.group(1)))
        arg = self.expr()
        if fn == "pow":
            self.expect(",")
            k = self.integer()
            self.expect(")")
            return Pow(arg, k)
        self.expect(")")
        return Call(fn, arg)


def parse_expr(text: str, constants=()) -> Expr:
    """Parse DSL text.  ``constants`` names the symbols allowed besides coordinates."""
    return _Parser(text, constants).parse()


# -- analysis and rewriting ---------------------------------------------------


def symbols(e: Expr) -> set:
    """Free symbols as tuples ``('s'|'t'|'w'|'const', index_or_name)``."""
    out = set()
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, Var):
            out.add((x.kind, x.index))
        elif isinstance(x, WAtom):
            out.add(("w", x.index))
        elif isinstance(x, Const):
            out.add(("const", x.name))
        elif isinstance(x, Neg):
            stack.append(x.arg)
        elif isinstance(x, BinOp):
            stack += [x.left, x.right]
        elif isinstance(x, Pow):
            stack.append(x.base)
        elif isinstance(x, Call):
            stack.append(x.arg)
    return out


def check_dims(e: Expr, n: int, m: int, constants: Mapping = ()):
    for kind, idx in symbols(e):
        if kind in ("s", "t") and idx > n:
            raise ValidationError(f"{kind}{idx} exceeds fiber rank n={n}")
        if kind == "w" and idx > m:
            raise ValidationError(f"w{idx} exceeds base dimension m={m}")
        if kind == "const" and idx not in constants:
            raise ValidationError(f"constant {idx!r} has no value")


def rewrite(e: Expr, fn) -> Expr:
    """Bottom-up rewrite; ``fn`` returns a replacement or None to keep the node."""
    if isinstance(e, Neg):
        e = Neg(rewrite(e.arg, fn))
    elif isinstance(e, BinOp):
        e = BinOp(e.op, rewrite(e.left, fn), rewrite(e.right, fn))
    elif isinstance(e, Pow):
        e = Pow(rewrite(e.base, fn), e.exponent)
    elif isinstance(e, Call):
        e = Call(e.fn, rewrite(e.arg, fn))
    out = fn(e)
    return e if out is None else out


def substitute_s(e: Expr, mapping: Mapping[int, Expr]) -> Expr:
    """Replace ``s_i`` by ``mapping[i]``; ``t_i`` becomes ``exp(mapping[i])``."""

    def fn(x):
        if isinstance(x, Var) and x.index in mapping:
            return mapping[x.index] if x.kind == "s" else Call("exp", mapping[x.index])
        return None

    return rewrite(e, fn)


def shift_indices(e: Expr, ds: int, dw: int) -> Expr:
    def fn(x):
        if isinstance(x, Var):
            return Var(x.kind, x.index + ds)
        if isinstance(x, WAtom):
            return WAtom(x.kind, x.index + dw)
        return None

    return rewrite(e, fn)


# -- evaluation ---------------------------------------------------------------


def _div(a, b):
    if isinstance(a, C.Jet2) or isinstance(b, C.Jet2):
        return a / b
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def evaluate(e: Expr, s, x, y, constants: Mapping = None):
    """Evaluate with float or jet coordinates."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        v = s[e.index - 1]
        return v if e.kind == "s" else C.exp(v)
    if isinstance(e, WAtom):
        a, b = x[e.index - 1], y[e.index - 1]
        if e.kind == "abs2":
            return a * a + b * b
        return a if e.kind == "re" else b
    if isinstance(e, BinOp):
        left = evaluate(e.left, s, x, y, constants)
        right = evaluate(e.right, s, x, y, constants)
        if e.op == "+":
            return left + right
        if e.op == "-":
            return left - right
        if e.op == "*":
            return left * right
        return _div(left, right)
    if isinstance(e, Neg):
        return -evaluate(e.arg, s, x, y, constants)
    if isinstance(e, Call):
        v = evaluate(e.arg, s, x, y, constants)
        return C.log(v) if e.fn == "log" else C.exp(v)
    if isinstance(e, Pow):
        return C.ipow(evaluate(e.base, s, x, y, constants), e.exponent)
    if isinstance(e, Const):
        try:
            return float(constants[e.name])
        except (KeyError, TypeError):
            raise UnknownSymbol(f"constant {e.name!r} has no value") from None
    raise TypeError(f"not an expression: {e!r}")
