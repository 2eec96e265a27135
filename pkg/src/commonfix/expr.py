"""Arithmetic expression language and its recursive-descent parser.

Grammar (highest binding last)::

    sum     := product (("+" | "-") product)*
    product := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" ["-"] INTEGER)?
    atom    := NUMBER | NAME | "(" sum ")"

Rational literals are ordinary quotients of integer literals (``10/32``).
Evaluation is float64 throughout and works elementwise on numpy arrays.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .errors import EvaluationError, ParseError

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|[-+*/^()<>,])
    """,
    re.VERBOSE,
)

MAP_VARIABLE_RE = re.compile(r"^x(?:_[1-9][0-9]*)?$")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


# -- AST --------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


Expr = Union[Num, Var, Neg, BinOp, Pow]


# -- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, variables):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.variables = variables

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        return ParseError(message, self.text, tok.offset)

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind != "op":
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def at_op(self, *ops) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def sum(self):
        node = self.product()
        while self.at_op("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.product())
        return node

    def product(self):
        node = self.unary()
        while self.at_op("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.at_op("-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.at_op("^"):
            self.advance()
            sign = 1
            if self.at_op("-"):
                self.advance()
                sign = -1
            tok = self.tok
            if tok.kind != "num" or not tok.text.isdigit():
                raise self.error("exponent must be an integer literal")
            self.advance()
            if self.at_op("^"):
                raise self.error("chained powers need parentheses")
            return Pow(base, sign * int(tok.text))
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            if not self._allowed(tok.text):
                raise self.error(f"unknown identifier {tok.text!r}")
            self.advance()
            return Var(tok.text)
        if self.at_op("("):
            self.advance()
            node = self.sum()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise self.error(f"unexpected {found!r}")

    def _allowed(self, name: str) -> bool:
        if self.variables is None:
            return bool(MAP_VARIABLE_RE.match(name))
        return name in self.variables

    def finish(self):
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")


def parse(text: str, variables: Optional[Iterable[str]] = None) -> Expr:
    """Parse ``text`` into an AST.

    ``variables`` restricts the admissible identifiers; by default the map
    coordinates ``x``, ``x_1``, ``x_2``, ... are accepted.
    """
    p = _Parser(text, None if variables is None else frozenset(variables))
    node = p.sum()
    p.finish()
    return node


# -- printing ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def format_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def unparse(e: Expr) -> str:
    """Render ``e`` with the fewest parentheses that re-parse to the same tree."""

    def wrap(sub: Expr, minimum: int) -> str:
        s = unparse(sub)
        return f"({s})" if _prec(sub) < minimum else s

    if isinstance(e, Num):
        return format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + wrap(e.operand, 3)
    if isinstance(e, Pow):
        return f"{wrap(e.base, 5)}^{e.exponent}"
    level = _PREC[e.op]
    return f"{wrap(e.left, level)} {e.op} {wrap(e.right, level + 1)}"


# -- evaluation -------------------------------------------------------------


def _int_power(base, k: int):
    result = None
    acc = base
    while k:
        if k & 1:
            result = acc if result is None else result * acc
        k >>= 1
        if k:
            acc = acc * acc
    return result


def evaluate(e: Expr, env: dict, strict: bool = True):
    """Evaluate ``e`` with variable values from ``env`` (floats or arrays).

    Division by zero raises :class:`EvaluationError` when ``strict``;
    otherwise the affected entries become NaN.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvaluationError(f"no value bound to variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.operand, env, strict)
    if isinstance(e, Pow):
        base = evaluate(e.base, env, strict)
        k = e.exponent
        if k == 0:
            return base * 0.0 + 1.0
        if k > 0:
            return _int_power(base, k)
        return _divide(1.0, _int_power(base, -k), strict)
    left = evaluate(e.left, env, strict)
    right = evaluate(e.right, env, strict)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    return _divide(left, right, strict)


def _divide(num, den, strict):
    zero = np.asarray(den) == 0.0
    if np.any(zero):
        if strict:
            raise EvaluationError("division by zero")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.asarray(num, dtype=float) / np.asarray(den, dtype=float)
        return np.where(zero, np.nan, out)
    return num / den


def variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return variables(e.operand)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.left) | variables(e.right)


def affine_coeffs(e: Expr, names) -> Optional[tuple]:
    """``(a, b)`` with ``e == a*v + b`` in the variable(s) ``names``, else None."""
    if isinstance(e, Num):
        return 0.0, e.value
    if isinstance(e, Var):
        return (1.0, 0.0) if e.name in names else None
    if isinstance(e, Neg):
        inner = affine_coeffs(e.operand, names)
        return None if inner is None else (-inner[0], -inner[1])
    if isinstance(e, Pow):
        if e.exponent == 0:
            return 0.0, 1.0
        inner = affine_coeffs(e.base, names)
        if inner is None:
            return None
        if e.exponent == 1:
            return inner
        if inner[0] == 0.0:
            if inner[1] == 0.0 and e.exponent < 0:
                return None
            return 0.0, float(inner[1] ** e.exponent)
        return None
    left = affine_coeffs(e.left, names)
    right = affine_coeffs(e.right, names)
    if left is None or right is None:
        return None
    (a1, b1), (a2, b2) = left, right
    if e.op == "+":
        return a1 + a2, b1 + b2
    if e.op == "-":
        return a1 - a2, b1 - b2
    if e.op == "*":
        if a1 == 0.0:
            return b1 * a2, b1 * b2
        if a2 == 0.0:
            return a1 * b2, b1 * b2
        return None
    if a2 != 0.0 or b2 == 0.0:
        return None
    return a1 / b2, b1 / b2
