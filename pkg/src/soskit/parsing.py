"""Recursive-descent parser for plain-text polynomial notation.

Accepted input covers every style the dataset emits: explicit products
(``3*x1^2*x2``), juxtaposition (``3x1^2x2``), parenthesized subexpressions
raised to integer powers (``(x1 - x1*x2)^2``), decimal and scientific
coefficients, and literal fractions as constants (``9/4``). ``x`` with no
index is shorthand for ``x1``.

Precedence: ``^`` binds tighter than products (explicit or juxtaposed),
which bind tighter than unary minus, which binds tighter than ``+``/``-``.

The parser produces an expression tree first; :func:`parse` folds the tree
into a :class:`~soskit.poly.Polynomial`, while :func:`parse_tree` exposes
the tree itself so structural checks (sum-of-squared-subexpressions) can
run before expansion.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from soskit.poly import Polynomial


class ParseError(ValueError):
    """Parse failure with the byte offset of the offending token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.message = message
        self.offset = offset


# ---- expression tree -----------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: Union[int, float, Fraction]


@dataclass(frozen=True)
class Var:
    index: int  # zero-based


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Prod:
    factors: tuple["Node", ...]


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Sum:
    terms: tuple["Node", ...]


Node = Union[Const, Var, Pow, Prod, Neg, Sum]


# ---- tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<var>x\d*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unknown token {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    return tokens


# ---- parser ---------------------------------------------------------------


@dataclass
class _Parser:
    tokens: list[_Token]
    length: int
    pos: int = 0
    max_var: int = field(default=0)

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", self.length)
        self.pos += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.peek()
        if tok is None or tok.text != text:
            off = tok.offset if tok else self.length
            raise ParseError(f"expected {text!r}", off)
        self.pos += 1

    # expr := ['-'] term (('+'|'-') term)*
    def parse_expr(self) -> Node:
        terms: list[Node] = []
        tok = self.peek()
        negate = False
        if tok is not None and tok.text in "+-":
            negate = tok.text == "-"
            self.pos += 1
        term = self.parse_term()
        terms.append(Neg(term) if negate else term)
        while (tok := self.peek()) is not None and tok.text in "+-":
            self.pos += 1
            term = self.parse_term()
            terms.append(Neg(term) if tok.text == "-" else term)
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    # term := factor (('*' | juxtaposition) factor)*
    def parse_term(self) -> Node:
        factors = [self.parse_factor()]
        while True:
            tok = self.peek()
            if tok is None:
                break
            if tok.text == "*":
                self.pos += 1
                factors.append(self.parse_factor())
            elif tok.kind in ("number", "var") or tok.text == "(":
                factors.append(self.parse_factor())
            else:
                break
        return factors[0] if len(factors) == 1 else Prod(tuple(factors))

    # factor := primary ['^' int]
    def parse_factor(self) -> Node:
        base = self.parse_primary()
        tok = self.peek()
        if tok is not None and tok.text == "^":
            self.pos += 1
            exp_tok = self.next()
            if exp_tok.text == "-":
                num = self.peek()
                off = num.offset if num else self.length
                raise ParseError("negative exponent not allowed", off)
            if exp_tok.kind != "number" or not exp_tok.text.isdigit():
                raise ParseError("exponent must be a nonnegative integer", exp_tok.offset)
            return Pow(base, int(exp_tok.text))
        return base

    # primary := number ['/' number] | var | '(' expr ')'
    def parse_primary(self) -> Node:
        tok = self.next()
        if tok.kind == "number":
            value = self._number(tok)
            nxt = self.peek()
            if nxt is not None and nxt.text == "/":
                self.pos += 1
                den_tok = self.next()
                if den_tok.kind != "number" or not den_tok.text.isdigit():
                    raise ParseError(
                        "fraction is only allowed between integer literals",
                        den_tok.offset,
                    )
                if not tok.text.isdigit():
                    raise ParseError(
                        "fraction is only allowed between integer literals", tok.offset
                    )
                return Const(Fraction(int(tok.text), int(den_tok.text)))
            return Const(value)
        if tok.kind == "var":
            index = int(tok.text[1:]) if len(tok.text) > 1 else 1
            if index < 1:
                raise ParseError("variable indices start at 1", tok.offset)
            self.max_var = max(self.max_var, index)
            return Var(index - 1)
        if tok.text == "(":
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.text == "/":
            raise ParseError("division is not supported", tok.offset)
        raise ParseError(f"unexpected token {tok.text!r}", tok.offset)

    @staticmethod
    def _number(tok: _Token) -> Union[int, float]:
        if tok.text.isdigit():
            return int(tok.text)
        return float(tok.text)


def parse_tree(text: str) -> Node:
    """Parse to an expression tree without expanding anything."""
    if not text.strip():
        raise ParseError("empty input", 0)
    parser = _Parser(_tokenize(text), len(text))
    tree = parser.parse_expr()
    leftover = parser.peek()
    if leftover is not None:
        raise ParseError(f"unexpected token {leftover.text!r}", leftover.offset)
    return tree


def tree_max_var(node: Node) -> int:
    """Highest 1-based variable index appearing in the tree (0 if none)."""
    if isinstance(node, Var):
        return node.index + 1
    if isinstance(node, Const):
        return 0
    if isinstance(node, Pow):
        return tree_max_var(node.base)
    if isinstance(node, Neg):
        return tree_max_var(node.operand)
    children = node.factors if isinstance(node, Prod) else node.terms
    return max((tree_max_var(c) for c in children), default=0)


def tree_to_polynomial(node: Node, n_vars: int, exact: bool = False) -> Polynomial:
    """Fold a tree into an expanded Polynomial with the given n_vars."""
    if isinstance(node, Const):
        value = node.value
        if exact and isinstance(value, float):
            value = Fraction(repr(value))
        elif not exact and isinstance(value, Fraction):
            value = float(value)
        return Polynomial.constant(n_vars, value)
    if isinstance(node, Var):
        return Polynomial.variable(n_vars, node.index)
    if isinstance(node, Pow):
        return tree_to_polynomial(node.base, n_vars, exact).power(node.exponent)
    if isinstance(node, Neg):
        return -tree_to_polynomial(node.operand, n_vars, exact)
    if isinstance(node, Prod):
        result = Polynomial.constant(n_vars, 1)
        for child in node.factors:
            result = result * tree_to_polynomial(child, n_vars, exact)
        return result
    result = Polynomial.zero(n_vars)
    for child in node.terms:
        result = result + tree_to_polynomial(child, n_vars, exact)
    return result


def parse(text: str, n_vars_hint: int | None = None, exact: bool = False) -> Polynomial:
    """Parse polynomial text.

    ``n_vars`` of the result is the highest variable index present, or the
    hint if larger. ``exact=True`` keeps all coefficients as Fractions
    (decimal literals are exact decimals).
    """
    tree = parse_tree(text)
    n_vars = max(tree_max_var(tree), n_vars_hint or 0, 1)
    return tree_to_polynomial(tree, n_vars, exact=exact)
