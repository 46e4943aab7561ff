"""Recursive-descent parser for the expression grammar.

Grammar (UTF-8 text):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          exponent must be an integer
    primary := NUMBER | 'pi' | 'n' | 't' | 'sgn_n'
             | IDENT "'"* '(' expr ')'       function application
             | IDENT '[' index ']'           sequence atom
             | IDENT "'"*                    variable / derivative atom
             | '(' expr ')'
    index   := 'n' (('+' | '-') INT)? | ('+' | '-')? INT

Identifiers are [a-zA-Z_][a-zA-Z0-9_]*.  Rationals are written with '/'
(ordinary division).  Function symbols other than the builtins sin, cos
and exp must be declared in the registry before use.
"""

from __future__ import annotations

import re
from typing import Optional

from .errors import ExprSyntaxError, UnknownSymbol
from .expr import (
    ALT,
    Deriv,
    Expr,
    FnRegistry,
    Index,
    PI,
    Seq,
    Var,
    make_fnapp,
    make_pow,
    make_prod,
    make_sum,
    rat,
)

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<ident>[a-zA-Z_][a-zA-Z0-9_]*)|(?P<op>[-+*/^()\[\]'])|(?P<bad>\S))"
)

_RESERVED = {"pi", "n", "t", "sgn_n"}


class _Tok:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind: str, text: str, pos: int):
        self.kind = kind
        self.text = text
        self.pos = pos


def _lex(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            break
        if m.lastgroup == "bad":
            raise ExprSyntaxError(f"unexpected character {m.group('bad')!r}", m.start("bad"))
        if m.lastgroup is None:
            break
        toks.append(_Tok(m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, registry: Optional[FnRegistry]):
        self.text = text
        self.toks = _lex(text)
        self.i = 0
        self.registry = registry

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.text != text:
            raise ExprSyntaxError(f"expected {text!r}, found {t.text!r}", t.pos)
        return t

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ExprSyntaxError(f"trailing input {t.text!r}", t.pos)
        return e

    def expr(self) -> Expr:
        parts = [self.term()]
        while self.peek().text in ("+", "-"):
            op = self.next().text
            rhs = self.term()
            parts.append(rhs if op == "+" else make_prod([rat(-1), rhs]))
        return make_sum(parts)

    def term(self) -> Expr:
        parts = [self.unary()]
        while self.peek().text in ("*", "/"):
            op = self.next().text
            rhs = self.unary()
            parts.append(rhs if op == "*" else make_pow(rhs, -1))
        return make_prod(parts)

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.next()
            return make_prod([rat(-1), self.unary()])
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek().text == "^":
            tok = self.next()
            exponent = self.unary()
            from .errors import NonIntegerExponent

            try:
                return make_pow(base, exponent)
            except NonIntegerExponent:
                raise ExprSyntaxError("exponent must be an integer", tok.pos)
        return base

    def primary(self) -> Expr:
        t = self.next()
        if t.kind == "num":
            return rat(int(t.text))
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            name = t.text
            if name == "pi":
                return PI
            if name == "sgn_n":
                return ALT
            if name in ("n", "t") and self.peek().text not in ("(", "["):
                return Index(name)
            primes = 0
            while self.peek().text == "'":
                self.next()
                primes += 1
            nxt = self.peek()
            if nxt.text == "(":
                known = name in ("sin", "cos", "exp") or (
                    self.registry is not None and self.registry.known(name)
                )
                if not known:
                    raise UnknownSymbol(name, t.pos)
                self.next()
                arg = self.expr()
                self.expect(")")
                return make_fnapp(name, arg, primes)
            if nxt.text == "[":
                if primes:
                    raise ExprSyntaxError("primed sequence atoms are not supported", nxt.pos)
                self.next()
                off = self._index()
                self.expect("]")
                return Seq(name, off)
            if primes:
                return Deriv(name, primes)
            return Var(name)
        raise ExprSyntaxError(f"unexpected token {t.text!r}", t.pos)

    def _index(self) -> int:
        t = self.next()
        if t.text == "n":
            nxt = self.peek()
            if nxt.text in ("+", "-"):
                sign = 1 if self.next().text == "+" else -1
                num = self.next()
                if num.kind != "num":
                    raise ExprSyntaxError("expected integer offset", num.pos)
                return sign * int(num.text)
            return 0
        sign = 1
        if t.text in ("+", "-"):
            sign = 1 if t.text == "+" else -1
            t = self.next()
        if t.kind != "num":
            raise ExprSyntaxError("expected sequence index", t.pos)
        return sign * int(t.text)


def parse_expr(text: str, registry: Optional[FnRegistry] = None) -> Expr:
    """Parse `text` into a canonical expression."""
    return _Parser(text, registry).parse()
