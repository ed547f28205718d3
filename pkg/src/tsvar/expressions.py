"""Tiny arithmetic expression language for problem files.

Grammar (infix, right-associative power, ``**`` accepted as an alias of
``^``)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom (("^" | "**") unary)?
    atom   := NUMBER | NAME "(" expr ")" | NAME | "(" expr ")"

Names resolve to the variables declared at compile time (typically ``t`` and
``u1..un`` / ``v1..vn``), the constants ``pi`` and ``e``, or one of the
functions exp, log, sqrt, sin, cos, tan.  Everything evaluates through numpy,
so compiled expressions broadcast over arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .errors import ExpressionError

_FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
}

_CONSTANTS = {"pi": np.pi, "e": np.e}

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()])"
    r")"
)


def tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            tail = src[pos:].strip()
            if not tail:
                break
            raise ExpressionError(f"cannot tokenize {tail[:12]!r} in {src!r}")
        pos = m.end()
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num"))))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op))
    tokens.append(("end", None))
    return tokens


class _Parser:
    def __init__(self, src, variables):
        self.src = src
        self.variables = frozenset(variables)
        self.tokens = tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r} in {self.src!r}, got {val!r}")

    def parse(self):
        fn = self.expr()
        kind, val = self.peek()
        if kind != "end":
            raise ExpressionError(f"trailing input {val!r} in {self.src!r}")
        return fn

    def expr(self):
        fn = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.take()
            rhs = self.term()
            if op == "+":
                fn = (lambda a, b: lambda env: a(env) + b(env))(fn, rhs)
            else:
                fn = (lambda a, b: lambda env: a(env) - b(env))(fn, rhs)
        return fn

    def term(self):
        fn = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.take()
            rhs = self.unary()
            if op == "*":
                fn = (lambda a, b: lambda env: a(env) * b(env))(fn, rhs)
            else:
                fn = (lambda a, b: lambda env: a(env) / b(env))(fn, rhs)
        return fn

    def unary(self):
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        if self.peek() == ("op", "-"):
            self.take()
            inner = self.unary()
            return lambda env: -inner(env)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            exponent = self.unary()  # right associative
            return lambda env: np.power(base(env), exponent(env))
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return lambda env, _v=val: _v
        if kind == "name":
            if self.peek() == ("op", "("):
                if val not in _FUNCTIONS:
                    raise ExpressionError(f"unknown function {val!r} in {self.src!r}")
                self.take()
                arg = self.expr()
                self.expect_op(")")
                f = _FUNCTIONS[val]
                return lambda env, _f=f, _a=arg: _f(_a(env))
            if val in _CONSTANTS:
                return lambda env, _v=_CONSTANTS[val]: _v
            if val not in self.variables:
                raise ExpressionError(
                    f"unknown name {val!r} in {self.src!r}; "
                    f"allowed variables: {sorted(self.variables)}"
                )
            return lambda env, _v=val: env[_v]
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ExpressionError(f"unexpected {val!r} in {self.src!r}")


@dataclass(frozen=True)
class Expression:
    """A compiled expression; call with keyword arrays for its variables."""

    source: str
    variables: Tuple[str, ...]
    _fn: Callable

    def __call__(self, **values):
        # only names actually referenced matter; env lookups raise otherwise
        env = {k: np.asarray(v, dtype=float) for k, v in values.items()}
        try:
            with np.errstate(all="ignore"):
                out = self._fn(env)
        except KeyError as exc:  # referenced variable not supplied
            raise ExpressionError(
                f"missing variable {exc.args[0]!r} for {self.source!r}"
            ) from None
        return np.asarray(out, dtype=float)


def compile_expression(src, variables=("t",)):
    """Compile ``src`` against the allowed variable names."""
    if not isinstance(src, str) or not src.strip():
        raise ExpressionError(f"expected a nonempty expression string, got {src!r}")
    parser = _Parser(src, variables)
    return Expression(source=src, variables=tuple(variables), _fn=parser.parse())


def lagrangian_variables(n):
    """(t, u1..un, v1..vn) — the naming scheme for integrand expressions."""
    names = ["t"]
    names += [f"u{i + 1}" for i in range(n)]
    names += [f"v{i + 1}" for i in range(n)]
    return tuple(names)
