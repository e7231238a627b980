"""Arithmetic expressions over a single free variable.

Rates and coefficients in model files are written as small formulas such as
``"(i+1)^2"`` or ``"exp(-(x/2)^4)"``.  This module tokenizes and parses them
with a recursive-descent parser into an immutable tree that evaluates on
scalars or numpy arrays.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "ExpressionError",
    "Node",
    "RateFunction",
    "parse_rate_expr",
    "FUNCTIONS",
]


class ExpressionError(ValueError):
    """Raised for malformed expressions; ``position`` is a 0-based offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        where = f" at position {position}"
        if text:
            where += f" in {text!r}"
        super().__init__(message + where)


def _gamma(x):
    x = np.asarray(x, dtype=float)
    bad = (x <= 0) & (x == np.round(x))
    if np.any(bad):
        raise FloatingPointError("gamma has a pole at nonpositive integers")
    return special.gamma(x)


def _min(*args):
    return np.minimum.reduce(np.broadcast_arrays(*args))


def _max(*args):
    return np.maximum.reduce(np.broadcast_arrays(*args))


# name -> (callable, min arity, max arity); None means variadic
FUNCTIONS = {
    "exp": (np.exp, 1, 1),
    "log": (np.log, 1, 1),
    "sqrt": (np.sqrt, 1, 1),
    "abs": (np.abs, 1, 1),
    "pow": (np.power, 2, 2),
    "min": (_min, 2, None),
    "max": (_max, 2, None),
    "gamma": (_gamma, 1, 1),
}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Node:
    kind: str  # "num", "var", "neg", "bin", "call"
    value: object = None
    args: tuple = ()

    def evaluate(self, env_value):
        k = self.kind
        if k == "num":
            return self.value
        if k == "var":
            return env_value
        if k == "neg":
            return -self.args[0].evaluate(env_value)
        if k == "bin":
            lhs = self.args[0].evaluate(env_value)
            rhs = self.args[1].evaluate(env_value)
            op = self.value
            if op == "+":
                return lhs + rhs
            if op == "-":
                return lhs - rhs
            if op == "*":
                return lhs * rhs
            if op == "/":
                return np.divide(lhs, rhs)
            return np.power(lhs, rhs)
        fn = FUNCTIONS[self.value][0]
        return fn(*(a.evaluate(env_value) for a in self.args))

    def unparse(self) -> str:
        k = self.kind
        if k == "num":
            return repr(float(self.value))
        if k == "var":
            return str(self.value)
        if k == "neg":
            return f"(-{self.args[0].unparse()})"
        if k == "bin":
            return f"({self.args[0].unparse()}{self.value}{self.args[1].unparse()})"
        inner = ",".join(a.unparse() for a in self.args)
        return f"{self.value}({inner})"

    def free_names(self) -> set:
        if self.kind == "var":
            return {self.value}
        out = set()
        for a in self.args:
            out |= a.free_names()
        return out


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            tok = m.group(kind)
            if kind == "op" and tok == "**":
                tok = "^"
            tokens.append((kind, tok, pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variable: str | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.variable = variable

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, tok, pos = self.take()
        if tok != op or kind != "op":
            found = "end of input" if kind == "end" else repr(tok)
            raise ExpressionError(f"expected {op!r}, found {found}", pos, self.text)

    def parse(self) -> Node:
        if self.peek()[0] == "end":
            raise ExpressionError("empty expression", 0, self.text)
        node = self.expr()
        kind, tok, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {tok!r}", pos, self.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Node("bin", op, (node, self.term()))
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Node("bin", op, (node, self.unary()))
        return node

    def unary(self) -> Node:
        kind, tok, _ = self.peek()
        if kind == "op" and tok in ("+", "-"):
            self.take()
            operand = self.unary()
            return operand if tok == "+" else Node("neg", None, (operand,))
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Node("bin", "^", (base, self.unary()))
        return base

    def atom(self) -> Node:
        kind, tok, pos = self.take()
        if kind == "num":
            return Node("num", float(tok))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(tok, pos)
            if tok in FUNCTIONS:
                raise ExpressionError(f"function {tok!r} used without arguments", pos, self.text)
            if self.variable is None:
                self.variable = tok
            elif tok != self.variable:
                raise ExpressionError(
                    f"unknown identifier {tok!r} (free variable is {self.variable!r})",
                    pos,
                    self.text,
                )
            return Node("var", tok)
        if kind == "op" and tok == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(tok)
        raise ExpressionError(f"expected a number, name or '(', found {found}", pos, self.text)

    def call(self, name: str, pos: int) -> Node:
        if name not in FUNCTIONS:
            raise ExpressionError(f"unknown function {name!r}", pos, self.text)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.take()
            args.append(self.expr())
        self.expect(")")
        _, lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if lo == hi else f"at least {lo}"
            raise ExpressionError(
                f"{name}() takes {want} argument(s), got {len(args)}", pos, self.text
            )
        return Node("call", name, tuple(args))


@dataclass(frozen=True)
class RateFunction:
    """A parsed one-variable formula, callable on floats or arrays.

    >>> f = parse_rate_expr("i^2")
    >>> f(3)
    9.0
    """

    text: str
    variable: str | None
    tree: Node = field(repr=False, compare=False)

    def __call__(self, value):
        with np.errstate(all="ignore"):
            if np.ndim(value) == 0:
                out = self.tree.evaluate(float(value))
                return float(out)
            arr = np.asarray(value, dtype=float)
            out = self.tree.evaluate(arr)
            return np.broadcast_to(np.asarray(out, dtype=float), arr.shape).copy()

    @property
    def is_constant(self) -> bool:
        return not self.tree.free_names()

    def unparse(self) -> str:
        return self.tree.unparse()

    def scaled(self, factor: float) -> "RateFunction":
        """Return ``factor * self`` as a new function."""
        return parse_rate_expr(f"{factor!r}*({self.text})", self.variable)

    def __str__(self):
        return self.text


def parse_rate_expr(text: str, variable: str | None = None) -> RateFunction:
    """Parse ``text`` into a :class:`RateFunction`.

    Parameters
    ----------
    text : str
        Formula using numbers, the free variable, ``+ - * / ^`` and the
        functions in :data:`FUNCTIONS`.
    variable : str, optional
        Name of the free variable.  When omitted, the first non-function
        identifier becomes the variable and any other name is rejected.

    Raises
    ------
    ExpressionError
        On any syntax error, unknown identifier or arity mismatch.
    """
    if not isinstance(text, str):
        raise ExpressionError(f"expression must be a string, got {type(text).__name__}", 0)
    parser = _Parser(text, variable)
    tree = parser.parse()
    var = variable if variable is not None else parser.variable
    if isinstance(tree, Node) and tree.kind == "num" and not math.isfinite(tree.value):
        raise ExpressionError("numeric literal is not finite", 0, text)
    return RateFunction(text=text, variable=var, tree=tree)
