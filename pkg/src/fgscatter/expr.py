"""A small expression language for metric data, test functions and warps.

Grammar (``^`` binds tightest and is right-associative, then unary minus,
then ``* /``, then ``+ -``)::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := ("-" | "+") unary | power
    power := atom ("^" unary)?
    atom  := number | name | name "(" expr ")" | "(" expr ")"
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .series import SCALAR, PowerLogSeries, series_exp, series_inverse, series_log_unipotent, series_mul

VARIABLES = ("y1", "y2", "y3", "y4", "x")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log}


class ExpressionError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Number, Name, Unary, Binary, Call]

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))")


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None:
            start = len(src) - len(src[pos:].lstrip())
            raise ExpressionError(f"unexpected character {src[start]!r}", _byte_offset(src, start))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(src, start)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(src, len(src))))
    return tokens


def _byte_offset(src, index):
    return len(src[:index].encode("utf-8"))


class _Parser:
    def __init__(self, src):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def accept(self, *ops):
        kind, text, _ = self.peek()
        if kind == "op" and text in ops:
            self.i += 1
            return text
        return None

    def parse(self):
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            if text == ")":
                raise ExpressionError("unbalanced parentheses: unexpected ')'", off)
            raise ExpressionError(f"unexpected {text!r}", off)
        return node

    def expr(self):
        node = self.term()
        while (op := self.accept("+", "-")) is not None:
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while (op := self.accept("*", "/")) is not None:
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        op = self.accept("-", "+")
        if op is not None:
            return Unary(op, self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^"):
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, text, off = self.take()
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ExpressionError(f"number {text!r} is not finite", off)
            return Number(value)
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    if text in VARIABLES or text in CONSTANTS:
                        raise ExpressionError(f"'{text}' is not a function", off)
                    raise ExpressionError(f"unknown identifier '{text}'", off)
                self.take()
                arg = self.expr()
                kind2, text2, off2 = self.peek()
                if text2 == ",":
                    raise ExpressionError(f"arity mismatch: '{text}' takes 1 argument", off2)
                if text2 != ")":
                    raise ExpressionError("unbalanced parentheses: expected ')'", off2)
                self.take()
                return Call(text, arg)
            if text in FUNCTIONS:
                raise ExpressionError(f"arity mismatch: '{text}' takes 1 argument, got none", off)
            if text not in VARIABLES and text not in CONSTANTS:
                raise ExpressionError(f"unknown identifier '{text}'", off)
            return Name(text)
        if kind == "op" and text == "(":
            node = self.expr()
            kind2, text2, off2 = self.peek()
            if text2 != ")":
                raise ExpressionError("unbalanced parentheses: expected ')'", off2)
            self.take()
            return node
        if kind == "op" and text == ")":
            raise ExpressionError("unbalanced parentheses: unexpected ')'", off)
        if kind == "end":
            raise ExpressionError("unexpected end of input", off)
        raise ExpressionError(f"unexpected {text!r}", off)


def parse_expression(src: str) -> Node:
    return _Parser(src).parse()


def to_source(node: Node) -> str:
    """Fully parenthesized source text; parses back to the same tree."""
    if isinstance(node, Number):
        return repr(node.value)
    if isinstance(node, Name):
        return node.name
    if isinstance(node, Unary):
        return f"({node.op}{to_source(node.operand)})"
    if isinstance(node, Binary):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    return f"{node.func}({to_source(node.arg)})"


def free_variables(node: Node) -> set:
    if isinstance(node, Name):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Number):
        return set()
    if isinstance(node, Unary):
        return free_variables(node.operand)
    if isinstance(node, Binary):
        return free_variables(node.left) | free_variables(node.right)
    return free_variables(node.arg)


def evaluate(node: Node, env: dict):
    """Evaluate with numpy semantics; ``env`` maps variable names to values or arrays."""
    if isinstance(node, Number):
        return node.value
    if isinstance(node, Name):
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        if node.name not in env:
            raise ValueError(f"variable '{node.name}' has no value")
        return env[node.name]
    if isinstance(node, Unary):
        v = evaluate(node.operand, env)
        return -v if node.op == "-" else v
    if isinstance(node, Binary):
        a, b = evaluate(node.left, env), evaluate(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        return np.power(a, b)
    return FUNCTIONS[node.func](evaluate(node.arg, env))


def differentiate(node: Node, var: str) -> Node:
    """Symbolic derivative (unsimplified)."""
    d = lambda n: differentiate(n, var)
    if isinstance(node, Number):
        return Number(0.0)
    if isinstance(node, Name):
        return Number(1.0 if node.name == var else 0.0)
    if isinstance(node, Unary):
        return Unary(node.op, d(node.operand))
    if isinstance(node, Binary):
        u, v = node.left, node.right
        if node.op in "+-":
            return Binary(node.op, d(u), d(v))
        if node.op == "*":
            return Binary("+", Binary("*", d(u), v), Binary("*", u, d(v)))
        if node.op == "/":
            return Binary("/", Binary("-", Binary("*", d(u), v), Binary("*", u, d(v))), Binary("^", v, Number(2.0)))
        if var not in free_variables(v):
            return Binary("*", Binary("*", v, Binary("^", u, Binary("-", v, Number(1.0)))), d(u))
        return Binary("*", node, Binary("+", Binary("*", d(v), Call("log", u)), Binary("/", Binary("*", v, d(u)), u)))
    u = node.arg
    if node.func == "sin":
        outer = Call("cos", u)
    elif node.func == "cos":
        outer = Unary("-", Call("sin", u))
    elif node.func == "exp":
        outer = node
    else:
        outer = Binary("/", Number(1.0), u)
    return Binary("*", outer, d(u))


def taylor(node: Node, var: str, order: int) -> np.ndarray:
    """Taylor coefficients about var = 0 through ``order`` (series arithmetic on the tree)."""
    extra = free_variables(node) - {var}
    if extra:
        raise ValueError(f"expression depends on {sorted(extra)} besides {var}")
    return np.real_if_close(np.asarray(_series(node, var, order).plain, dtype=complex), tol=1e3)


def _const(value, order):
    return PowerLogSeries.constant(SCALAR, complex(value), order)


def _series(node, var, order) -> PowerLogSeries:
    if isinstance(node, Number):
        return _const(node.value, order)
    if isinstance(node, Name):
        if node.name in CONSTANTS:
            return _const(CONSTANTS[node.name], order)
        coeffs = [0j] * (order + 1)
        if order >= 1:
            coeffs[1] = 1.0 + 0j
        return PowerLogSeries(SCALAR, 0, tuple(coeffs))
    if isinstance(node, Unary):
        s = _series(node.operand, var, order)
        return s.scale(-1.0) if node.op == "-" else s
    if isinstance(node, Call):
        a = _series(node.arg, var, order)
        if node.func == "exp":
            return series_exp(a)
        if node.func == "log":
            return _log(a, order)
        ia = series_exp(a.scale(1j))
        ib = series_exp(a.scale(-1j))
        if node.func == "sin":
            return (ia - ib).scale(1 / 2j)
        return (ia + ib).scale(0.5)
    a = _series(node.left, var, order)
    if node.op == "^" and var not in free_variables(node.right):
        p = evaluate(node.right, {})
        if float(p) == int(p):
            return _int_power(a, int(p), order)
        return series_exp(_log(a, order).scale(p))
    b = _series(node.right, var, order)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return series_mul(a, b)
    if node.op == "/":
        return series_mul(a, series_inverse(b))
    return series_exp(series_mul(b, _log(a, order)))


def _log(a, order):
    a0 = complex(a.plain[0])
    if a0 == 0:
        raise ValueError("log of a series vanishing at the expansion point")
    return series_log_unipotent(a.scale(1 / a0)) + _const(np.log(a0), order)


def _int_power(a, p, order):
    out = _const(1.0, order)
    base = a if p >= 0 else series_inverse(a)
    for _ in range(abs(p)):
        out = series_mul(out, base)
    return out


def grid_function(node: Node, coords) -> np.ndarray:
    """Evaluate on a grid given the coordinate arrays y1..yn."""
    env = {f"y{i + 1}": c for i, c in enumerate(coords)}
    value = evaluate(node, env)
    return np.broadcast_to(np.asarray(value, dtype=float), coords[0].shape).copy()
