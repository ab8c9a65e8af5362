"""A small arithmetic expression language over x1..xN.

Grammar (whitespace is insignificant)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative, binds tighter than '-'
    atom   := NUMBER | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation is vectorised: ``evaluate(e, points)`` accepts an ``(M, N)`` array.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import EvalDomain, ParseError

FUNCTIONS = {"abs": (1, 1), "sqrt": (1, 1), "exp": (1, 1), "log": (1, 1),
             "min": (2, None), "max": (2, None), "pow": (2, 2)}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple["Node", ...]


Node = Union[Num, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class Expression:
    source: str
    dim: int
    ast: Node

    def __call__(self, points):
        return evaluate(self, points)

    def to_source(self) -> str:
        return pretty(self.ast)


def _tokenize(src: str):
    toks = []
    pos = 0
    raw = src.encode("utf-8")
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            if src[pos:].strip() == "":
                break
            off = len(src[:pos].encode("utf-8")) + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ParseError("unexpected character", offset=off,
                             expected=("number", "variable", "function", "(", "-"))
        kind = m.lastgroup
        start = len(src[: m.start(kind)].encode("utf-8"))
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", len(raw)))
    return toks


class _Parser:
    def __init__(self, src: str, dim: int):
        self.toks = _tokenize(src)
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, text, off = self.peek()
        what = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {what}", offset=off, expected=expected)

    def expect(self, text):
        if self.peek()[1] != text or self.peek()[0] == "end":
            self.fail((text,))
        self.take()

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(("+", "-", "*", "/", "^", "end of input"))
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, text, off = self.peek()
        if kind == "num":
            self.take()
            return Num(float(text))
        if kind == "name":
            self.take()
            if text in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == "," and self.peek()[0] == "op":
                    self.take()
                    args.append(self.expr())
                if self.peek()[1] != ")":
                    self.fail((",", ")"))
                self.take()
                lo, hi = FUNCTIONS[text]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise ParseError(f"{text} takes {lo}..{hi or 'many'} arguments, got {len(args)}",
                                     offset=off)
                return Call(text, tuple(args))
            m = re.fullmatch(r"x([1-9][0-9]*)", text)
            if m is None:
                raise ParseError(f"unknown name {text!r}", offset=off,
                                 expected=tuple(FUNCTIONS) + ("x1..x%d" % self.dim,))
            idx = int(m.group(1))
            if idx > self.dim:
                raise ParseError(f"variable {text} exceeds dimension {self.dim}", offset=off,
                                 expected=("x1..x%d" % self.dim,))
            return Var(idx)
        if kind == "op" and text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        self.fail(("number", "variable", "function", "(", "-"))


def parse_expression(src: str, dim: int) -> Expression:
    if not isinstance(src, str) or not src.strip():
        raise ParseError("empty expression", offset=0, expected=("number", "variable", "function", "(", "-"))
    return Expression(src, dim, _Parser(src, dim).parse())


def pretty(node: Node) -> str:
    """Render with explicit parentheses so that re-parsing is exact."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{pretty(node.arg)})"
    if isinstance(node, BinOp):
        return f"({pretty(node.left)} {node.op} {pretty(node.right)})"
    return f"{node.name}({', '.join(pretty(a) for a in node.args)})"


def _domain_guard(values, what):
    if not np.all(np.isfinite(values)):
        raise EvalDomain(f"{what} produced a non-finite value")
    return values


def _eval(node: Node, x: np.ndarray):
    if isinstance(node, Num):
        return np.full(x.shape[0], node.value)
    if isinstance(node, Var):
        return x[:, node.index - 1]
    if isinstance(node, Neg):
        return -_eval(node.arg, x)
    if isinstance(node, BinOp):
        a = _eval(node.left, x)
        b = _eval(node.right, x)
        with np.errstate(all="ignore"):
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                if np.any(b == 0):
                    raise EvalDomain("division by zero")
                return a / b
            return _power(a, b)
    args = [_eval(a, x) for a in node.args]
    name = node.name
    with np.errstate(all="ignore"):
        if name == "abs":
            return np.abs(args[0])
        if name == "sqrt":
            if np.any(args[0] < 0):
                raise EvalDomain("sqrt of a negative number")
            return np.sqrt(args[0])
        if name == "exp":
            return _domain_guard(np.exp(args[0]), "exp")
        if name == "log":
            if np.any(args[0] <= 0):
                raise EvalDomain("log of a nonpositive number")
            return np.log(args[0])
        if name == "min":
            return np.minimum.reduce(args)
        if name == "max":
            return np.maximum.reduce(args)
        return _power(args[0], args[1])


def _power(a, b):
    with np.errstate(all="ignore"):
        out = np.power(a, b)
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise EvalDomain("power outside the real domain")
    return out


def evaluate(e: Expression, points) -> np.ndarray:
    """Evaluate at one point (shape (N,)) or many (shape (M, N))."""
    x = np.asarray(points, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[-1] != e.dim:
        raise ValueError(f"expected points of dimension {e.dim}")
    flat = x2.reshape(-1, e.dim)
    out = np.asarray(_eval(e.ast, flat), dtype=float)
    out = np.broadcast_to(out, (flat.shape[0],)).copy()
    if single:
        return float(out[0])
    return out.reshape(x2.shape[:-1])


def eval_expression(e: Expression, x) -> float:
    return evaluate(e, x)
