"""Recursive-descent parser for vector-field component expressions.

Grammar::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | atom
    atom    := NUMBER | "t" | "x" DIGITS | FUNC "(" args ")" | "(" expr ")"
    FUNC    := sin | cos | exp | pow

Trees evaluate on NumPy arrays as well as floats, so one parsed component can
be applied to a whole grid at once.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, position: int, expected: str = ""):
        super().__init__(f"{message} at position {position}" + (f" (expected {expected})" if expected else ""))
        self.position = position
        self.expected = expected


class UnknownVariable(ValueError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown variable {name!r} at position {position}")
        self.name = name
        self.position = position


class EvalError(ArithmeticError):
    pass


FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "pow": 2}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/(),]))"
)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # "t" or "x<k>"
    index: int = -1  # component index, -1 for t


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


def tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            at = len(source) - len(source[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {source[at]!r}", at)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, dim: int):
        self.tokens = tokenize(source)
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value:
            raise ExprSyntaxError(f"found {text or 'end of input'!r}", pos, repr(value))

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ExprSyntaxError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", pos
                    )
                return Call(text, tuple(args))
            if text == "t":
                return Var("t")
            m = re.fullmatch(r"x(\d+)", text)
            if m and int(m.group(1)) < self.dim:
                return Var(text, int(m.group(1)))
            raise UnknownVariable(text, pos)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"found {text or 'end of input'!r}", pos, "number, variable, function or '('")


def parse_field_expr(source: str, dim: int):
    """Parse one component expression over ``t`` and ``x0 .. x{dim-1}``."""
    p = _Parser(source, dim)
    node = p.expr()
    kind, text, pos = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {text!r}", pos, "operator or end of input")
    return node


def evaluate(node, t, x):
    """Evaluate at time ``t`` and state ``x`` (shape ``(d,)`` or ``(n, d)``)."""
    with np.errstate(all="raise"):
        try:
            return _eval(node, t, x)
        except FloatingPointError as exc:
            raise EvalError(str(exc)) from exc


def _eval(node, t, x):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return t if node.index < 0 else np.asarray(x)[..., node.index]
    if isinstance(node, Neg):
        return -_eval(node.operand, t, x)
    if isinstance(node, BinOp):
        a = _eval(node.left, t, x)
        b = _eval(node.right, t, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise EvalError("division by zero")
        return a / b
    if isinstance(node, Call):
        args = [_eval(a, t, x) for a in node.args]
        if node.func == "pow":
            base, ex = np.asarray(args[0], dtype=float), np.asarray(args[1], dtype=float)
            if np.any((base < 0) & (ex != np.round(ex))) or np.any((base == 0) & (ex < 0)):
                raise EvalError("pow domain error")
            return np.power(base, ex)
        out = getattr(np, node.func)(args[0])
        if not np.all(np.isfinite(out)):
            raise EvalError(f"{node.func} overflow")
        return out
    raise TypeError(f"not an expression node: {node!r}")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_source(node, parent: int = 0, right: bool = False) -> str:
    """Pretty-print with the minimal parentheses that preserve the tree."""
    if isinstance(node, Num):
        text = repr(node.value)
        return f"({text})" if node.value < 0 or text in ("inf", "nan") else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + to_source(node.operand, 3)
    if isinstance(node, Call):
        return f"{node.func}(" + ", ".join(to_source(a) for a in node.args) + ")"
    prec = _PREC[node.op]
    text = f"{to_source(node.left, prec)} {node.op} {to_source(node.right, prec, right=True)}"
    if prec < parent or (right and prec == parent):
        return f"({text})"
    return text


def compile_components(sources: list[str], dim: int):
    """Parse ``dim`` component strings into a vectorized ``v(t, x)``."""
    if len(sources) != dim:
        raise ValueError(f"need {dim} component expressions, got {len(sources)}")
    trees = [parse_field_expr(s, dim) for s in sources]

    def func(t, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        cols = [np.broadcast_to(np.asarray(evaluate(tr, t, x), dtype=float), shape) for tr in trees]
        return np.stack(cols, axis=-1)

    return func, trees

