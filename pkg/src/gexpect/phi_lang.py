"""A tiny expression language for bounded Lipschitz test functions.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := number | 'x'k | fn '(' expr (',' expr)* ')' | '(' expr ')' | '-' factor
    fn     := cos | sin | exp | abs | min | max | clip

There is no division, so every expression is Lipschitz on bounded sets, and
the parsed function is always clipped to ``[-bound, bound]``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InvalidArgumentError, PhiSyntaxError

__all__ = ["Num", "Var", "Neg", "BinOp", "Call", "Functional", "parse", "pretty",
           "CATALOG", "from_catalog", "resolve"]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-', '*'
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Var, Neg, BinOp, Call]

# name -> (min args, max args); None means unbounded
_FUNCTIONS = {
    "cos": (1, 1),
    "sin": (1, 1),
    "exp": (1, 1),
    "abs": (1, 1),
    "min": (2, None),
    "max": (2, None),
    "clip": (3, 3),
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x(?P<k>\d+))"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*(),]))")


def _tokenize(source):
    pos, tokens = 0, []
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise PhiSyntaxError(f"unexpected character {source[bad]!r}", bad)
        start = m.start(m.lastgroup if m.lastgroup != "k" else "var")
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), start))
        elif m.group("var") is not None:
            tokens.append(("var", int(m.group("k")), start))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), start))
        else:
            tokens.append(("op", m.group("op"), start))
        pos = m.end()
    tokens.append(("end", None, len(source)))
    return tokens


class _Parser:
    def __init__(self, source, arity):
        self.tokens = _tokenize(source)
        self.i = 0
        self.arity = arity

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            got = "end of input" if kind == "end" else repr(val)
            raise PhiSyntaxError(f"expected {op!r}, got {got}", pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise PhiSyntaxError(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            node = BinOp("*", node, self.factor())
        return node

    def factor(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(val)
        if kind == "var":
            if not 1 <= val <= self.arity:
                raise PhiSyntaxError(
                    f"x{val} out of range for arity {self.arity}", pos)
            return Var(val)
        if kind == "op" and val == "-":
            return Neg(self.factor())
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if val not in _FUNCTIONS:
                raise PhiSyntaxError(f"unknown function {val!r}", pos)
            self.expect("(")
            args = [self.expr()]
            while self.peek()[0] == "op" and self.peek()[1] == ",":
                self.take()
                args.append(self.expr())
            self.expect(")")
            lo, hi = _FUNCTIONS[val]
            if len(args) < lo or (hi is not None and len(args) > hi):
                want = str(lo) if lo == hi else f"at least {lo}"
                raise PhiSyntaxError(
                    f"{val}() takes {want} argument(s), got {len(args)}", pos)
            return Call(val, tuple(args))
        got = "end of input" if kind == "end" else repr(val)
        raise PhiSyntaxError(f"unexpected {got}", pos)


def _eval(node, cols):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return cols[node.index - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, cols)
    if isinstance(node, BinOp):
        a, b = _eval(node.left, cols), _eval(node.right, cols)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        return a * b
    args = [_eval(a, cols) for a in node.args]
    name = node.name
    if name == "cos":
        return np.cos(args[0])
    if name == "sin":
        return np.sin(args[0])
    if name == "exp":
        return np.exp(args[0])
    if name == "abs":
        return np.abs(args[0])
    if name == "min":
        out = args[0]
        for a in args[1:]:
            out = np.minimum(out, a)
        return out
    if name == "max":
        out = args[0]
        for a in args[1:]:
            out = np.maximum(out, a)
        return out
    # clip(v, lo, hi) == min(max(v, lo), hi)
    return np.minimum(np.maximum(args[0], args[1]), args[2])


def _fmt_num(v):
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def pretty(node) -> str:
    """Fully parenthesized source for ``node``; re-parsing yields the same tree."""
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        return f"({s})" if node.value < 0 else s
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"-({pretty(node.operand)})"
    if isinstance(node, BinOp):
        return f"({pretty(node.left)} {node.op} {pretty(node.right)})"
    return f"{node.name}({', '.join(pretty(a) for a in node.args)})"


def _range_and_lipschitz(node, radius):
    """Interval enclosure and Lipschitz bound (sup-norm in x) on [-radius, radius]^n."""
    if isinstance(node, Num):
        return node.value, node.value, 0.0
    if isinstance(node, Var):
        return -radius, radius, 1.0
    if isinstance(node, Neg):
        lo, hi, L = _range_and_lipschitz(node.operand, radius)
        return -hi, -lo, L
    if isinstance(node, BinOp):
        alo, ahi, La = _range_and_lipschitz(node.left, radius)
        blo, bhi, Lb = _range_and_lipschitz(node.right, radius)
        if node.op == "+":
            return alo + blo, ahi + bhi, La + Lb
        if node.op == "-":
            return alo - bhi, ahi - blo, La + Lb
        prods = [alo * blo, alo * bhi, ahi * blo, ahi * bhi]
        amax, bmax = max(abs(alo), abs(ahi)), max(abs(blo), abs(bhi))
        return min(prods), max(prods), La * bmax + Lb * amax
    parts = [_range_and_lipschitz(a, radius) for a in node.args]
    name = node.name
    if name in ("cos", "sin"):
        return -1.0, 1.0, parts[0][2]
    if name == "exp":
        lo, hi, L = parts[0]
        return float(np.exp(lo)), float(np.exp(hi)), L * float(np.exp(hi))
    if name == "abs":
        lo, hi, L = parts[0]
        if lo >= 0:
            return lo, hi, L
        if hi <= 0:
            return -hi, -lo, L
        return 0.0, max(-lo, hi), L
    if name in ("min", "max"):
        los = [p[0] for p in parts]
        his = [p[1] for p in parts]
        L = max(p[2] for p in parts)
        if name == "min":
            return min(los), min(his), L
        return max(los), max(his), L
    (vlo, vhi, Lv), (llo, lhi, Ll), (hlo, hhi, Lh) = parts
    return max(min(vlo, hhi), llo), min(max(vhi, llo), hhi), Lv + Ll + Lh


@dataclass(frozen=True)
class Functional:
    """A parsed test function ``x -> clip(expr(x), -bound, bound)``.

    Calling the object with ``arity`` positional arguments evaluates it
    elementwise (arrays broadcast); :meth:`eval` takes a single point.
    """

    source: str
    arity: int
    bound: float
    tree: Node = field(compare=False, repr=False)

    def __call__(self, *cols):
        if len(cols) != self.arity:
            raise InvalidArgumentError(
                f"functional has arity {self.arity}, got {len(cols)} arguments")
        with np.errstate(over="ignore", invalid="ignore"):
            raw = _eval(self.tree, [np.asarray(c, dtype=float) for c in cols])
            return np.clip(raw, -self.bound, self.bound)

    def eval(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.arity,):
            raise InvalidArgumentError(
                f"expected a point of length {self.arity}, got shape {x.shape}")
        return float(self(*x))

    def lipschitz_bound(self, radius: float) -> float:
        """Analytic Lipschitz constant on ``[-radius, radius]^arity`` (sup-norm)."""
        return _range_and_lipschitz(self.tree, float(radius))[2]

    def pretty(self) -> str:
        return pretty(self.tree)


def parse(source: str, arity: int = 1, bound: float = 1.0) -> Functional:
    if int(arity) != arity or arity < 1:
        raise InvalidArgumentError("arity must be a positive integer")
    if not bound > 0 or not np.isfinite(bound):
        raise InvalidArgumentError("bound must be a positive finite number")
    tree = _Parser(source, int(arity)).parse()
    return Functional(source, int(arity), float(bound), tree)


CATALOG = {
    "cos1": ("cos(x1)", 1, 1.0),
    "sq": ("x1*x1", 1, 25.0),
    "lin": ("x1", 1, 10.0),
    "negsq": ("-(x1*x1)", 1, 25.0),
}


def from_catalog(name: str) -> Functional:
    try:
        src, arity, bound = CATALOG[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown catalog functional {name!r}; known: {', '.join(CATALOG)}") from None
    return parse(src, arity, bound)


def resolve(spec: str, arity: int | None = None, bound: float | None = None) -> Functional:
    """Catalog name or expression; arity defaults to the highest x_k used."""
    if spec in CATALOG:
        src, cat_arity, cat_bound = CATALOG[spec]
        if arity is not None and arity != cat_arity:
            raise PhiSyntaxError(f"catalog functional {spec!r} has arity {cat_arity}, "
                                 f"not {arity}", 0)
        return parse(src, cat_arity, cat_bound if bound is None else bound)
    if arity is None:
        ks = [int(k) for k in re.findall(r"x(\d+)", spec)]
        arity = max(ks) if ks else 1
    return parse(spec, arity, 1.0 if bound is None else bound)
