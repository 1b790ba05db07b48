"""Scalar expressions: parsing, serialization, evaluation and derivatives.

Grammar (``^`` is right-associative and binds tighter than unary minus)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | FUNC "(" expr ("," expr)* ")" | "(" expr ")"

Trees are immutable and hashable. Two evaluation routes exist:

* :func:`evaluate` / :func:`eval_grad` walk the tree with :class:`~varigauge.dual.Dual`
  numbers, one pass per derivative direction;
* :func:`compile_jet` generates straight-line forward-mode code for a batch of
  expressions, either over floats or over numpy arrays. This is the route the
  solvers use in their inner loops.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import dual as _d

FUNCTIONS = {"sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1, "atan2": 2}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        super().__init__(f"{message} at position {position}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier '{name}' at position {position}")


class ExprDomainError(ExprError):
    def __init__(self, message: str, subexpr: str):
        self.subexpr = subexpr
        super().__init__(f"{message} in '{subexpr}'")


# --------------------------------------------------------------------------
# AST


class Node:
    __slots__ = ()

    def __str__(self) -> str:
        return serialize(self)

    def variables(self) -> frozenset:
        return frozenset(_walk_vars(self))


@dataclass(frozen=True)
class Num(Node):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0.0:
            raise ValueError(f"literal must be finite and non-negative, got {self.value!r}")


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    fn: str
    args: tuple


Expression = Node


def _walk_vars(node: Node):
    if isinstance(node, Var):
        yield node.name
    elif isinstance(node, Neg):
        yield from _walk_vars(node.arg)
    elif isinstance(node, BinOp):
        yield from _walk_vars(node.left)
        yield from _walk_vars(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from _walk_vars(a)


# --------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str, symbols: Iterable[str]):
        self.source = source
        self.symbols = set(symbols)
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos, self.source)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", pos, self.source)
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
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ExprSyntaxError(f"function '{text}' must be called", pos, self.source)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ExprSyntaxError(
                        f"'{text}' takes {FUNCTIONS[text]} argument(s), got {len(args)}", pos, self.source
                    )
                return Call(text, tuple(args))
            if self.peek()[1] == "(":
                raise ExprSyntaxError(f"unknown function '{text}'", pos, self.source)
            if text not in self.symbols:
                raise UnknownIdentifierError(text, pos)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos, self.source)


def parse(source: str, symbols: Iterable[str]) -> Node:
    """Parse ``source`` into a tree whose variables are drawn from ``symbols``."""
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source if isinstance(source, str) else "")
    return _Parser(source, symbols).parse()


# --------------------------------------------------------------------------
# Serialization

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def serialize(node: Node) -> str:
    """Render ``node`` with the minimal parentheses needed to re-parse it identically."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        return text[:-2] if text.endswith(".0") else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(serialize(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = serialize(node.arg)
        if _prec(node.arg) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left, right = serialize(node.left), serialize(node.right)
        if node.op == "^":
            if _prec(node.left) < _ATOM_PREC:
                left = f"({left})"
            if _prec(node.right) < _NEG_PREC:
                right = f"({right})"
            return f"{left}^{right}"
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p and not isinstance(node.right, Neg):
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# Tree-walking evaluation with dual numbers

_DUAL_FUNCS = {
    "sin": _d.sin,
    "cos": _d.cos,
    "tan": _d.tan,
    "exp": _d.exp,
    "log": _d.log,
    "sqrt": _d.sqrt,
    "atan2": _d.atan2,
}


def _dual_eval(node: Node, env: Mapping[str, _d.Dual]) -> _d.Dual:
    if isinstance(node, Num):
        return _d.Dual(node.value)
    if isinstance(node, Var):
        return env[node.name]
    try:
        if isinstance(node, Neg):
            return -_dual_eval(node.arg, env)
        if isinstance(node, BinOp):
            a = _dual_eval(node.left, env)
            b = _dual_eval(node.right, env)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                return a / b
            return _d.power(a, b)
        if isinstance(node, Call):
            args = [_dual_eval(a, env) for a in node.args]
            return _DUAL_FUNCS[node.fn](*args)
    except _d.DualDomainError as exc:
        raise ExprDomainError(str(exc), serialize(node)) from None
    except OverflowError:
        raise ExprDomainError("overflow", serialize(node)) from None
    raise TypeError(f"not an expression node: {node!r}")


def _env(node: Node, point: Mapping[str, float], seed: str | None = None) -> dict:
    env = {}
    for name in node.variables():
        if name not in point:
            raise ExprError(f"no value supplied for symbol '{name}'")
        env[name] = _d.Dual(point[name], 1.0 if name == seed else 0.0)
    return env


def evaluate(node: Node, point: Mapping[str, float]) -> float:
    return _dual_eval(node, _env(node, point)).val


def eval_grad(node: Node, point: Mapping[str, float], wrt: Sequence[str]) -> tuple[float, list[float]]:
    """Value and exact partials of ``node`` at ``point``, one dual pass per name in ``wrt``."""
    if not wrt:
        return evaluate(node, point), []
    grads = []
    value = 0.0
    for name in wrt:
        env = _env(node, point, seed=name)
        res = _dual_eval(node, env)
        value = res.val
        grads.append(res.eps)
    return value, grads


# --------------------------------------------------------------------------
# Construction helpers with light constant folding


def const(value: float) -> Node:
    value = float(value)
    return Num(value) if value >= 0 else Neg(Num(-value))


def const_value(node: Node) -> float | None:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg) and isinstance(node.arg, Num):
        return -node.arg.value
    return None


def add(a: Node, b: Node) -> Node:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return const(ca + cb)
    if ca == 0.0:
        return b
    if cb == 0.0:
        return a
    if isinstance(b, Neg):
        return BinOp("-", a, b.arg)
    return BinOp("+", a, b)


def sub(a: Node, b: Node) -> Node:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return const(ca - cb)
    if cb == 0.0:
        return a
    if ca == 0.0:
        return neg(b)
    if isinstance(b, Neg):
        return BinOp("+", a, b.arg)
    return BinOp("-", a, b)


def neg(a: Node) -> Node:
    ca = const_value(a)
    if ca is not None:
        return const(-ca)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a: Node, b: Node) -> Node:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return const(ca * cb)
    if ca == 0.0 or cb == 0.0:
        return Num(0.0)
    if ca == 1.0:
        return b
    if cb == 1.0:
        return a
    if ca == -1.0:
        return neg(b)
    if cb == -1.0:
        return neg(a)
    return BinOp("*", a, b)


def div(a: Node, b: Node) -> Node:
    ca, cb = const_value(a), const_value(b)
    if cb == 1.0:
        return a
    if ca == 0.0 and cb != 0.0:
        return Num(0.0)
    if ca is not None and cb is not None and cb != 0.0:
        return const(ca / cb)
    return BinOp("/", a, b)


def pow_(a: Node, b: Node) -> Node:
    cb = const_value(b)
    if cb == 1.0:
        return a
    if cb == 0.0:
        return Num(1.0)
    return BinOp("^", a, b)


def call(fn: str, *args: Node) -> Node:
    return Call(fn, tuple(args))


# --------------------------------------------------------------------------
# Symbolic manipulation


def differentiate(node: Node, name: str) -> Node:
    """Symbolic partial derivative with respect to variable ``name``."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == name else 0.0)
    if name not in node.variables():
        return Num(0.0)
    if isinstance(node, Neg):
        return neg(differentiate(node.arg, name))
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        da, db = differentiate(a, name), differentiate(b, name)
        if node.op == "+":
            return add(da, db)
        if node.op == "-":
            return sub(da, db)
        if node.op == "*":
            return add(mul(da, b), mul(a, db))
        if node.op == "/":
            return sub(div(da, b), div(mul(a, db), pow_(b, Num(2.0))))
        cb = const_value(b)
        if cb is not None:
            return mul(mul(b, pow_(a, const(cb - 1.0))), da)
        return mul(node, add(mul(db, call("log", a)), div(mul(b, da), a)))
    if isinstance(node, Call):
        if node.fn == "atan2":
            y, x = node.args
            dy, dx = differentiate(y, name), differentiate(x, name)
            r2 = add(pow_(x, Num(2.0)), pow_(y, Num(2.0)))
            return div(sub(mul(x, dy), mul(y, dx)), r2)
        (a,) = node.args
        da = differentiate(a, name)
        if node.fn == "sin":
            outer = call("cos", a)
        elif node.fn == "cos":
            outer = neg(call("sin", a))
        elif node.fn == "tan":
            outer = div(Num(1.0), pow_(call("cos", a), Num(2.0)))
        elif node.fn == "exp":
            outer = node
        elif node.fn == "log":
            return div(da, a)
        elif node.fn == "sqrt":
            return div(da, mul(Num(2.0), node))
        else:
            raise TypeError(f"unknown function {node.fn}")
        return mul(outer, da)
    raise TypeError(f"not an expression node: {node!r}")


def substitute(node: Node, mapping: Mapping[str, Node]) -> Node:
    """Replace variables by sub-trees (no folding)."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, mapping))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping))
    if isinstance(node, Call):
        return Call(node.fn, tuple(substitute(a, mapping) for a in node.args))
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# Compiled forward mode


def _s_div(a, b, src):
    if b == 0.0:
        raise ExprDomainError("division by zero", src)
    return a / b


def _s_log(a, src):
    if a <= 0.0:
        raise ExprDomainError("log of non-positive value", src)
    return math.log(a)


def _s_sqrt(a, src):
    if a < 0.0:
        raise ExprDomainError("sqrt of negative value", src)
    return math.sqrt(a)


def _s_pow(a, b, src):
    if a < 0.0 and not float(b).is_integer():
        raise ExprDomainError("negative base with non-integer exponent", src)
    if a == 0.0 and b < 0.0:
        raise ExprDomainError("zero raised to a negative power", src)
    try:
        return math.pow(a, b)
    except OverflowError:
        raise ExprDomainError("overflow", src) from None


def _s_exp(a, src):
    try:
        return math.exp(a)
    except OverflowError:
        raise ExprDomainError("overflow", src) from None


def _s_atan2(y, x, src):
    if x == 0.0 and y == 0.0:
        raise ExprDomainError("atan2(0, 0) is undefined", src)
    return math.atan2(y, x)


def _v_div(a, b, src):
    if np.any(b == 0.0):
        raise ExprDomainError("division by zero", src)
    return a / b


def _v_log(a, src):
    if np.any(a <= 0.0):
        raise ExprDomainError("log of non-positive value", src)
    return np.log(a)


def _v_sqrt(a, src):
    if np.any(a < 0.0):
        raise ExprDomainError("sqrt of negative value", src)
    return np.sqrt(a)


def _v_pow(a, b, src):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any((a < 0.0) & (b != np.floor(b))):
        raise ExprDomainError("negative base with non-integer exponent", src)
    if np.any((a == 0.0) & (b < 0.0)):
        raise ExprDomainError("zero raised to a negative power", src)
    return np.power(a, b)


def _v_exp(a, src):
    with np.errstate(over="ignore"):
        out = np.exp(a)
    if not np.all(np.isfinite(out)):
        raise ExprDomainError("overflow", src)
    return out


def _v_atan2(y, x, src):
    if np.any((x == 0.0) & (y == 0.0)):
        raise ExprDomainError("atan2(0, 0) is undefined", src)
    return np.arctan2(y, x)


_SCALAR_NS = {
    "_div": _s_div, "_log": _s_log, "_sqrt": _s_sqrt, "_pow": _s_pow, "_exp": _s_exp,
    "_atan2": _s_atan2, "_sin": math.sin, "_cos": math.cos, "_tan": math.tan,
}
_VECTOR_NS = {
    "_div": _v_div, "_log": _v_log, "_sqrt": _v_sqrt, "_pow": _v_pow, "_exp": _v_exp,
    "_atan2": _v_atan2, "_sin": np.sin, "_cos": np.cos, "_tan": np.tan,
}


class _CodeGen:
    def __init__(self, args: Sequence[str], wrt: Sequence[str]):
        self.argmap = {name: f"a{i}" for i, name in enumerate(args)}
        self.wrt = list(wrt)
        self.lines: list[str] = []
        self.consts: dict[str, str] = {}
        self.memo: dict[Node, tuple] = {}
        self.k = 0

    def tmp(self, rhs: str) -> str:
        name = f"v{self.k}"
        self.k += 1
        self.lines.append(f"    {name} = {rhs}")
        return name

    def src(self, node: Node) -> str:
        text = serialize(node)
        key = f"s{len(self.consts)}"
        self.consts[key] = text
        return key

    def emit(self, node: Node):
        hit = self.memo.get(node)
        if hit is None:
            hit = self._emit(node)
            self.memo[node] = hit
        return hit

    def _emit(self, node: Node):
        nw = len(self.wrt)
        none = [None] * nw
        if isinstance(node, Num):
            return repr(node.value), none
        if isinstance(node, Var):
            if node.name not in self.argmap:
                raise ExprError(f"symbol '{node.name}' is not a kernel argument")
            return self.argmap[node.name], ["1.0" if w == node.name else None for w in self.wrt]
        if isinstance(node, Neg):
            v, ts = self.emit(node.arg)
            return self.tmp(f"-{v}"), [None if t is None else self.tmp(f"-{t}") for t in ts]
        if isinstance(node, BinOp):
            return self._binop(node)
        if isinstance(node, Call):
            return self._call(node)
        raise TypeError(f"not an expression node: {node!r}")

    def _lin(self, terms):
        """Sum of (coefficient_expr, tangent) pairs, skipping zero tangents."""
        parts = []
        for coef, t in terms:
            if t is None:
                continue
            parts.append(t if coef is None else f"{coef} * {t}")
        if not parts:
            return None
        return self.tmp(" + ".join(f"({p})" for p in parts))

    def _binop(self, node: BinOp):
        a, ta = self.emit(node.left)
        b, tb = self.emit(node.right)
        op = node.op
        if op == "+":
            v = self.tmp(f"{a} + {b}")
            return v, [self._lin([(None, x), (None, y)]) for x, y in zip(ta, tb)]
        if op == "-":
            v = self.tmp(f"{a} - {b}")
            return v, [self._lin([(None, x), ("-1.0", y)]) for x, y in zip(ta, tb)]
        if op == "*":
            v = self.tmp(f"{a} * {b}")
            return v, [self._lin([(b, x), (a, y)]) for x, y in zip(ta, tb)]
        if op == "/":
            s = self.src(node)
            v = self.tmp(f"_div({a}, {b}, {s})")
            if all(x is None and y is None for x, y in zip(ta, tb)):
                return v, [None] * len(ta)
            inv = self.tmp(f"1.0 / {b}")
            mv = self.tmp(f"-{v}")
            return v, [
                None if (x is None and y is None) else self.tmp(f"({self._lin([(None, x), (mv, y)])}) * {inv}")
                for x, y in zip(ta, tb)
            ]
        # power
        s = self.src(node)
        cb = const_value(node.right)
        v = self.tmp(f"_pow({a}, {b}, {s})")
        if cb is not None:
            if cb == 0.0 or all(x is None for x in ta):
                return v, [None] * len(ta)
            if cb == 1.0:
                return v, list(ta)
            dpow = self.tmp(f"{cb!r} * _pow({a}, {cb - 1.0!r}, {s})")
            return v, [None if x is None else self.tmp(f"{dpow} * {x}") for x in ta]
        need_a = any(x is not None for x in ta)
        need_b = any(y is not None for y in tb)
        ca = cb_ = None
        if need_a:
            ca = self.tmp(f"{b} * _pow({a}, {b} - 1.0, {s})")
        if need_b:
            cb_ = self.tmp(f"{v} * _log({a}, {s})")
        return v, [self._lin([(ca, x), (cb_, y)]) for x, y in zip(ta, tb)]

    def _call(self, node: Call):
        fn = node.fn
        s = self.src(node)
        if fn == "atan2":
            (y, ty), (x, tx) = self.emit(node.args[0]), self.emit(node.args[1])
            v = self.tmp(f"_atan2({y}, {x}, {s})")
            if all(p is None and q is None for p, q in zip(ty, tx)):
                return v, [None] * len(ty)
            r2 = self.tmp(f"{x} * {x} + {y} * {y}")
            cx = self.tmp(f"{x} / {r2}")
            cy = self.tmp(f"-{y} / {r2}")
            return v, [self._lin([(cx, p), (cy, q)]) for p, q in zip(ty, tx)]
        a, ta = self.emit(node.args[0])
        if fn == "sin":
            v = self.tmp(f"_sin({a})")
            d = "None" if all(t is None for t in ta) else self.tmp(f"_cos({a})")
        elif fn == "cos":
            v = self.tmp(f"_cos({a})")
            d = "None" if all(t is None for t in ta) else self.tmp(f"-_sin({a})")
        elif fn == "tan":
            v = self.tmp(f"_tan({a})")
            d = "None" if all(t is None for t in ta) else self.tmp(f"1.0 / _cos({a}) ** 2")
        elif fn == "exp":
            v = self.tmp(f"_exp({a}, {s})")
            d = v
        elif fn == "log":
            v = self.tmp(f"_log({a}, {s})")
            d = "None" if all(t is None for t in ta) else self.tmp(f"1.0 / {a}")
        elif fn == "sqrt":
            v = self.tmp(f"_sqrt({a}, {s})")
            if all(t is None for t in ta):
                d = "None"
            else:
                d = self.tmp(f"0.5 / _nonzero({v}, {s})")
        else:
            raise TypeError(f"unknown function {fn}")
        return v, [None if t is None else self.tmp(f"{d} * {t}") for t in ta]


def _s_nonzero(x, src):
    if x == 0.0:
        raise ExprDomainError("derivative of sqrt is unbounded at zero", src)
    return x


def _v_nonzero(x, src):
    if np.any(x == 0.0):
        raise ExprDomainError("derivative of sqrt is unbounded at zero", src)
    return x


_SCALAR_NS["_nonzero"] = _s_nonzero
_VECTOR_NS["_nonzero"] = _v_nonzero


def compile_jet(
    exprs: Sequence[Node], args: Sequence[str], wrt: Sequence[str] = (), vectorized: bool = False
) -> Callable:
    """Generate ``f(*args) -> (values, grads)`` for a batch of expressions.

    ``values[i]`` is expression ``i`` and ``grads[i][j]`` its partial with respect
    to ``wrt[j]``. With ``vectorized=True`` the arguments may be numpy arrays of a
    common shape; results that do not depend on the arguments come back as plain
    floats and are broadcast by the caller.
    """
    gen = _CodeGen(args, wrt)
    outs = [gen.emit(e) for e in exprs]
    vals = ", ".join(v for v, _ in outs)
    grads = ", ".join("(" + "".join(f"{t or '0.0'}, " for t in ts) + ")" for _, ts in outs)
    header = f"def _kernel({', '.join(gen.argmap[a] for a in args)}):"
    body = gen.lines + [f"    return ({vals}{',' if outs else ''}), ({grads}{',' if outs else ''})"]
    code = "\n".join([header] + body)
    ns = dict(_VECTOR_NS if vectorized else _SCALAR_NS)
    ns.update(gen.consts)
    exec(compile(code, "<varigauge-kernel>", "exec"), ns)
    fn = ns["_kernel"]
    fn.__doc__ = code
    return fn
