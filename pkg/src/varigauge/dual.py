"""Scalar dual numbers for forward-mode differentiation.

A :class:`Dual` carries a primal value and a single tangent. Gradients with
respect to several variables are obtained by one pass per direction.
"""
from __future__ import annotations

import math
from typing import Union

Number = Union[int, float]


class DualDomainError(ArithmeticError):
    """Raised when an operation leaves the real domain of a smooth function."""


class Dual:
    __slots__ = ("val", "eps")

    def __init__(self, val: Number, eps: Number = 0.0):
        self.val = float(val)
        self.eps = float(eps)

    @staticmethod
    def lift(x: Union["Dual", Number]) -> "Dual":
        return x if isinstance(x, Dual) else Dual(x, 0.0)

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.eps!r})"

    def __add__(self, other):
        o = Dual.lift(other)
        return Dual(self.val + o.val, self.eps + o.eps)

    __radd__ = __add__

    def __sub__(self, other):
        o = Dual.lift(other)
        return Dual(self.val - o.val, self.eps - o.eps)

    def __rsub__(self, other):
        return Dual.lift(other) - self

    def __mul__(self, other):
        o = Dual.lift(other)
        return Dual(self.val * o.val, self.eps * o.val + self.val * o.eps)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual.lift(other)
        if o.val == 0.0:
            raise DualDomainError("division by zero")
        inv = 1.0 / o.val
        return Dual(self.val * inv, (self.eps * o.val - self.val * o.eps) * inv * inv)

    def __rtruediv__(self, other):
        return Dual.lift(other) / self

    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __pow__(self, other):
        return power(self, Dual.lift(other))

    def __rpow__(self, other):
        return power(Dual.lift(other), self)


def power(a: Dual, b: Dual) -> Dual:
    """``a ** b`` on the real line.

    A negative base is only allowed with an integer exponent that does not
    carry a tangent; ``0 ** b`` needs ``b >= 0``.
    """
    integral = float(b.val).is_integer()
    if a.val < 0.0 and not integral:
        raise DualDomainError("negative base with non-integer exponent")
    if a.val == 0.0 and b.val < 0.0:
        raise DualDomainError("zero raised to a negative power")
    val = a.val ** b.val
    eps = 0.0
    if a.eps != 0.0:
        if b.val == 0.0:
            eps = 0.0
        elif a.val == 0.0 and b.val < 1.0:
            raise DualDomainError("derivative of power is unbounded at zero base")
        else:
            eps += b.val * a.val ** (b.val - 1.0) * a.eps
    if b.eps != 0.0:
        if a.val <= 0.0:
            raise DualDomainError("log of non-positive base in power derivative")
        eps += val * math.log(a.val) * b.eps
    return Dual(val, eps)


def sin(x: Dual) -> Dual:
    return Dual(math.sin(x.val), math.cos(x.val) * x.eps)


def cos(x: Dual) -> Dual:
    return Dual(math.cos(x.val), -math.sin(x.val) * x.eps)


def tan(x: Dual) -> Dual:
    c = math.cos(x.val)
    if c == 0.0:
        raise DualDomainError("tan at a pole")
    return Dual(math.tan(x.val), x.eps / (c * c))


def exp(x: Dual) -> Dual:
    e = math.exp(x.val)
    return Dual(e, e * x.eps)


def log(x: Dual) -> Dual:
    if x.val <= 0.0:
        raise DualDomainError("log of non-positive value")
    return Dual(math.log(x.val), x.eps / x.val)


def sqrt(x: Dual) -> Dual:
    if x.val < 0.0:
        raise DualDomainError("sqrt of negative value")
    s = math.sqrt(x.val)
    if x.eps == 0.0:
        return Dual(s, 0.0)
    if s == 0.0:
        raise DualDomainError("derivative of sqrt is unbounded at zero")
    return Dual(s, 0.5 * x.eps / s)


def atan2(y: Dual, x: Dual) -> Dual:
    r2 = x.val * x.val + y.val * y.val
    if r2 == 0.0:
        raise DualDomainError("atan2(0, 0) is undefined")
    return Dual(math.atan2(y.val, x.val), (x.val * y.eps - y.val * x.eps) / r2)
