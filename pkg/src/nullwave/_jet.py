"""Truncated Taylor arithmetic for exact derivatives of radial profiles."""
import math

import numpy as np


class Jet:
    """Taylor coefficients ``c[k] = f^(k)(s) / k!`` for k = 0..order, vectorized over s."""

    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=float)

    @classmethod
    def variable(cls, s, order):
        s = np.asarray(s, dtype=float)
        c = np.zeros((order + 1,) + s.shape)
        c[0] = s
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def constant(cls, value, like):
        c = np.zeros_like(like.c)
        c[0] = value
        return cls(c)

    @property
    def order(self):
        return self.c.shape[0] - 1

    def derivative(self, k):
        """k-th derivative values at the expansion points."""
        return math.factorial(k) * self.c[k]

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self)

    def __add__(self, other):
        return Jet(self.c + self._lift(other).c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return Jet(self.c - self._lift(other).c)

    def __rsub__(self, other):
        return Jet(self._lift(other).c - self.c)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * other)
        a, b = self.c, other.c
        out = np.zeros_like(a)
        for k in range(a.shape[0]):
            for j in range(k + 1):
                out[k] += a[j] * b[k - j]
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c / other)
        a, b = self.c, other.c
        out = np.zeros_like(a)
        for k in range(a.shape[0]):
            acc = a[k].copy()
            for j in range(1, k + 1):
                acc -= b[j] * out[k - j]
            out[k] = acc / b[0]
        return Jet(out)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def exp(self):
        a = self.c
        out = np.zeros_like(a)
        out[0] = np.exp(a[0])
        for k in range(1, a.shape[0]):
            acc = np.zeros_like(a[0])
            for j in range(1, k + 1):
                acc += j * a[j] * out[k - j]
            out[k] = acc / k
        return Jet(out)


def where(mask, a: Jet, b: Jet) -> Jet:
    return Jet(np.where(mask, a.c, b.c))


def smooth_step(x: Jet) -> Jet:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x0 = x.c[0]
    inside = (x0 > 0.0) & (x0 < 1.0)
    safe = Jet(x.c.copy())
    safe.c[0] = np.where(inside, x0, 0.5)
    f_left = (-1.0 / safe).exp()
    f_right = (-1.0 / (1.0 - safe)).exp()
    s = f_left / (f_left + f_right)
    zero = Jet(np.zeros_like(x.c))
    one = Jet.constant(1.0, x)
    return where(inside, s, where(x0 >= 1.0, one, zero))


def plateau(y: Jet) -> Jet:
    """C-infinity bump equal to 1 on |y| <= 1/2 and 0 on |y| >= 1 (for y of either sign)."""
    sign = np.where(y.c[0] < 0.0, -1.0, 1.0)
    ay = Jet(y.c * sign)
    return smooth_step(2.0 * (1.0 - ay))
