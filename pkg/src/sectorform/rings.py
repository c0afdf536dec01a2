"""Coefficient rings for truncated power series.

Two families are supported:

* exact rings: Gaussian rationals, optionally extended by a square root
  of a fixed square-free integer ``d`` (so numbers a + b*sqrt(d) with
  a, b Gaussian rational).  Comparison is by value, no tolerance.
* a floating ring: complex doubles compared up to a tolerance carried
  by the ring context.

Exact values are :class:`QE` instances, floating values are plain
``complex``.  Series code never mixes values from different rings.
"""

from __future__ import annotations

import math
from fractions import Fraction

try:
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover
    _Q = Fraction


def _as_q(x):
    if isinstance(x, (int, Fraction)) or type(x).__name__ == "mpq":
        return _Q(x)
    if isinstance(x, str):
        return _Q(x)
    raise TypeError(f"cannot build an exact rational from {x!r}")


class QE:
    """Exact number (ar + ai*i) + (br + bi*i)*sqrt(d).

    ``d`` is the square-free integer fixed by the ring; ``d == 0`` means
    no extension and the sqrt parts must vanish.
    """

    __slots__ = ("ar", "ai", "br", "bi", "d")

    def __init__(self, ar=0, ai=0, br=0, bi=0, d=0):
        self.ar = _as_q(ar)
        self.ai = _as_q(ai)
        self.br = _as_q(br)
        self.bi = _as_q(bi)
        self.d = d
        if d == 0 and (self.br or self.bi):
            raise ValueError("sqrt part in a plain rational ring")

    # -- helpers -------------------------------------------------------
    _SCALARS = (int, Fraction)

    def _check(self, other: "QE") -> "QE":
        if not isinstance(other, QE):
            if not (isinstance(other, self._SCALARS)
                    or type(other).__name__ == "mpq"):
                return None
            other = QE(other, d=self.d) if self.d else QE(other)
        if other.d not in (0, self.d) and self.d not in (0, other.d):
            raise ValueError("mixing different quadratic extensions")
        return other

    @property
    def is_zero(self) -> bool:
        return not (self.ar or self.ai or self.br or self.bi)

    @property
    def is_rational(self) -> bool:
        return not (self.ai or self.br or self.bi)

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        o = self._check(other)
        if o is None:
            return NotImplemented
        d = self.d or o.d
        return QE(self.ar + o.ar, self.ai + o.ai, self.br + o.br, self.bi + o.bi, d)

    __radd__ = __add__

    def __neg__(self):
        return QE(-self.ar, -self.ai, -self.br, -self.bi, self.d)

    def __sub__(self, other):
        o = self._check(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._check(other)
        if o is None:
            return NotImplemented
        d = self.d or o.d
        # gaussian products of the four cross terms
        a1r, a1i, b1r, b1i = self.ar, self.ai, self.br, self.bi
        a2r, a2i, b2r, b2i = o.ar, o.ai, o.br, o.bi
        # a = a1*a2 + d*b1*b2 ; b = a1*b2 + b1*a2   (gaussian mults)
        ar = a1r * a2r - a1i * a2i + d * (b1r * b2r - b1i * b2i)
        ai = a1r * a2i + a1i * a2r + d * (b1r * b2i + b1i * b2r)
        br = a1r * b2r - a1i * b2i + b1r * a2r - b1i * a2i
        bi = a1r * b2i + a1i * b2r + b1r * a2i + b1i * a2r
        return QE(ar, ai, br, bi, d)

    __rmul__ = __mul__

    def inverse(self) -> "QE":
        if self.is_zero:
            raise ZeroDivisionError("exact division by zero")
        d = self.d
        # multiply by the sqrt-conjugate: (a+b√d)(a-b√d) = a² - d b² gaussian
        conj = QE(self.ar, self.ai, -self.br, -self.bi, d)
        g = self * conj  # gaussian rational, sqrt part zero
        # gaussian inverse
        n = g.ar * g.ar + g.ai * g.ai
        if not n:
            raise ZeroDivisionError("exact division by zero")
        ginv = QE(g.ar / n, -g.ai / n, 0, 0, d)
        return conj * ginv

    def __truediv__(self, other):
        o = self._check(other)
        if o is None:
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, other):
        o = self._check(other)
        if o is None:
            return NotImplemented
        return o * self.inverse()

    def __pow__(self, n: int):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return self.inverse() ** (-n)
        out = QE(1, d=self.d)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)) or type(other).__name__ == "mpq":
            other = QE(other, d=self.d)
        if not isinstance(other, QE):
            return NotImplemented
        return (self.ar == other.ar and self.ai == other.ai
                and self.br == other.br and self.bi == other.bi)

    def __hash__(self):
        return hash((self.ar, self.ai, self.br, self.bi))

    def __bool__(self):
        return not self.is_zero

    # -- conversions ---------------------------------------------------
    def __complex__(self):
        s = math.sqrt(self.d) if self.d else 0.0
        return complex(float(self.ar) + s * float(self.br),
                       float(self.ai) + s * float(self.bi))

    def __abs__(self):
        return abs(complex(self))

    def __repr__(self):
        parts = []
        if self.ar or self.ai or self.is_zero:
            if self.ai:
                parts.append(f"({self.ar}{'+' if self.ai > 0 else '-'}{abs(self.ai)}i)")
            else:
                parts.append(str(self.ar))
        if self.br or self.bi:
            if self.bi:
                parts.append(f"({self.br}{'+' if self.bi > 0 else '-'}{abs(self.bi)}i)*sqrt({self.d})")
            else:
                parts.append(f"{self.br}*sqrt({self.d})")
        return "+".join(parts) or "0"

    def serialize(self) -> list:
        """[re, im] pair; rationals as 'p/q' strings, sqrt parts appended."""
        def part(rat, srd):
            if not srd:
                return str(rat)
            sign = "+" if srd >= 0 else "-"
            return f"{rat}{sign}{abs(srd)}*sqrt({self.d})"
        return [part(self.ar, self.br), part(self.ai, self.bi)]


def _parse_part(text: str, d: int):
    """Parse 'p/q' or 'p/q+r/s*sqrt(d)' back to (rat, sqrt) parts."""
    if "sqrt" in text:
        head, tail = text.split("*sqrt(", 1)
        rad = int(tail.rstrip(")"))
        if rad != d:
            raise ValueError(f"sqrt({rad}) does not match ring sqrt({d})")
        cut = max(head.rfind("+", 1), head.rfind("-", 1))
        sgn = -1 if head[cut] == "-" else 1
        return _Q(head[:cut]), sgn * _Q(head[cut + 1:])
    return _Q(text), _Q(0)


class ExactRing:
    """Ring context for Gaussian rationals, optionally with sqrt(d)."""

    exact = True

    def __init__(self, d: int = 0):
        self.d = int(d)

    def coerce(self, v) -> QE:
        if isinstance(v, QE):
            if v.d not in (0, self.d):
                raise ValueError("coefficient from a different extension")
            if v.d == 0 and self.d and (v.br or v.bi):  # pragma: no cover
                raise ValueError("inconsistent sqrt part")
            return QE(v.ar, v.ai, v.br, v.bi, self.d) if v.d != self.d else v
        if isinstance(v, complex):
            raise TypeError("complex floats are not exact coefficients")
        return QE(v, d=self.d)

    def zero(self) -> QE:
        return QE(0, d=self.d)

    def one(self) -> QE:
        return QE(1, d=self.d)

    def sqrt_d(self) -> QE:
        if not self.d:
            raise ValueError("ring has no quadratic extension")
        return QE(0, 0, 1, 0, self.d)

    def imag_unit(self) -> QE:
        return QE(0, 1, 0, 0, self.d)

    def is_zero(self, v) -> bool:
        return v.is_zero

    def eq(self, a, b) -> bool:
        return a == b

    def abs(self, v) -> float:
        return abs(v)

    def deserialize(self, pair) -> QE:
        re, im = pair
        ar, br = _parse_part(str(re), self.d)
        ai, bi = _parse_part(str(im), self.d)
        return QE(ar, ai, br, bi, self.d)

    def __eq__(self, other):
        return isinstance(other, ExactRing) and other.d == self.d

    def __hash__(self):
        return hash(("exact", self.d))

    def __repr__(self):
        return f"ExactRing(sqrt={self.d})" if self.d else "ExactRing()"


class FloatRing:
    """Complex doubles with a comparison tolerance (default 1e-10)."""

    exact = False

    def __init__(self, tol: float = 1e-10):
        self.tol = float(tol)

    def coerce(self, v) -> complex:
        if isinstance(v, QE):
            return complex(v)
        return complex(v)

    def zero(self) -> complex:
        return 0j

    def one(self) -> complex:
        return 1 + 0j

    def is_zero(self, v) -> bool:
        return abs(v) <= self.tol

    def eq(self, a, b) -> bool:
        return abs(a - b) <= self.tol

    def abs(self, v) -> float:
        return abs(v)

    def deserialize(self, pair) -> complex:
        def num(t):
            t = str(t)
            return float(_Q(t)) if "/" in t else float(t)
        return complex(num(pair[0]), num(pair[1]))

    def __eq__(self, other):
        return isinstance(other, FloatRing) and other.tol == self.tol

    def __hash__(self):
        return hash(("float", self.tol))

    def __repr__(self):
        return f"FloatRing(tol={self.tol})"


def ring_sqrt(ring: ExactRing, v: QE):
    """Exact square root of v in the ring, or None.

    Handles the cases needed for 2x2 eigenvalue work: v a rational that
    is a perfect square, or d times a perfect square.
    """
    if not v.is_rational:
        return None
    r = v.ar
    if r == 0:
        return ring.zero()
    sign = 1 if r > 0 else -1
    if sign > 0:
        s = _rational_sqrt(r)
        if s is not None:
            return QE(s, d=ring.d)
    if ring.d:
        q = r / ring.d
        if q > 0:
            s = _rational_sqrt(q)
            if s is not None:
                return QE(0, 0, s, 0, ring.d)
    if sign < 0:
        s = _rational_sqrt(-r)
        if s is not None:
            return QE(0, s, 0, 0, ring.d)
        if ring.d:
            q = -r / ring.d
            if q > 0:
                s = _rational_sqrt(q)
                if s is not None:
                    return QE(0, 0, 0, s, ring.d)
    return None


def _rational_sqrt(q):
    q = _Q(q)
    if q < 0:
        return None
    num, den = q.numerator, q.denominator
    rn = math.isqrt(num)
    rd = math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return _Q(rn, rd)
    return None
