"""Truncated multivariate formal power series.

A :class:`TruncatedSeries` stores the coefficients of a formal power
series up to a fixed *total* degree (the ``order``).  Coefficients live
in one of the rings of :mod:`sectorform.rings`; multi-indices are plain
tuples of non-negative integers whose sum is the weight.

All values are immutable after construction and every operation is a
pure function returning a new series, so independent computations can
safely share operands.

Conventions
-----------
* arithmetic between series of orders N1 and N2 truncates at min(N1, N2);
* ``derive`` drops the order by one;
* substitution requires zero constant terms in the substituted series
  unless the caller passes ``unit_shift=True`` (used for expansions
  around 1 such as 1/(1-y) under y -> y + xi);
* the zero series has an empty coefficient map.

Series serialize to JSON as ``{nvars, order, terms: [[J...], [re,im]]}``
with exact rationals rendered as ``"p/q"`` strings.
"""

from __future__ import annotations

import itertools
import json

from .rings import ExactRing, FloatRing, QE


def weight(J) -> int:
    """Total degree of a multi-index (sum of its entries)."""
    return sum(J)


def check_multi_index(J, nvars: int):
    if len(J) != nvars or any((not isinstance(e, int)) or e < 0 for e in J):
        raise ValueError(f"bad multi-index {J!r} for {nvars} variables")


def iter_indices(nvars: int, max_weight: int, min_weight: int = 0):
    """Yield all multi-indices with min_weight <= |J| <= max_weight."""
    for w in range(min_weight, max_weight + 1):
        yield from _indices_of_weight(nvars, w)


def _indices_of_weight(nvars: int, w: int):
    if nvars == 1:
        yield (w,)
        return
    for first in range(w, -1, -1):
        for rest in _indices_of_weight(nvars - 1, w - first):
            yield (first,) + rest


class TruncatedSeries:
    __slots__ = ("ring", "nvars", "order", "coeffs")

    def __init__(self, ring, nvars: int, order: int, coeffs=None):
        if order < 0:
            raise ValueError("order must be >= 0")
        self.ring = ring
        self.nvars = int(nvars)
        self.order = int(order)
        cleaned = {}
        if coeffs:
            for J, c in coeffs.items():
                J = tuple(J)
                check_multi_index(J, self.nvars)
                if weight(J) > self.order:
                    continue
                c = ring.coerce(c)
                if not ring.is_zero(c):
                    cleaned[J] = c
        self.coeffs = cleaned

    # -- constructors ---------------------------------------------------
    @classmethod
    def zero(cls, ring, nvars, order):
        return cls(ring, nvars, order)

    @classmethod
    def constant(cls, ring, nvars, order, value):
        return cls(ring, nvars, order, {(0,) * nvars: value})

    @classmethod
    def one(cls, ring, nvars, order):
        return cls.constant(ring, nvars, order, 1)

    @classmethod
    def variable(cls, ring, nvars, order, i):
        J = [0] * nvars
        J[i] = 1
        return cls(ring, nvars, order, {tuple(J): 1})

    @classmethod
    def monomial(cls, ring, nvars, order, J, value=1):
        return cls(ring, nvars, order, {tuple(J): value})

    # -- basic queries ----------------------------------------------------
    def coefficient(self, J):
        return self.coeffs.get(tuple(J), self.ring.zero())

    def __getitem__(self, J):
        return self.coefficient(J)

    @property
    def constant_term(self):
        return self.coefficient((0,) * self.nvars)

    def is_zero(self) -> bool:
        return not self.coeffs

    def valuation(self):
        """Smallest weight with a nonzero coefficient (None for 0)."""
        if not self.coeffs:
            return None
        return min(weight(J) for J in self.coeffs)

    def homogeneous_part(self, w: int) -> "TruncatedSeries":
        return TruncatedSeries(
            self.ring, self.nvars, self.order,
            {J: c for J, c in self.coeffs.items() if weight(J) == w})

    def truncate(self, order: int) -> "TruncatedSeries":
        if order >= self.order:
            return TruncatedSeries(self.ring, self.nvars, order, self.coeffs)
        return TruncatedSeries(
            self.ring, self.nvars, order,
            {J: c for J, c in self.coeffs.items() if weight(J) <= order})

    def eq(self, other) -> bool:
        """Ring-aware comparison (exact, or within the float tolerance)."""
        a, b = self._align(other)
        for J in set(a.coeffs) | set(b.coeffs):
            if not self.ring.eq(a.coefficient(J), b.coefficient(J)):
                return False
        return True

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return self.eq(other)

    def __hash__(self):  # pragma: no cover
        return id(self)

    # -- arithmetic -------------------------------------------------------
    def _align(self, other):
        if not isinstance(other, TruncatedSeries):
            other = TruncatedSeries.constant(self.ring, self.nvars, self.order, other)
        if other.ring != self.ring:
            raise ValueError("coefficient ring mismatch")
        if other.nvars != self.nvars:
            raise ValueError("nvars mismatch")
        order = min(self.order, other.order)
        return self.truncate(order), other.truncate(order)

    def __add__(self, other):
        a, b = self._align(other)
        out = dict(a.coeffs)
        for J, c in b.coeffs.items():
            out[J] = out.get(J, self.ring.zero()) + c
        return TruncatedSeries(self.ring, self.nvars, a.order, out)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(self.ring, self.nvars, self.order,
                               {J: -c for J, c in self.coeffs.items()})

    def __sub__(self, other):
        a, b = self._align(other)
        return a + (-b)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, scalar) -> "TruncatedSeries":
        s = self.ring.coerce(scalar)
        return TruncatedSeries(self.ring, self.nvars, self.order,
                               {J: c * s for J, c in self.coeffs.items()})

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            return self.scale(other)
        a, b = self._align(other)
        N = a.order
        out = {}
        zero = self.ring.zero()
        # walk the sparse supports, pruning by weight
        bitems = sorted(b.coeffs.items(), key=lambda t: weight(t[0]))
        for J1, c1 in a.coeffs.items():
            w1 = weight(J1)
            for J2, c2 in bitems:
                if w1 + weight(J2) > N:
                    break
                J = tuple(x + y for x, y in zip(J1, J2))
                out[J] = out.get(J, zero) + c1 * c2
        return TruncatedSeries(self.ring, self.nvars, N, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative powers: use invert_unit")
        result = TruncatedSeries.one(self.ring, self.nvars, self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    # -- calculus ---------------------------------------------------------
    def derive(self, i: int) -> "TruncatedSeries":
        """Partial derivative; the order drops by one."""
        if not 0 <= i < self.nvars:
            raise IndexError(f"variable index {i} out of range")
        out = {}
        for J, c in self.coeffs.items():
            if J[i] == 0:
                continue
            K = list(J)
            K[i] -= 1
            out[tuple(K)] = c * J[i]
        return TruncatedSeries(self.ring, self.nvars, max(self.order - 1, 0), out)

    def multiply_monomial(self, J, value=1) -> "TruncatedSeries":
        J = tuple(J)
        out = {}
        for K, c in self.coeffs.items():
            L = tuple(x + y for x, y in zip(K, J))
            if weight(L) <= self.order:
                out[L] = c * self.ring.coerce(value)
        return TruncatedSeries(self.ring, self.nvars, self.order, out)

    def divide_monomial(self, J) -> "TruncatedSeries":
        """Exact division by x^J; raises if some term is not divisible."""
        J = tuple(J)
        out = {}
        for K, c in self.coeffs.items():
            L = tuple(x - y for x, y in zip(K, J))
            if any(e < 0 for e in L):
                raise ValueError(f"term {K} not divisible by monomial {J}")
            out[L] = c
        return TruncatedSeries(self.ring, self.nvars, self.order, out)

    # -- composition --------------------------------------------------------
    def substitute(self, subs, unit_shift: bool = False) -> "TruncatedSeries":
        """Compose: substitute subs[i] for variable i, truncated at self.order.

        Each substituted series must have zero constant term; with
        ``unit_shift=True`` nonzero constant terms are allowed provided
        the target variable appears only polynomially (always true at a
        finite truncation order, so the flag simply acknowledges that
        the caller wants an expansion around the shifted point).
        """
        if len(subs) != self.nvars:
            raise ValueError("need one substituted series per variable")
        ring = self.ring
        nv = subs[0].nvars
        order = min([self.order] + [s.order for s in subs])
        for s in subs:
            if s.ring != ring:
                raise ValueError("coefficient ring mismatch")
            if s.nvars != nv:
                raise ValueError("nvars mismatch among substituted series")
            if not unit_shift and not ring.is_zero(s.constant_term):
                raise ValueError(
                    "nonzero constant term in substitution (pass unit_shift=True "
                    "to expand around the shifted point)")
        one = TruncatedSeries.one(ring, nv, order)
        cache = {(0,) * self.nvars: one}

        def monomial_value(J):
            got = cache.get(J)
            if got is not None:
                return got
            i = next(k for k, e in enumerate(J) if e > 0)
            K = list(J)
            K[i] -= 1
            val = monomial_value(tuple(K)) * subs[i].truncate(order)
            cache[J] = val
            return val

        acc = TruncatedSeries.zero(ring, nv, order)
        for J, c in sorted(self.coeffs.items(), key=lambda t: weight(t[0])):
            # when every substituted series kills constants, high-weight
            # source terms cannot contribute below the truncation order
            if not unit_shift and weight(J) > order:
                break
            acc = acc + monomial_value(J).scale(c)
        return acc

    def substitute_with(self, cache: "SubstitutionCache") -> "TruncatedSeries":
        """Compose against a prebuilt cache (see substitute for semantics)."""
        return cache.apply(self)

    # -- unit operations ----------------------------------------------------
    def invert_unit(self) -> "TruncatedSeries":
        """Multiplicative inverse; requires a nonzero constant term."""
        c0 = self.constant_term
        if self.ring.is_zero(c0):
            raise ValueError("invert_unit requires a unit (nonzero constant term)")
        inv0 = 1 / c0 if isinstance(c0, complex) else c0.inverse()
        m = (self.scale(inv0) - 1).scale(-1)  # m = 1 - s/c0, valuation >= 1
        acc = TruncatedSeries.one(self.ring, self.nvars, self.order)
        term = TruncatedSeries.one(self.ring, self.nvars, self.order)
        for _ in range(self.order):
            term = term * m
            if term.is_zero():
                break
            acc = acc + term
        return acc.scale(inv0)

    def exp(self) -> "TruncatedSeries":
        """exp of a series with zero constant term."""
        if not self.ring.is_zero(self.constant_term):
            raise ValueError("exp requires zero constant term")
        acc = TruncatedSeries.one(self.ring, self.nvars, self.order)
        term = TruncatedSeries.one(self.ring, self.nvars, self.order)
        fact = 1
        for k in range(1, self.order + 1):
            term = term * self
            if term.is_zero():
                break
            fact *= k
            coeff = QE(1, d=getattr(self.ring, "d", 0)) / fact \
                if self.ring.exact else 1.0 / fact
            acc = acc + term.scale(coeff)
        return acc

    def log(self) -> "TruncatedSeries":
        """log of a series with constant term 1."""
        if not self.ring.eq(self.constant_term, self.ring.one()):
            raise ValueError("log requires constant term 1")
        m = self - 1
        acc = TruncatedSeries.zero(self.ring, self.nvars, self.order)
        term = TruncatedSeries.one(self.ring, self.nvars, self.order)
        for k in range(1, self.order + 1):
            term = term * m
            if term.is_zero():
                break
            coeff = QE((-1) ** (k + 1), d=getattr(self.ring, "d", 0)) / k \
                if self.ring.exact else float((-1) ** (k + 1)) / k
            acc = acc + term.scale(coeff)
        return acc

    # -- serialization -------------------------------------------------------
    def to_json_dict(self) -> dict:
        terms = []
        for J in sorted(self.coeffs):
            c = self.coeffs[J]
            if isinstance(c, QE):
                terms.append([list(J), c.serialize()])
            else:
                terms.append([list(J), [c.real, c.imag]])
        return {"nvars": self.nvars, "order": self.order, "terms": terms}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, ring, data: dict) -> "TruncatedSeries":
        coeffs = {tuple(J): ring.deserialize(pair) for J, pair in data["terms"]}
        return cls(ring, data["nvars"], data["order"], coeffs)

    @classmethod
    def from_json(cls, ring, text: str) -> "TruncatedSeries":
        return cls.from_json_dict(ring, json.loads(text))

    # -- display ---------------------------------------------------------------
    def __repr__(self):
        if not self.coeffs:
            return f"<0 + O(deg {self.order + 1})>"
        names = "xyzw" if self.nvars <= 4 else None
        bits = []
        for J in sorted(self.coeffs, key=lambda J: (weight(J), J)):
            mono = "".join(
                (names[i] if names else f"x{i}") + (f"^{e}" if e > 1 else "")
                for i, e in enumerate(J) if e)
            bits.append(f"({self.coeffs[J]!r}){mono or ''}")
        return "<" + " + ".join(bits[:12]) + (" + ..." if len(bits) > 12 else "") \
            + f" + O(deg {self.order + 1})>"


class SubstitutionCache:
    """Shared monomial-power cache for substituting into many series.

    Amortizes the expensive part of composition (products of powers of the
    substituted series) across all targets with the same substitution.
    """

    def __init__(self, subs, source_nvars, unit_shift=False):
        self.subs = list(subs)
        self.ring = self.subs[0].ring
        self.nvars = self.subs[0].nvars
        self.order = min(s.order for s in self.subs)
        self.source_nvars = source_nvars
        self.unit_shift = unit_shift
        if not unit_shift:
            for s in self.subs:
                if not self.ring.is_zero(s.constant_term):
                    raise ValueError("nonzero constant term in substitution")
        self._cache = {(0,) * source_nvars: TruncatedSeries.one(
            self.ring, self.nvars, self.order)}
        self._trunc = [s.truncate(self.order) for s in self.subs]

    def monomial_value(self, J):
        got = self._cache.get(J)
        if got is not None:
            return got
        i = next(k for k, e in enumerate(J) if e > 0)
        K = list(J)
        K[i] -= 1
        val = self.monomial_value(tuple(K)) * self._trunc[i]
        self._cache[J] = val
        return val

    def apply(self, target: TruncatedSeries) -> TruncatedSeries:
        if target.nvars != self.source_nvars or target.ring != self.ring:
            raise ValueError("target does not match the cached substitution")
        order = min(target.order, self.order)
        acc = TruncatedSeries.zero(self.ring, self.nvars, order)
        for J, c in sorted(target.coeffs.items(), key=lambda t: weight(t[0])):
            if not self.unit_shift and weight(J) > order:
                break
            acc = acc + self.monomial_value(J).truncate(order).scale(c)
        return acc


def geometric_series(ring, nvars, order, J, coeff=1):
    """1/(1 - c*x^J) truncated: independent oracle for unit inversions."""
    acc = TruncatedSeries.one(ring, nvars, order)
    c = ring.coerce(coeff)
    power = ring.one()
    K = tuple(J)
    step = K
    w = weight(K)
    if w == 0:
        raise ValueError("monomial must have positive weight")
    k = 1
    while k * w <= order:
        power = power * c
        acc = acc + TruncatedSeries.monomial(ring, nvars, order,
                                             tuple(e * k for e in step), power)
        k += 1
    return acc


def random_series(ring, nvars, order, rng, density=0.6, size=6, min_weight=0):
    """Random series with small integer coefficients (test utility)."""
    coeffs = {}
    for J in iter_indices(nvars, order, min_weight):
        if rng.random() < density:
            c = rng.randint(-size, size)
            if c:
                coeffs[J] = ring.coerce(c) if ring.exact else complex(c)
    return TruncatedSeries(ring, nvars, order, coeffs)
