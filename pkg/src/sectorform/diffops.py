"""One-variable formal differential operators and their Borel transforms.

An operator sum_n c_n d^n/dz^n of infinite order is represented by the
finite coefficient prefix c_0..c_M: applied to a series of order N only
c_0..c_N can act, higher derivatives of the truncation vanish.

The Borel transform of a constant-coefficient operator is the series
z -> sum n! c_n z^n; an entire Borel transform is what distinguishes an
honest differential operator from a merely formal symbol, and the radius
estimator below quantifies that test on a stored prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rings import QE
from .series import TruncatedSeries


class FormalDiffOp:
    """Operator sum_n coeffs[n] * d^n, coefficients are series (or constants)."""

    def __init__(self, coeffs):
        if not coeffs:
            raise ValueError("need at least the order-zero coefficient")
        self.coeffs = list(coeffs)
        self.ring = self.coeffs[0].ring
        self.nvars = self.coeffs[0].nvars
        for c in self.coeffs:
            if c.ring != self.ring or c.nvars != self.nvars:
                raise ValueError("operator coefficients live in one ring")

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def from_scalars(cls, ring, scalars, nvars=1, series_order=0):
        return cls([TruncatedSeries.constant(ring, nvars, series_order, s)
                    for s in scalars])

    def is_constant_coefficient(self) -> bool:
        zero = (0,) * self.nvars
        return all(set(c.coeffs) <= {zero} for c in self.coeffs)

    def scalar_coefficients(self):
        if not self.is_constant_coefficient():
            raise ValueError("operator has non-constant coefficients")
        return [c.constant_term for c in self.coeffs]

    def apply(self, f: TruncatedSeries, var: int = 0) -> TruncatedSeries:
        """sum_n c_n f^(n), truncated; uses only c_0..c_order(f)."""
        if f.ring != self.ring:
            raise ValueError("ring mismatch between operator and series")
        out = TruncatedSeries.zero(f.ring, f.nvars, f.order)
        d = f
        for n, c in enumerate(self.coeffs):
            if n > f.order:
                break
            if n > 0:
                # polynomial semantics: the truncation is differentiated
                # termwise and kept at the declared order
                d = d.derive(var).truncate(f.order)
                if d.is_zero():
                    break  # all further derivatives of the truncation vanish
            cn = _lift(c, f.nvars, f.order)
            out = out + (cn * d).truncate(f.order)
        return out

    def __repr__(self):
        return f"FormalDiffOp(order={self.order})"


def _lift(c: TruncatedSeries, nvars: int, order: int) -> TruncatedSeries:
    if c.nvars == nvars:
        return c.truncate(order) if c.order < order else c
    coeffs = {J + (0,) * (nvars - c.nvars): v for J, v in c.coeffs.items()}
    return TruncatedSeries(c.ring, nvars, order, coeffs)


def neumann_inverse(ring, order_m: int) -> FormalDiffOp:
    """The truncated series inverse of (1 + d): sum_{n<=M} (-1)^n d^n.

    Composing with (1 + d) reproduces any series of order <= M exactly,
    because the telescoping remainder is an (M+1)-st derivative.
    """
    if order_m < 0:
        raise ValueError("order must be >= 0")
    return FormalDiffOp.from_scalars(ring, [(-1) ** n for n in range(order_m + 1)])


def one_plus_d(ring, f: TruncatedSeries, var: int = 0) -> TruncatedSeries:
    """(1 + d/dz) f, the model operator's forward action."""
    return f + f.derive(var).truncate(f.order)


@dataclass
class BorelSeries:
    """Borel transform data: series in z with coefficient n equal to n!*c_n."""

    series: TruncatedSeries
    from_operator: bool = True

    def coefficient(self, n: int):
        return self.series.coefficient((n,))


def borel_transform(op: FormalDiffOp) -> BorelSeries:
    """Constant-coefficient operator -> sum n! c_n z^n."""
    cs = op.scalar_coefficients()
    ring = op.ring
    fact = 1
    coeffs = {}
    for n, c in enumerate(cs):
        if n > 1:
            fact *= n
        coeffs[(n,)] = c * fact if n > 0 else c
    return BorelSeries(TruncatedSeries(ring, 1, len(cs) - 1, coeffs))


def laplace_inverse(b: BorelSeries) -> FormalDiffOp:
    """Inverse of borel_transform: divide coefficient n by n!."""
    ring = b.series.ring
    M = b.series.order
    scalars = []
    fact = 1
    for n in range(M + 1):
        if n > 1:
            fact *= n
        scalars.append(b.series.coefficient((n,)) / fact)
    return FormalDiffOp.from_scalars(ring, scalars)


def borel_radius_estimate(b: BorelSeries, infinity_cut: float = 1e6):
    """Cauchy-Hadamard style radius estimate from the stored prefix.

    Estimator: least-squares fit of log|b_n| over the last ceil(M/2)
    nonzero coefficients against the model a*(n log n) + c*n.  The n-log-n
    weight a detects factorial growth (a near 1 -> radius 0) or decay
    (a near -1 -> entire, the infinity flag); otherwise the radius is
    exp(-c), flagged infinite above ``infinity_cut``.

    Returns (radius, is_infinite).  Needs at least 8 nonzero coefficients.
    """
    data = [(n, abs(b.series.coefficient((n,))))
            for n in range(b.series.order + 1)]
    data = [(n, a) for n, a in data if a > 0 and n >= 1]
    if len(data) < 8:
        raise ValueError("radius estimate needs at least 8 nonzero coefficients")
    window = data[-max(len(data) // 2, 4):]
    A = np.array([[n * math.log(n) if n > 1 else 0.0, n] for n, _ in window])
    rhs = np.array([math.log(a) for _, a in window])
    (a_fit, c_fit), *_ = np.linalg.lstsq(A, rhs, rcond=None)
    if a_fit > 0.3:
        return 0.0, False
    if a_fit < -0.3:
        return math.inf, True
    radius = math.exp(-c_fit)
    return radius, radius > infinity_cut


def euler_formal_solution(ring, order_n: int) -> TruncatedSeries:
    """The divergent model series sum n! z^{n+1}.

    It solves E - z^2 E' = z identically at every truncation order: the
    z^m coefficient of z^2 E' is (m-1)(m-2)! = (m-1)! for m >= 2.
    """
    if order_n < 1:
        raise ValueError("order must be >= 1")
    coeffs = {}
    fact = 1
    for n in range(order_n):
        if n > 1:
            fact *= n
        coeffs[(n + 1,)] = fact if n > 0 else 1
    return TruncatedSeries(ring, 1, order_n, coeffs)


def euler_residual(e: TruncatedSeries) -> TruncatedSeries:
    """E - z^2 E' - z, evaluated exactly at order(E)."""
    ring = e.ring
    z = TruncatedSeries.variable(ring, 1, e.order, 0)
    z2 = TruncatedSeries.monomial(ring, 1, e.order, (2,))
    return (e - z2 * e.derive(0).truncate(e.order) - z).truncate(e.order)


def transport_borel(h: TruncatedSeries, order_n: int):
    """Formal solution of (1 - x d/dy) f = x h(y) and its Borel transform.

    Returns (f, borel) where f = sum_n x^{n+1} h^{(n)}(y) lives in the
    variables (x, y) and borel, in variables (y, xi), carries coefficient
    x^{n+1} -> xi^n / n!; at the level of coefficients borel equals the
    shifted expansion h(y + xi).
    """
    if h.nvars != 1:
        raise ValueError("h must be a one-variable series")
    ring = h.ring
    N = order_n
    f_coeffs = {}
    b_coeffs = {}
    d = h
    fact = 1
    for n in range(N + 1):
        if n > 0:
            d = d.derive(0)
            fact *= n
        if d.is_zero():
            break
        for (k,), c in d.coeffs.items():
            if n + 1 + k <= N:
                f_coeffs[(n + 1, k)] = c
            if n + k <= N:
                b_coeffs[(k, n)] = c / fact if n > 0 else c
    f = TruncatedSeries(ring, 2, N, f_coeffs)
    borel = TruncatedSeries(ring, 2, N, b_coeffs)
    return f, borel
