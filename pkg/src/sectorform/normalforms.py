"""Formal normal forms of prepared plane fields and 3-D centre manifolds.

The classifier takes a planar field written as a monomial times a
saturated field and sorts it into the case list (a)-(j) by: smooth or
singular saturated direction, divisor exponents, eigenvalue ratio
(irrational, rational negative, or a saddle-node zero), and, in the
resonant rational cases, the first-integral test of the descended
foliation.  Invariants are extracted per case; conjugations are computed
for the non-resonant cases (a)-(f).

Everything here works degree by degree against explicit defects and
verifies the result by substitution, so a successful report is backed by
an exact residual, and anything the truncation cannot decide is reported
as undetermined rather than guessed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

from .fields import VectorField, linear_part, saturate
from .rings import ExactRing, QE, ring_sqrt, _rational_sqrt
from .series import SubstitutionCache, TruncatedSeries, weight
from .solvers import (ResonanceError, compose_map, identity_map, invert_map,
                      monomialise, transform_field)


class UnpreparedFieldError(ValueError):
    """The input is outside the prepared class at this truncation order."""


class UndeterminedAtOrderError(ValueError):
    """The truncation order cannot separate the candidate cases."""


# --------------------------------------------------------------- helpers
def _one(ring, nvars, order):
    return TruncatedSeries.one(ring, nvars, order)


def _var(ring, nvars, order, i):
    return TruncatedSeries.variable(ring, nvars, order, i)


def _x_valuation(s: TruncatedSeries, i: int):
    if s.is_zero():
        return None
    return min(J[i] for J in s.coeffs)


def _coeff_of_power(s: TruncatedSeries, i: int, k: int) -> TruncatedSeries:
    """Coefficient of x_i^k as a series in the remaining variables."""
    nv = s.nvars
    coeffs = {}
    for J, c in s.coeffs.items():
        if J[i] == k:
            K = J[:i] + J[i + 1:]
            coeffs[K] = c
    return TruncatedSeries(s.ring, nv - 1, s.order, coeffs)


def _restrict(s: TruncatedSeries, i: int) -> TruncatedSeries:
    """Set variable i to zero, dropping it."""
    return _coeff_of_power(s, i, 0)


def _lift_1var(s: TruncatedSeries, nvars: int, order: int, into: int):
    coeffs = {}
    for (k,), c in s.coeffs.items():
        J = [0] * nvars
        J[into] = k
        coeffs[tuple(J)] = c
    return TruncatedSeries(s.ring, nvars, order, coeffs)


def _antiderive(s: TruncatedSeries, i: int) -> TruncatedSeries:
    """Termwise antiderivative in variable i with zero constant."""
    out = {}
    for J, c in s.coeffs.items():
        K = list(J)
        K[i] += 1
        if sum(K) <= s.order:
            out[tuple(K)] = c / (J[i] + 1)
    return TruncatedSeries(s.ring, s.nvars, s.order, out)


def series_root(u: TruncatedSeries, k: int) -> TruncatedSeries:
    """k-th root of a unit series with constant term exactly 1."""
    ring = u.ring
    if not ring.eq(u.constant_term, ring.one()):
        raise ValueError("series_root needs constant term 1")
    m = u - 1
    acc = _one(ring, u.nvars, u.order)
    term = _one(ring, u.nvars, u.order)
    binom = ring.one()
    kq = QE(1, d=getattr(ring, "d", 0)) / k if ring.exact else 1.0 / k
    for j in range(1, u.order + 1):
        term = term * m
        if term.is_zero():
            break
        factor = (kq - (j - 1)) / j if ring.exact else (kq - (j - 1)) / j
        binom = binom * factor
        acc = acc + term.scale(binom)
    return acc


def _scalar_nth_root(ring, c, n: int):
    """Exact n-th root of a rational ring element, or None."""
    if isinstance(c, complex):
        return c ** (1.0 / n)
    if ring.eq(c, ring.one()):
        return ring.one()
    if n == 1:
        return c
    if n == 2:
        return ring_sqrt(ring, c)
    if not c.is_rational:
        return None
    q = c.ar
    if q <= 0:
        return None
    num, den = q.numerator, q.denominator
    rn = round(num ** (1.0 / n))
    rd = round(den ** (1.0 / n))
    for dn in (rn - 1, rn, rn + 1):
        for dd in (rd - 1, rd, rd + 1):
            if dn > 0 and dd > 0 and dn ** n == num and dd ** n == den:
                from gmpy2 import mpq
                return QE(mpq(dn, dd), d=ring.d)
    return None


# ---------------------------------------------------- rectification (b)
def rectify_smooth_factor(V: VectorField, order=None) -> TruncatedSeries:
    """Invariant coordinate for a field with unit transverse component.

    For V = x^{p+1}(u d/dx + a d/dy) with u a unit, returns the series
    ytilde = sum_n (-1)^n x^n Dtilde^n(y) / n!  where Dtilde is the
    division of the saturated field by u.  Then V(ytilde) = 0 at the
    truncation order and ytilde = y + O(x).
    """
    order = V.order if order is None else order
    sat, expo = saturate(V.truncate(order))
    u, a = sat.components
    ring = V.ring
    if ring.is_zero(u.constant_term):
        raise ValueError("x-component is not a unit times the divisor")
    w = (a * u.invert_unit()).truncate(order)
    dtilde = VectorField([_one(ring, 2, order), w])
    y = _var(ring, 2, order, 1)
    acc = y
    term = y
    fact = 1
    sign = 1
    xpow = _one(ring, 2, order)
    x = _var(ring, 2, order, 0)
    for n in range(1, order + 1):
        term = dtilde.apply(term)
        if term.is_zero():
            break
        fact *= n
        sign = -sign
        xpow = xpow * x
        coeff = QE(sign, d=getattr(ring, "d", 0)) / fact if ring.exact \
            else sign / fact
        acc = acc + (xpow * term).scale(coeff)
    return acc


# -------------------------------------------------- 1-D profile solve
def _profile_normal_form(v: TruncatedSeries, m: int, order: int):
    """Tangent-to-identity phi and nu with v*phi' = A(phi) for the target
    A(xi) = xi^m/(1 + nu xi^(m-1)).

    v must be a one-variable series of valuation m with leading
    coefficient exactly 1 (normalize first).  Returns (phi, nu).
    """
    ring = v.ring
    x = _var(ring, 1, order, 0)
    phi = x
    nu = ring.zero()
    for k in range(1, order - m + 1):
        target = _profile_series(ring, phi, m, nu, order)
        defect = (v * _derive_poly(phi)) - target
        e = defect.coefficient((m + k,))
        if ring.is_zero(e):
            continue
        if k == m - 1:
            nu = nu - e          # d defect / d nu = +1 at the resonant slot
        else:
            c = e / (m - (k + 1))   # response of defect to c_{k+1} is (k+1-m)
            phi = phi + TruncatedSeries.monomial(ring, 1, order, (k + 1,), c)
    target = _profile_series(ring, phi, m, nu, order)
    defect = (v * _derive_poly(phi)) - target
    return phi, nu, defect


def _derive_poly(s):
    return s.derive(0).truncate(s.order)


def _profile_series(ring, phi, m, nu, order):
    """phi^m / (1 + nu phi^(m-1)) truncated."""
    phm = phi ** m
    den = _one(ring, 1, order) + (phi ** (m - 1)).scale(nu)
    return (phm * den.invert_unit()).truncate(order)


# ---------------------------------------------------- saddle-node (f)
@dataclass
class SaddleNodeInvariants:
    p: int
    r: int
    R: TruncatedSeries            # one-variable polynomial, deg <= r, R(0) != 0
    nu: object
    eigen_scale: object           # recorded factor normalizing the eigenvalue

    def summary(self):
        return {"p": self.p, "r": self.r,
                "R": [str(self.R.coefficient((k,))) for k in range(self.r + 1)],
                "nu": str(self.nu), "eigen_scale": str(self.eigen_scale)}


@dataclass
class SaddleNodeResult:
    invariants: SaddleNodeInvariants
    conjugation: list             # map (xi, eta) -> original coordinates
    f: TruncatedSeries            # the exponent pair of the final solve
    g: TruncatedSeries
    residual: list                # final defining-relation defects


def saddle_node_normal_form(V: VectorField, order=None) -> SaddleNodeResult:
    """Formal saddle-node invariants (p, r, R, nu) and the conjugation.

    The pipeline follows the constructive proof: saturate off x^p, push
    the weak branch to y = 0, normalize the weak-branch restriction to
    the x^{r+1}/(1+nu x^{p+r}) profile, scale y so the strong multiplier
    is the polynomial R, kill the y-linear term of the x-component, then
    solve the exponential two-variable ansatz x = xi e^{f eta^2},
    y = eta e^{g eta} degree by degree (the divisors are (2+j) R(0) and
    (1+j) R(0), nonzero since R(0) != 0).

    All intermediate changes preserve the exceptional divisor x = 0, so
    the full field stays exactly divisible by x^p and the saturated data
    is recovered by monomial division after each step.
    """
    order = V.order if order is None else order
    V = V.truncate(order)
    ring = V.ring
    _, expo = saturate(V)
    total = identity_map(ring, 2, order)
    if expo[0] == 0 and expo[1] > 0:
        swap = [_var(ring, 2, order, 1), _var(ring, 2, order, 0)]
        V = transform_field(V, swap)
        total = compose_map(total, swap)
        _, expo = saturate(V)
    if expo[1] != 0:
        raise UnpreparedFieldError("y-divisor present: saddle-node case needs q=0")
    p = expo[0]
    if p < 1:
        raise UnpreparedFieldError("the exceptional divisor x^p is missing")

    def delta_of(W):
        return VectorField([c.divide_monomial((p, 0)) for c in W.components])

    # linear frame: zero eigenvalue along x, strong eigenvalue scaled to 1
    delta = delta_of(V)
    scale, swap_needed = _saddle_node_frame_check(delta)
    if swap_needed:
        swap = [_var(ring, 2, order, 1), _var(ring, 2, order, 0)]
        V = transform_field(V, swap)
        total = compose_map(total, swap)
        _, expo2 = saturate(V)
        if expo2 != (p, 0):
            raise UnpreparedFieldError("divisor is not monomial after the swap")
        delta = delta_of(V)
        scale, swap_needed = _saddle_node_frame_check(delta)
        if swap_needed:
            raise UnpreparedFieldError("cannot orient the saddle-node frame")
    if not ring.eq(scale, ring.one()):
        V = V.scale(scale.inverse() if ring.exact else 1 / scale)
        delta = delta_of(V)

    # weak branch y = w(x): substitute y -> Y + w(x)
    w = _weak_branch(delta, order)
    if not w.is_zero():
        shift = [_var(ring, 2, order, 0),
                 _var(ring, 2, order, 1) + _lift_1var(w, 2, order, 0)]
        V = transform_field(V, shift)
        total = compose_map(total, shift)
        delta = delta_of(V)

    # weak-branch restriction: full field x^p * A(x,0) = x^{p+r+1} unit
    a0 = _restrict(delta.components[0], 1)
    val = _x_valuation(a0, 0)
    if val is None or val < 2:
        raise UnpreparedFieldError("weak-branch restriction is degenerate")
    r = val - 1
    lead = a0.coefficient((val,))
    if not ring.eq(lead, ring.one()):
        root = _scalar_nth_root(ring, lead, p + r)
        if root is None:
            raise UnpreparedFieldError(
                "weak-branch leading coefficient has no (p+r)-th root in the ring")
        alpha = root.inverse() if ring.exact else 1 / root
        lin = [_var(ring, 2, order, 0).scale(alpha), _var(ring, 2, order, 1)]
        V = transform_field(V, lin)
        total = compose_map(total, lin)
        delta = delta_of(V)
        a0 = _restrict(delta.components[0], 1)

    # 1-D profile on the full restriction x^p a0 (valuation m = p+r+1)
    full = a0.multiply_monomial((p,))
    phi1, nu, prof_defect = _profile_normal_form(full, p + r + 1, order)
    if not prof_defect.is_zero():
        raise UnpreparedFieldError("weak-branch profile failed to close")
    inv1 = invert_map([phi1])[0]
    xmap = [_lift_1var(inv1, 2, order, 0), _var(ring, 2, order, 1)]
    V = transform_field(V, xmap)
    total = compose_map(total, xmap)
    delta = delta_of(V)

    # strong multiplier: s(x) = (y-component / y) at y = 0; scale y to kill
    # every coefficient above degree r, leaving R(x)
    s = _coeff_of_power(delta.components[1], 1, 1)
    a0 = _restrict(delta.components[0], 1)
    g1 = _kill_high_multiplier(a0, s, r, order)
    if not g1.is_zero():
        # the map sends new to old: y = Y e^{-g} realizes s -> s + a0 g'
        ymap = [_var(ring, 2, order, 0),
                _var(ring, 2, order, 1) * _lift_1var(g1.scale(-1), 2, order, 0).exp()]
        V = transform_field(V, ymap)
        total = compose_map(total, ymap)
        delta = delta_of(V)
    R = _coeff_of_power(delta.components[1], 1, 1).truncate(order)
    R = TruncatedSeries(ring, 1, order,
                        {J: c for J, c in R.coeffs.items() if J[0] <= r})

    # kill the y-linear part of the x-component via X = x(1 + h(x) y);
    # as a map new -> old this is x = X(1 - h Y) to first order in Y
    h1 = _kill_xcomponent_y_linear(delta, R, r, p, order)
    if not h1.is_zero():
        x2 = _var(ring, 2, order, 0)
        y2 = _var(ring, 2, order, 1)
        hmap = [x2 - (x2 * _lift_1var(h1, 2, order, 0) * y2).truncate(order), y2]
        V = transform_field(V, hmap)
        total = compose_map(total, hmap)
        delta = delta_of(V)

    # final exponential solve
    f2, g2, residual = _final_exponential_solve(delta, p, r, R, nu, order)
    x2 = _var(ring, 2, order, 0)
    y2 = _var(ring, 2, order, 1)
    final_map = [x2 * (f2 * y2 * y2).truncate(order).exp(),
                 y2 * (g2 * y2).truncate(order).exp()]
    total = compose_map(total, final_map)
    inv = SaddleNodeInvariants(p, r, R, nu, scale)
    return SaddleNodeResult(inv, total, f2, g2, residual)


def _saddle_node_frame_check(delta: VectorField):
    """Check the saturated jet is diag(0, c); returns (c, swap_needed).

    General eigen-splitting would break the monomial divisor, so inputs
    whose zero direction is not a coordinate axis are rejected; the
    caller supplies a preliminary linear change in that case.
    """
    ring = delta.ring
    L = linear_part(delta)
    M = [[ring.coerce(L.matrix[i][j]) for j in range(2)] for i in range(2)]
    tr = M[0][0] + M[1][1]
    det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    if not ring.is_zero(det):
        raise UnpreparedFieldError("linear part is not a saddle-node (det != 0)")
    if ring.is_zero(tr):
        raise UnpreparedFieldError("linear part is nilpotent")
    diag = all(ring.is_zero(M[i][j]) for i in range(2) for j in range(2) if i != j)
    if not diag:
        raise UnpreparedFieldError(
            "saddle-node frame is not axis-aligned; split eigendirections first")
    if ring.is_zero(M[1][1]):
        return tr, True
    return tr, False


def _kernel_vector(ring, M):
    a, b, c, d = M[0][0], M[0][1], M[1][0], M[1][1]
    if not ring.is_zero(a):
        return (a.inverse() * (-b) if ring.exact else -b / a, ring.one())
    if not ring.is_zero(b):
        return (ring.one(), ring.zero()) if ring.is_zero(a) else None
    if not ring.is_zero(c):
        return (c.inverse() * (-d) if ring.exact else -d / c, ring.one())
    return (ring.one(), ring.zero())


def _weak_branch(delta: VectorField, order):
    """Formal invariant curve y = w(x) tangent to the zero eigendirection."""
    ring = delta.ring
    A, B = delta.components
    w = TruncatedSeries.zero(ring, 1, order)
    x1 = _var(ring, 1, order, 0)
    for m in range(2, order + 1):
        subs = [x1, w]
        awx = A.substitute(subs)
        bwx = B.substitute(subs)
        defect = bwx - (_derive_poly(w) * awx).truncate(order)
        e = defect.coefficient((m,))
        if ring.is_zero(e):
            continue
        w = w - TruncatedSeries.monomial(ring, 1, order, (m,), e)
    return w


def _kill_high_multiplier(a0, s, r, order):
    """g(x) with s + a0*g' free of coefficients above degree r."""
    ring = s.ring
    g = TruncatedSeries.zero(ring, 1, order)
    for k in range(r + 1, order + 1):
        snew = s + (a0 * _derive_poly(g)).truncate(order)
        e = snew.coefficient((k,))
        if ring.is_zero(e):
            continue
        # response of coefficient k to g_{k-r}: (k-r) * lead(a0) = (k-r)
        c = -e / (k - r)
        g = g + TruncatedSeries.monomial(ring, 1, order, (k - r,), c)
    return g


def _kill_xcomponent_y_linear(delta, R, r, p, order):
    """h(x) making the y-linear part of the x-component vanish.

    The transform x -> x(1 + h y) changes that part to
    A1 + A0 (h + x h') + R x h - (x A0' + p A0) h; the leading response
    is R(0) h_k at degree k+1, so the solve is triangular.
    """
    ring = delta.ring
    A = delta.components[0]
    A1 = _coeff_of_power(A, 1, 1)
    if A1.is_zero():
        return TruncatedSeries.zero(ring, 1, order)
    a0 = _restrict(A, 1)
    h = TruncatedSeries.zero(ring, 1, order)
    x1 = _var(ring, 1, order, 0)
    for k in range(0, order):
        lhs = A1 + (a0 * (h + x1 * _derive_poly(h))).truncate(order) \
            + (R * x1 * h).truncate(order) \
            - ((x1 * _derive_poly(a0) + a0.scale(p)) * h).truncate(order)
        e = lhs.coefficient((k + 1,))
        if ring.is_zero(e):
            continue
        c = -e / R.constant_term
        h = h + TruncatedSeries.monomial(ring, 1, order, (k,), c)
    return h


def _normal_form_field(ring, p, r, R, nu, order, q=0):
    """The saddle-node model x^p{R(x) y dy + x^{r+1}/(1+nu x^{p+r}) dx}."""
    x = _var(ring, 2, order, 0)
    y = _var(ring, 2, order, 1)
    R2 = _lift_1var(R, 2, order, 0)
    den = _one(ring, 2, order) + TruncatedSeries.monomial(
        ring, 2, order, (p + r, 0), nu)
    xcomp = TruncatedSeries.monomial(ring, 2, order, (p + r + 1, 0)) * \
        den.invert_unit()
    ycomp = (R2 * y).multiply_monomial((p, 0))
    return VectorField([xcomp.truncate(order), ycomp.truncate(order)])


def _final_exponential_solve(delta, p, r, R, nu, order):
    """Solve for F in (eta^2), G in (eta) with Psi = (xi e^F, eta e^G)
    conjugating the prepared field to the normal form; returns (f, g,
    residuals) with f = F/eta^2, g = G/eta."""
    ring = delta.ring
    V1 = delta.components[0].multiply_monomial((p, 0))
    V2 = delta.components[1].multiply_monomial((p, 0))
    W = _normal_form_field(ring, p, r, R, nu, order)
    xi = _var(ring, 2, order, 0)
    eta = _var(ring, 2, order, 1)
    F = TruncatedSeries.zero(ring, 2, order)
    G = TruncatedSeries.zero(ring, 2, order)
    R0 = R.constant_term

    def defects(F, G):
        psi = [xi * F.exp(), eta * G.exp()]
        cache = SubstitutionCache(psi, 2)
        e1 = W.apply(psi[0]) - V1.substitute_with(cache)
        e2 = W.apply(psi[1]) - V2.substitute_with(cache)
        return (e1.divide_monomial((p + 1, 0)), e2.divide_monomial((p, 1)))

    for m in range(1, order + 1):
        e1, e2 = defects(F, G)
        upd = False
        for J, c in e1.homogeneous_part(m).coeffs.items():
            j = J[1]
            if j < 2:
                raise UnpreparedFieldError(
                    f"unexpected low eta-degree defect at {J} in the x-equation")
            F = F - TruncatedSeries.monomial(ring, 2, order, J, c / (j * R0))
            upd = True
        for J, c in e2.homogeneous_part(m).coeffs.items():
            j = J[1]
            if j < 1:
                raise UnpreparedFieldError(
                    f"unexpected low eta-degree defect at {J} in the y-equation")
            G = G - TruncatedSeries.monomial(ring, 2, order, J, c / (j * R0))
            upd = True
        if not upd:
            continue
    e1, e2 = defects(F, G)
    f = F.divide_monomial((0, 2))
    g = G.divide_monomial((0, 1))
    return f, g, [e1, e2]


# -------------------------------------------- divisor-preserving reduce
@dataclass
class LogReduction:
    """Log-frame reduction data of V = x^P (x_i (lam_i + ...) d_i)."""

    kept: dict                  # multi-index J -> 2-vector of ring values
    conjugation: list
    residual: list


def reduce_log_field(V: VectorField, P, lam, order=None) -> LogReduction:
    """Kill every conjugation-killable log coefficient of a divisor field.

    The homological matrix at x^J is (J.L) Id - L P^T on the log-frame
    coefficient pair; slots with J.L in {0, P.L} keep their complement
    content, which is returned in ``kept`` and carries the case
    invariants.  Target and conjugation are rebuilt degree by degree from
    the exact defect, and the final residual is recomputed independently.
    """
    order = V.order if order is None else order
    V = V.truncate(order)
    ring = V.ring
    n = V.nvars
    P = tuple(P)
    PL = _dot_scal(P, lam)
    red_order = order - weight(P)
    if red_order < 1:
        raise UnpreparedFieldError("truncation order too small for the divisor")
    eta = [TruncatedSeries.zero(ring, n, red_order) for _ in range(n)]
    kept: dict = {}

    def defect(eta, kept):
        phi = [_var(ring, n, order, i) * (1 + eta[i].truncate(order))
               for i in range(n)]
        cache = SubstitutionCache(phi, n)
        out = []
        # target field W = x^P x_i (lam_i + kept_i) d_i
        tgt = []
        for i in range(n):
            a = TruncatedSeries.constant(ring, n, order, lam[i])
            for J, vec in kept.items():
                if not ring.is_zero(vec[i]):
                    a = a + TruncatedSeries.monomial(ring, n, order, J, vec[i])
            tgt.append(a)
        W = VectorField([
            (tgt[i] * _var(ring, n, order, i)).multiply_monomial(P)
            for i in range(n)])
        for i in range(n):
            d = V.components[i].substitute_with(cache) - W.apply(phi[i])
            ei = tuple(P[k] + (1 if k == i else 0) for k in range(n))
            out.append(d.divide_monomial(ei))
        return out

    for m in range(1, red_order + 1):
        ds = defect(eta, kept)
        for J in sorted({J for d in ds for J in d.coeffs if weight(J) == m}):
            dvec = [d.coefficient(J) for d in ds]
            JL = _dot_scal(J, lam)
            c, v = _solve_log_slot(ring, J, dvec, P, lam, JL, PL)
            for i in range(n):
                if not ring.is_zero(c[i]):
                    eta[i] = eta[i] + TruncatedSeries.monomial(ring, n,
                                                               red_order, J, c[i])
            if v is not None and any(not ring.is_zero(t) for t in v):
                old = kept.get(J, [ring.zero()] * n)
                kept[J] = [old[i] + v[i] for i in range(n)]
    res = defect(eta, kept)
    phi = [_var(ring, n, order, i) * (1 + eta[i].truncate(order))
           for i in range(n)]
    return LogReduction(kept, phi, res)


def _dot_scal(J, lam):
    acc = None
    for j, l in zip(J, lam):
        if j:
            t = l * j
            acc = t if acc is None else acc + t
    return acc


def _solve_log_slot(ring, J, d, P, lam, JL, PL):
    """Solve d = M_J c + v with v in the kept complement (see reduce)."""
    n = len(d)
    zeroJL = JL is None or _ring_zero(ring, JL)
    zeroPL = PL is None or _ring_zero(ring, PL)
    Pd = _dot_scal(P, d)
    Pd = ring.zero() if Pd is None else Pd
    if zeroPL:
        if zeroJL:
            return [ring.zero()] * n, list(d)       # everything kept
        c = [d[i] / JL for i in range(n)]           # wholly killable
        return c, None
    if zeroJL:
        # image is the Lambda line; keep the complement d - gamma Lambda
        gamma = Pd / PL
        c = [-(gamma / PL) * lam[i] for i in range(n)]
        v = [d[i] - gamma * lam[i] for i in range(n)]
        return c, v
    gap = JL - PL
    if _ring_zero(ring, gap):
        # kernel Lambda, image P-perp: keep the Lambda component
        gamma = Pd / PL
        v = [gamma * lam[i] for i in range(n)]
        c = [(d[i] - v[i]) / PL for i in range(n)]
        return c, v
    # regular slot: solve (JL) c - (P.c) Lambda = d with P.c = Pd / gap
    pc = Pd / gap
    c = [(d[i] + pc * lam[i]) / JL for i in range(n)]
    return c, None


def _ring_zero(ring, v):
    return ring.is_zero(v) if not isinstance(v, complex) else abs(v) < 1e-9

# ----------------------------------------------------------- classifier
@dataclass
class NormalFormReport:
    """Case tag from the prepared-field list plus extracted invariants."""

    case_tag: str
    invariants: dict
    conjugation: list | None = None
    residual: list | None = None
    notes: list = dc_field(default_factory=list)
    eigen_scale: object = None

    def to_json_dict(self):
        def enc(v):
            if isinstance(v, TruncatedSeries):
                return v.to_json_dict()
            if isinstance(v, (list, tuple)):
                return [enc(x) for x in v]
            if isinstance(v, (int, float, str)):
                return v
            return str(v)
        return {
            "caseTag": self.case_tag,
            "invariants": {k: enc(v) for k, v in sorted(self.invariants.items())},
            "notes": list(self.notes),
            "eigenScale": None if self.eigen_scale is None else str(self.eigen_scale),
            "residualZero": (None if self.residual is None else
                             all(r.is_zero() for r in self.residual)),
        }


def classify_centre_field(V: VectorField, order=None) -> NormalFormReport:
    """Sort a prepared planar field into the normal-form case list.

    Decision tree: saturate off the monomial divisor x^p y^q; if the
    saturated field is nonsingular the case is (a)/(d) (tangent to the
    exceptional x = 0) or (b)/(c) (transverse) according to q; otherwise
    the linear part decides: a saddle-node gives (f) for q = 0 and (g)
    for q > 0, two nonzero eigenvalues give (e) when the ratio is
    irrational and the resonant family (h)/(i)/(j) with primes when it is
    a negative rational, split by the first-integral test of the
    descended foliation.  Deterministic: no randomized tie-breaks.
    """
    order = V.order if order is None else order
    V = V.truncate(order)
    ring = V.ring
    sat, expo = saturate(V)
    p, q = expo
    delta = sat
    if not ring.is_zero(delta.components[0].constant_term) or \
            not ring.is_zero(delta.components[1].constant_term):
        return _classify_smooth(V, delta, p, q, order)
    L = linear_part(delta)
    if not L.exact:
        raise UnpreparedFieldError("numeric linear parts are not classified")
    eig, semis = _exact_pair(ring, L)
    mu1, mu2 = eig
    zero1, zero2 = ring.is_zero(mu1), ring.is_zero(mu2)
    if zero1 and zero2:
        raise UnpreparedFieldError("nilpotent linear part is outside the list")
    if zero1 != zero2:
        if q == 0:
            res = saddle_node_normal_form(V, order)
            inv = res.invariants
            report = NormalFormReport(
                "f", {"p": inv.p, "r": inv.r, "R": inv.R, "lambda": inv.nu},
                conjugation=res.conjugation, residual=res.residual,
                eigen_scale=inv.eigen_scale)
            return report
        return _classify_case_g(V, delta, p, q, order)
    # both eigenvalues nonzero: ratio decides
    return _classify_two_eigenvalues(V, delta, p, q, mu1, mu2, order)


def _exact_pair(ring, L):
    eig = L.eigenvalue_tuple()
    return (ring.coerce(eig[0]), ring.coerce(eig[1])), L.semisimple


def _rational_ratio(ring, mu1, mu2):
    """mu2/mu1 as an exact rational, or None when irrational/complex."""
    lam = mu2 / mu1
    if isinstance(lam, QE) and lam.is_rational:
        return lam.ar
    return None


def _classify_smooth(V, delta, p, q, order):
    ring = V.ring
    d1, d2 = delta.components
    tangent = not ring.is_zero(d2.constant_term) and \
        ring.is_zero(d1.constant_term)
    transverse = not ring.is_zero(d1.constant_term)
    if tangent:
        if q == 0:
            conj, resid = _flow_box_a(V, delta, p, order)
            return NormalFormReport("a", {"p": p}, conjugation=conj,
                                    residual=resid)
        if q == 1:
            conj, resid = _flow_box_d(V, delta, p, q, order)
            return NormalFormReport("d", {"p": p, "q": q}, conjugation=conj,
                                    residual=resid)
        raise UnpreparedFieldError(
            "smooth tangent direction with q >= 2 is outside the list")
    if transverse:
        # the divisor contributes one extra power of x: V = x^{p}(...) with
        # the transverse unit, so the listed p is the extracted one minus 1
        if p < 1:
            raise UnpreparedFieldError("transverse case needs x-divisibility")
        tag = "b" if q == 0 else "c"
        rep = _case_bc(V, delta, p - 1, q, order)
        rep.case_tag = tag
        return rep
    raise UnpreparedFieldError("saturated field vanishes at the origin")


def _flow_box_solve(delta, rhs, order):
    """Solve delta(h) = rhs for delta = u d/dy + x a d/dx, by x-graded
    termwise integration in y (integration constants set to zero)."""
    ring = delta.ring
    u0 = _coeff_of_power(delta.components[1], 0, 0)
    u0inv = u0.invert_unit()
    h = TruncatedSeries.zero(ring, 2, order)
    for _ in range(order + 2):
        defect = rhs - delta.apply(h)
        if defect.is_zero():
            break
        # invert the leading u0(y) d/dy term one x-power at a time
        k = min(J[0] for J in defect.coeffs)
        sl = _coeff_of_power(defect, 0, k)
        upd = _antiderive((sl * u0inv).truncate(order), 0)
        h = h + _embed_slice(upd, 2, order, 0, k)
    return h


def _embed_slice(s1, nvars, order, xvar, k):
    coeffs = {}
    for (j,), c in s1.coeffs.items():
        J = [0] * nvars
        J[xvar] = k
        J[1 - xvar] = j
        if sum(J) <= order:
            coeffs[tuple(J)] = c
    return TruncatedSeries(s1.ring, nvars, order, coeffs)


def _flow_box_a(V, delta, p, order):
    """Conjugation of x^p(u dy + x a dx) to the model xi^p d/eta."""
    ring = V.ring
    if p < 1:
        raise UnpreparedFieldError("the exceptional x-divisor is missing (p=0)")
    if not delta.components[0].is_zero():
        if _x_valuation(delta.components[0], 0) < 1:
            raise UnpreparedFieldError("exceptional x = 0 is not invariant")
        a = delta.components[0].divide_monomial((1, 0))
    else:
        a = TruncatedSeries.zero(ring, 2, order)
    h = _flow_box_solve(delta, -a, order)
    xi = _var(ring, 2, order, 0) * h.exp()
    # eta: delta(eta) = e^{p h}, so that V(eta) = xi^p exactly
    eta = _flow_box_solve(delta, (h.scale(p)).exp(), order)
    conj_inv = [xi, eta]          # map: original -> model coordinates
    phi = invert_map(conj_inv)    # model -> original, the conjugation proper
    W = transform_field(V, phi, psi=conj_inv)
    model = VectorField([TruncatedSeries.zero(ring, 2, order),
                         TruncatedSeries.monomial(ring, 2, order, (p, 0))])
    resid = [wc - mc for wc, mc in zip(W.components, model.components)]
    return phi, resid


def _flow_box_d(V, delta, p, q, order):
    """Conjugation of x^p y (u dy + x a dx) to xi^p eta d/eta (q = 1).

    The x-coordinate keeps one reparametrization degree of freedom: the
    first integral xi = x e^h is composed with xi -> xi rho(xi), where
    rho^p absorbs the y-independent part of the multiplier (a p-th root
    of a unit series with scalar part 1).  The unit's scalar u(0) is the
    recorded eigenvalue normalization.
    """
    ring = V.ring
    if p < 1:
        raise UnpreparedFieldError("the exceptional x-divisor is missing (p=0)")
    u = delta.components[1]
    if not delta.components[0].is_zero():
        if _x_valuation(delta.components[0], 0) < 1:
            raise UnpreparedFieldError("exceptional x = 0 is not invariant")
        a = delta.components[0].divide_monomial((1, 0))
    else:
        a = TruncatedSeries.zero(ring, 2, order)
    c0 = u.constant_term
    inv_c0 = c0.inverse() if ring.exact else 1 / c0
    urel = u.scale(inv_c0)
    drel = VectorField([delta.components[0].scale(inv_c0), urel])
    h = _flow_box_solve(drel, -a.scale(inv_c0), order)
    xi = _var(ring, 2, order, 0) * h.exp()
    eph = h.scale(p).exp()
    # joint solve: unit s(xi) (one variable) and G in the (y)-ideal with
    #   urel + y drel(G) = e^{p h} s(xi)
    y = _var(ring, 2, order, 1)
    s = TruncatedSeries.one(ring, 1, order)
    G = TruncatedSeries.zero(ring, 2, order)
    for _ in range(order + 3):
        sxi = s.substitute([xi])
        defect = (eph * sxi).truncate(order) - urel \
            - (y * drel.apply(G)).truncate(order)
        if defect.is_zero():
            break
        m = min(weight(J) for J in defect.coeffs)
        for J, c in defect.homogeneous_part(m).coeffs.items():
            if J[1] == 0:
                s = s - TruncatedSeries.monomial(ring, 1, order, (J[0],), c)
            else:
                G = G + TruncatedSeries.monomial(ring, 2, order, J, c / J[1])
    rho = series_root(s, p)
    xi_final = xi * rho.substitute([xi])
    eta = y * G.exp()
    conj_inv = [xi_final, eta]
    phi = invert_map(conj_inv)
    W = transform_field(V, phi, psi=conj_inv)
    model_y = TruncatedSeries.monomial(ring, 2, order, (p, 1), c0)
    resid = [W.components[0], W.components[1] - model_y]
    return phi, resid


def _case_bc(V, delta, p_list, q, order):
    """Cases (b)/(c): rectify the invariant coordinate, then normalize the
    x-profile per power of it, extracting nu as a series in ytilde."""
    ring = V.ring
    if p_list < 1:
        raise UnpreparedFieldError("transverse case needs p >= 1 in the list form")
    ytil = rectify_smooth_factor(V, order)
    fwd = [_var(ring, 2, order, 0), ytil]
    phi = invert_map(fwd)
    W = transform_field(V, phi, psi=fwd)
    F = W.components[0]
    rect_resid = W.components[1]          # V(ytilde) = 0 pushed forward
    if q:
        F = F.divide_monomial((0, q))
    if _x_valuation(F, 0) != p_list + 1:
        raise UnpreparedFieldError(
            "transverse component is not x^(p+1) times a unit")
    w_of_y = _coeff_of_power(F, 0, p_list + 1)
    if ring.is_zero(w_of_y.constant_term):
        raise UnpreparedFieldError("leading x-coefficient vanishes at y = 0")
    total = phi
    scale = w_of_y.constant_term
    if not ring.eq(scale, ring.one()) or \
            not w_of_y.eq(TruncatedSeries.one(ring, 1, order)):
        root = _scalar_nth_root(ring, scale, p_list)
        if root is None:
            raise UnpreparedFieldError(
                "leading coefficient has no p-th root in the ring")
        inv_scale = scale.inverse() if ring.exact else 1 / scale
        inv_root = root.inverse() if ring.exact else 1 / root
        rho = series_root(w_of_y.scale(inv_scale).invert_unit(),
                          p_list).scale(inv_root)
        rho2 = _lift_1var(rho, 2, order, 1)
        smap = [_var(ring, 2, order, 0) * rho2, _var(ring, 2, order, 1)]
        W = transform_field(W, smap)
        total = compose_map(total, smap)
        F = W.components[0]
        if q:
            F = F.divide_monomial((0, q))
    # per-power profile: phi_x tangent-to-identity in x with y-series
    # coefficients, and nu(y); target x^{p+1}/(1 + nu(y) x^p)
    pl = p_list
    phix = _var(ring, 2, order, 0)
    nu = TruncatedSeries.zero(ring, 1, order)
    y2 = _var(ring, 2, order, 1)
    for k in range(1, order):
        nu2 = _lift_1var(nu, 2, order, 1)
        den = _one(ring, 2, order) + (nu2 * (phix ** pl)).truncate(order)
        target = ((phix ** (pl + 1)) * den.invert_unit()).truncate(order)
        defect = (F * phix.derive(0).truncate(order)).truncate(order) - target
        slot = _coeff_of_power(defect, 0, pl + 1 + k)
        if slot.is_zero():
            continue
        if k == pl:
            nu = nu - slot
        else:
            upd = slot.scale(QE(1, d=getattr(ring, "d", 0)) / (pl + 1 - (k + 1))
                             if ring.exact else 1.0 / (pl - k))
            phix = phix + _lift_1var(upd, 2, order, 1).multiply_monomial((k + 1, 0))
    # final residual of the profile equation
    nu2 = _lift_1var(nu, 2, order, 1)
    den = _one(ring, 2, order) + (nu2 * (phix ** pl)).truncate(order)
    target = ((phix ** (pl + 1)) * den.invert_unit()).truncate(order)
    prof_resid = (F * phix.derive(0).truncate(order)).truncate(order) - target
    inv1 = invert_map([phix, y2])
    total = compose_map(total, inv1)
    return NormalFormReport(
        "b", {"p": pl, "q": q, "nu": nu}, conjugation=total,
        residual=[rect_resid, prof_resid])


# ----------------------------------------------------------- case (e)
def _diagonalize_if_needed(V, order):
    ring = V.ring
    L = linear_part(V)
    M = [[ring.coerce(L.matrix[i][j]) for j in range(2)] for i in range(2)]
    if ring.is_zero(M[0][1]) and ring.is_zero(M[1][0]):
        return V, None, (M[0][0], M[1][1])
    eig = L.eigenvalue_tuple()
    mu1, mu2 = ring.coerce(eig[0]), ring.coerce(eig[1])
    if mu1 == mu2:
        raise UnpreparedFieldError("repeated eigenvalues cannot be split")
    v1 = _kernel_vector(ring, [[M[0][0] - mu1, M[0][1]],
                               [M[1][0], M[1][1] - mu1]])
    v2 = _kernel_vector(ring, [[M[0][0] - mu2, M[0][1]],
                               [M[1][0], M[1][1] - mu2]])
    lin_map = [
        _var(ring, 2, order, 0).scale(v1[0]) + _var(ring, 2, order, 1).scale(v2[0]),
        _var(ring, 2, order, 0).scale(v1[1]) + _var(ring, 2, order, 1).scale(v2[1])]
    W = transform_field(V, lin_map)
    return W, lin_map, (mu1, mu2)


def _classify_two_eigenvalues(V, delta, p, q, mu1, mu2, order):
    ring = V.ring
    if p < 1:
        raise UnpreparedFieldError("prepared fields carry the x-divisor (p >= 1)")
    ratio = _rational_ratio(ring, mu1, mu2)
    if ratio is None:
        # irrational ratio: case (e)
        delta_d, lin_map, (m1, m2) = _diagonalize_if_needed(delta, order)
        lam = (ring.one(), m2 / m1)
        scale = m1
        Vn = VectorField([c.multiply_monomial((p, q)) for c in
                          delta_d.scale(m1.inverse() if ring.exact else 1 / m1)
                          .components])
        red = reduce_log_field(Vn, (p, q), lam, order)
        stray = {J: v for J, v in red.kept.items() if J != (p, q)}
        notes = []
        if stray:
            notes.append(f"unreduced slots at order {order}: {sorted(stray)}")
        vP = red.kept.get((p, q), [ring.zero(), ring.zero()])
        nutilde = vP[0] / lam[0]
        u = 1 + TruncatedSeries.monomial(ring, 2, order, (p, q), nutilde)
        mono = monomialise(u, (p, q), lam, order)
        conj = compose_map(red.conjugation, mono.conjugation)
        if lin_map is not None:
            conj = compose_map(lin_map, conj)
        return NormalFormReport(
            "e", {"p": p, "q": q, "lambda": lam[1], "nu": mono.nu},
            conjugation=conj, residual=mono.residual, notes=notes,
            eigen_scale=scale)
    # rational ratio: resonant family (or unprepared when positive)
    if ratio >= 0:
        raise UnpreparedFieldError(
            "non-negative rational eigenvalue ratio: input is not reduced")
    k = int(-ratio.numerator)
    l = int(ratio.denominator)
    return _classify_resonant(V, delta, p, q, k, l, mu1, order)


# ------------------------------------------------- resonant cases (h-j)
def _classify_resonant(V, delta, p, q, k, l, mu1, order):
    """Negative rational ratio -k/l: split (h)/(i)/(j) and primes.

    The saturated field is normalized so the eigenvalues are (l, -k);
    reduce_log_field then confines the data to the resonant slots: the
    u-lattice J = s(k,l) carries the descended-foliation test
    C_s = k v1 + l v2 (first integral exists iff all C_s vanish), the
    shifted lattice J = P + s(k,l) carries the multiplier invariants.
    Classification only; profile coefficients are reported when the slot
    reading is unpolluted (n = 0 or (i,j) = 0) and flagged otherwise.
    """
    ring = V.ring
    g = math.gcd(k, l)
    k, l = k // g, l // g
    n = min(p // k, q // l)
    i, j = p - n * k, q - n * l
    lam = (QE(l, d=ring.d), QE(-k, d=ring.d))
    scale = mu1 / l
    Vn = V.scale(scale.inverse() if ring.exact else 1 / scale)
    red = reduce_log_field(Vn, (p, q), lam, order)
    lattice0 = {}
    latticeP = {}
    stray = {}
    for J, v in red.kept.items():
        s0 = _lattice_index(J, (0, 0), k, l)
        sP = _lattice_index(J, (p, q), k, l)
        if s0 is not None:
            lattice0[s0] = v
        elif sP is not None:
            latticeP[sP] = v
        else:
            stray[J] = v
    notes = []
    if stray:
        notes.append(f"content outside resonant slots at order {order}: "
                     f"{sorted(stray)}")
    Cs = {s: v[0] * k + v[1] * l for s, v in lattice0.items()}
    Cs = {s: c for s, c in Cs.items() if not ring.is_zero(c)}
    singular = bool(Cs)
    r = min(Cs) if Cs else None
    inv = {"k": k, "l": l, "i": i, "j": j, "n": n, "p": p, "q": q}
    first_integral = not singular
    inv["first_integral"] = first_integral
    clean = (n == 0) or (i == 0 and j == 0)
    if singular:
        inv["r"] = r
        if (i, j) == (0, 0):
            tag = "i"
            # log pair at slot s: (l R_s + prof_s, -k R_s)
            R = {s: -(v[1]) / k for s, v in lattice0.items()}
            prof = {s: lattice0[s][0] - R.get(s, ring.zero()) * l
                    for s in lattice0}
            inv["R"] = _slot_series(ring, R, order)
            nu = _profile_nu(ring, prof, r, n, notes, order)
            inv["nu"] = nu
        else:
            tag = "h" if (n >= 1 or q > 0) else "h'"
            if clean:
                galam = {s: v for s, v in latticeP.items()}
                Rcoeffs = {}
                lamc = None
                for s, v in galam.items():
                    gamma = _gamma_of(ring, v, (p, q), lam)
                    if s <= r - 1:
                        Rcoeffs[s] = -gamma
                    elif s == n + r:
                        lamc = -gamma
                    elif not ring.is_zero(gamma):
                        notes.append(f"multiplier content at unexpected slot {s}")
                inv["R"] = _slot_series(ring, Rcoeffs, order)
                if lamc is not None:
                    inv["lambda"] = lamc
                nu = _profile_nu_perp(ring, lattice0, (p, q), lam, r, notes)
                if nu is not None:
                    inv["nu"] = nu
            else:
                notes.append(f"profile invariants undetermined at order {order}: "
                             "n >= 1 slot reading is polluted by the reduction")
    else:
        if (i, j) == (0, 0):
            tag = "j'"
            if lattice0 or latticeP:
                notes.append("nonzero kept content for a smooth descended field")
        elif q == 0 and n == 0:
            tag = "j''"
            nus = {s: -_gamma_of(ring, v, (p, q), lam)
                   for s, v in latticeP.items()}
            inv["nu_series"] = _slot_series(ring, nus, order)
        else:
            tag = "j"
            nus = {s: -_gamma_of(ring, v, (p, q), lam)
                   for s, v in latticeP.items()}
            inv["nu_series"] = _slot_series(ring, nus, order)
    notes.append("resonant case: classification and slot invariants only")
    return NormalFormReport(tag, inv, conjugation=None, residual=None,
                            notes=notes, eigen_scale=scale)


def _lattice_index(J, base, k, l):
    dx, dy = J[0] - base[0], J[1] - base[1]
    if dx < 0 or dy < 0:
        return None
    if dx % k or dy % l:
        return None
    s1, s2 = dx // k, dy // l
    if s1 != s2:
        return None
    if base == (0, 0) and s1 == 0:
        return None
    return s1


def _gamma_of(ring, v, P, lam):
    PL = lam[0] * P[0] + lam[1] * P[1]
    Pv = v[0] * P[0] + v[1] * P[1]
    if ring.is_zero(PL):
        return v[0] / lam[0]
    return Pv / PL


def _slot_series(ring, coeffs, order):
    return TruncatedSeries(ring, 1, order,
                           {(s,): c for s, c in coeffs.items()
                            if not ring.is_zero(c)})


def _profile_nu(ring, prof, r, n, notes, order):
    base = prof.get(r)
    if base is None or ring.is_zero(base):
        notes.append("profile leading slot vanished unexpectedly")
        return None
    hi = prof.get(2 * r + n)
    if hi is None:
        return ring.zero()
    return -(hi / base)


def _profile_nu_perp(ring, lattice0, P, lam, r, notes):
    """nu from the non-multiplier content chain at the u-lattice."""
    def perp(v):
        gamma = _gamma_of(ring, v, P, lam)
        return [v[0] - gamma * lam[0], v[1] - gamma * lam[1]]
    base = lattice0.get(r)
    if base is None:
        return None
    b = perp(base)
    hi = lattice0.get(2 * r)
    if hi is None:
        return ring.zero()
    h = perp(hi)
    for t in range(2):
        if not ring.is_zero(b[t]):
            return -(h[t] / b[t])
    notes.append("profile direction vanished unexpectedly")
    return None


# ------------------------------------------------------------- case (g)
def _classify_case_g(V, delta, p, q, order):
    """Saddle-node with both branches in the divisor: invariants by the
    per-power-of-y solves.

    Stage 1 (mod y): x -> x e^f, y -> y e^g and the scalar nu bring the
    restricted data to the profile v = q/(1 + nu x^r), u-multiplier 1.
    Stage 2 (levels 1..q): exponential corrections in y^j kill each level;
    at level q the uncorrectable slots are the polynomial R (degree
    <= r-1) and the scalar multiplier lambda at x^{p+r}.  Classification
    and invariants only, per the completion-context caveat.
    """
    ring = V.ring
    L = linear_part(delta)
    M = [[ring.coerce(L.matrix[a][b]) for b in range(2)] for a in range(2)]
    if not (ring.is_zero(M[0][1]) and ring.is_zero(M[1][0])):
        raise UnpreparedFieldError("tagged saddle-node must have diagonal jet")
    swapped = False
    if not ring.is_zero(M[0][0]) and ring.is_zero(M[1][1]):
        raise UnpreparedFieldError(
            "strong direction along x: swap coordinates before classifying")
    c = M[1][1]
    scale = c
    delta = delta.scale(c.inverse() if ring.exact else 1 / c)
    notes = ["normal form (g) holds in the completion at the point "
             "(weaker than the full formal neighbourhood)"]
    # mod-y data
    cx = _restrict(delta.components[0], 1)
    val = _x_valuation(cx, 0)
    if val is None or val < 2:
        raise UnpreparedFieldError("weak-branch restriction is degenerate")
    r = val - 1
    w0 = cx.coefficient((val,))
    if not ring.eq(w0, ring.coerce(q)):
        root = _scalar_nth_root(ring, w0 / q, r)
        if root is None:
            raise UnpreparedFieldError(
                "weak-branch leading coefficient not scalable to q")
        alpha = root.inverse() if ring.exact else 1 / root
        lin = [_var(ring, 2, order, 0).scale(alpha), _var(ring, 2, order, 1)]
        delta = transform_field(delta, lin)
        cx = _restrict(delta.components[0], 1)
    uraw = _coeff_of_power(delta.components[1], 1, 1)
    uraw = TruncatedSeries(ring, 1, order,
                           {J: c2 for J, c2 in uraw.coeffs.items()})
    f1, g1, nu, flags = _g_mod_y_solve(ring, cx, uraw, p, q, r, order)
    notes.extend(flags)
    # apply the mod-y normalization to the full field
    x2, y2 = _var(ring, 2, order, 0), _var(ring, 2, order, 1)
    mmap = [x2 * _lift_1var(f1, 2, order, 0).exp(),
            y2 * _lift_1var(g1, 2, order, 0).exp()]
    W = transform_field(VectorField(
        [comp.multiply_monomial((p, q)) for comp in delta.components],
        tags=V.tags), mmap)
    R, lam, resid_levels, lvl_notes = _g_level_solve(ring, W, p, q, r, nu, order)
    notes.extend(lvl_notes)
    inv = {"p": p, "q": q, "r": r, "nu": nu, "R": R}
    if lam is not None:
        inv["lambda"] = lam
    return NormalFormReport("g", inv, conjugation=None,
                            residual=resid_levels, notes=notes,
                            eigen_scale=scale)


def _g_mod_y_solve(ring, cx, uraw, p, q, r, order):
    """1-variable stage: profiles v_D -> 1/(1+nu x^r), u_D -> 1."""
    x1 = _var(ring, 1, order, 0)
    f = TruncatedSeries.zero(ring, 1, order)
    g = TruncatedSeries.zero(ring, 1, order)
    nu = ring.zero()
    notes = []
    qinv = QE(1, d=ring.d) / q if ring.exact else 1.0 / q

    def current(f, g, nu):
        phi = x1 * f.exp()
        psi1 = invert_map([phi])[0]
        cnew = ((cx + (cx * x1 * _derive_poly(f))).truncate(order)
                * f.exp()).substitute([psi1])
        unew = (uraw + (cx * _derive_poly(g)).truncate(order)).substitute([psi1])
        vD = cnew.divide_monomial((r + 1,)).scale(qinv)
        uD = unew + vD.multiply_monomial((r,)).scale(p)
        den = 1 + TruncatedSeries.monomial(ring, 1, order, (r,), nu)
        vtarget = den.invert_unit()
        return vD - vtarget, uD - 1

    for m in range(1, order + 1):
        dv, du = current(f, g, nu)
        ev = dv.coefficient((m,))
        if not ring.is_zero(ev):
            if m == r:
                nu = nu - ev
            else:
                f = f + TruncatedSeries.monomial(ring, 1, order, (m,),
                                                 -ev / (m - r) if ring.exact
                                                 else -ev / (m - r))
        eu = du.coefficient((m,))
        if not ring.is_zero(eu):
            if m <= r:
                notes.append(f"u-multiplier content at degree {m} is outside "
                             "the prepared class")
            else:
                g = g + TruncatedSeries.monomial(
                    ring, 1, order, (m - r,),
                    -eu / (q * (m - r)) if ring.exact else -eu / (q * (m - r)))
    dv, du = current(f, g, nu)
    if not dv.is_zero() or not du.truncate(order - 1).is_zero():
        notes.append("mod-y normalization left a residual at the truncation")
    return f, g, nu, notes


def _g_level_solve(ring, W, p, q, r, nu, order):
    """Kill the y-levels 1..q of the defect against the parametric model;
    level q fixes R (deg <= r-1) and lambda at x^{p+r}."""
    x2, y2 = _var(ring, 2, order, 0), _var(ring, 2, order, 1)
    Rcoeffs = {}
    lam = None
    notes = []
    W_cur = W

    def model(Rco, lamv):
        Rser = TruncatedSeries(ring, 2, order,
                               {(s, 0): cv for s, cv in Rco.items()})
        S = Rser
        if lamv is not None:
            S = S + TruncatedSeries.monomial(ring, 2, order, (p + r, 0), lamv)
        mult = (1 + (S * TruncatedSeries.monomial(ring, 2, order, (0, q)))
                .truncate(order)).invert_unit()
        prof = (1 + TruncatedSeries.monomial(ring, 2, order, (r, 0), nu)) \
            .invert_unit()
        xr = TruncatedSeries.monomial(ring, 2, order, (r, 0))
        bx = (xr * prof * x2).scale(q)
        by = y2 + (xr * prof * y2).scale(-p)
        mono = TruncatedSeries.monomial(ring, 2, order, (p, q))
        return VectorField([(mono * mult * bx).truncate(order),
                            (mono * mult * by).truncate(order)])

    for level in range(1, q + 1):
        for _ in range(order + 1):
            Wm = model(Rcoeffs, lam)
            d1 = W_cur.components[0] - Wm.components[0]
            d2 = W_cur.components[1] - Wm.components[1]
            # defect at y-level q+level over the monomial
            s1 = _level_slice(d1, p, q + level, order)
            s2 = _level_slice(d2, p, q + level, order)
            if s1 is None and s2 is None:
                break
            alpha, beta, newR, newlam, stuck = _g_level_update(
                ring, s1, s2, p, q, r, nu, level, order)
            Rchanged = False
            for s, cv in newR.items():
                Rcoeffs[s] = Rcoeffs.get(s, ring.zero()) + cv
                Rchanged = True
            if newlam is not None:
                lam = (lam if lam is not None else ring.zero()) + newlam
                Rchanged = True
            if stuck:
                notes.append(f"level-{level} defect exceeds the prepared "
                             f"class at order {order}")
                break
            if alpha.is_zero() and beta.is_zero() and not Rchanged:
                break
            if not (alpha.is_zero() and beta.is_zero()):
                E = _g_correction_field(ring, alpha, beta, level, p, q, order)
                flow = _flow_map(E, order)
                W_cur = transform_field(W_cur, flow)
    Wm = model(Rcoeffs, lam)
    resid = [(W_cur.components[t] - Wm.components[t]) for t in range(2)]
    # classification ran modulo y^(q+1): report the defect there
    resid = [_truncate_ylevel(rc, q + (order > 0)) for rc in resid]
    Rser = TruncatedSeries(ring, 1, order,
                           {(s,): cv for s, cv in Rcoeffs.items()})
    return Rser, lam, resid, notes


def _level_slice(d, p, ylevel, order):
    """Coefficient of y^ylevel as a 1-var x-series, or None when absent."""
    sl = _coeff_of_power(d, 1, ylevel)
    if sl.is_zero():
        return None
    return sl


def _truncate_ylevel(s, maxlevel):
    return TruncatedSeries(s.ring, s.nvars, s.order,
                           {J: c for J, c in s.coeffs.items()
                            if J[1] <= maxlevel})


def _g_correction_field(ring, alpha, beta, level, p, q, order):
    """E = y^level (alpha(x) D1 + beta(x) D2) as a vector field."""
    a2 = _lift_1var(alpha, 2, order, 0)
    b2 = _lift_1var(beta, 2, order, 0)
    x2, y2 = _var(ring, 2, order, 0), _var(ring, 2, order, 1)
    ylev = TruncatedSeries.monomial(ring, 2, order, (0, level))
    ex = (ylev * b2 * x2).scale(q)
    ey = (ylev * (a2 - b2.scale(p)) * y2).truncate(order)
    return VectorField([ex.truncate(order), ey])


def _flow_map(E: VectorField, order):
    """Time-1 flow of a (valuation-raising) field as a formal map."""
    ring = E.ring
    n = E.nvars
    out = []
    for i in range(n):
        acc = _var(ring, n, order, i)
        term = acc
        fact = 1
        for m in range(1, order + 2):
            term = E.apply(term)
            if term.is_zero():
                break
            fact *= m
            coeff = QE(1, d=ring.d) / fact if ring.exact else 1.0 / fact
            acc = acc + term.scale(coeff)
        out.append(acc)
    return out


def _g_level_update(ring, s1, s2, p, q, r, nu, level, order):
    """Linear responses at one y-level: solve for the correction pair and,
    at level q, the R/lambda slots."""
    zero1 = TruncatedSeries.zero(ring, 1, order)
    alpha = zero1
    beta = zero1
    newR = {}
    newlam = None
    stuck = False
    # D1/D2 content of the defect: components are (x * C2 * q, y-part);
    # in log coordinates d1 = x^p y^{q+level} x * (q b), so read b from s1
    # and a - p b from s2, with the x^p monomial still present.
    if s1 is not None:
        b_content = s1.divide_monomial((p + 1,)).scale(
            QE(1, d=ring.d) / q if ring.exact else 1.0 / q)
    else:
        b_content = zero1
    if s2 is not None:
        ab_content = s2.divide_monomial((p,))
    else:
        ab_content = zero1
    a_content = ab_content + b_content.scale(p)
    j = level
    if j < q:
        # divisors (q - j) on D1 and -j-ish on D2 (leading terms)
        for (s,), cv in a_content.coeffs.items():
            alpha = alpha + TruncatedSeries.monomial(
                ring, 1, order, (s,), cv / (q - j))
        for (s,), cv in b_content.coeffs.items():
            beta = beta + TruncatedSeries.monomial(
                ring, 1, order, (s,), -cv / j)
        return alpha, beta, newR, newlam, stuck
    # level q: D1 slots s <= r-1 -> R_s; s = p + r -> lambda; otherwise
    # alpha with divisor q(p - (s - r)) x^r-shifted; D2 slots via beta
    for (s,), cv in sorted(a_content.coeffs.items()):
        if s <= r - 1:
            newR[s] = cv       # model enters with a minus sign: d = -(-R_s)
        elif s == p + r:
            newlam = (newlam if newlam is not None else ring.zero()) + cv
        elif s >= r:
            denom = q * (p - (s - r))
            if denom == 0:
                stuck = True
                continue
            alpha = alpha + TruncatedSeries.monomial(
                ring, 1, order, (s - r,), cv / denom)
        else:
            stuck = True
    for (s,), cv in b_content.coeffs.items():
        beta = beta + TruncatedSeries.monomial(ring, 1, order, (s,), -cv / q)
    return alpha, beta, newR, newlam, stuck


# ------------------------------------------------------ centre manifold
@dataclass
class CentreManifoldResult:
    graph: TruncatedSeries          # f(x, y) with z = f the invariant graph
    witness: TruncatedSeries        # h with V(z - f) = h (z - f) + remainder
    remainder: TruncatedSeries      # the division remainder (zero on success)
    certified: bool                 # witness checked by multiplication


def centre_manifold_graph(V: VectorField, order=None,
                          tangency: int = 0) -> CentreManifoldResult:
    """Solve the graph equation for the invariant surface z = f(x, y).

    The field must have the prepared shape: the z-component is z times a
    unit plus a z-free remainder, and the (x, y)-components raise the
    total degree (topologically nilpotent solve).  The certificate is an
    explicit division witness h with V(z - f) = h (z - f) + O(m^{N+1}),
    verified by multiplication.  ``tangency`` demands f in (x)^e.
    """
    order = V.order if order is None else order
    if V.nvars != 3:
        raise ValueError("centre manifolds live in three variables")
    V = V.truncate(order)
    ring = V.ring
    zcoef = V.components[2].coefficient((0, 0, 1))
    if ring.is_zero(zcoef):
        raise UnpreparedFieldError("z-component has no z-linear term")
    f = TruncatedSeries.zero(ring, 2, order)
    prev = None
    for _ in range(order + 2):
        defect = _graph_defect(V, f, order)
        if defect.is_zero():
            break
        val = defect.valuation()
        if prev is not None and val <= prev:
            raise UnpreparedFieldError(
                f"graph solve stalled at degree {val}: the nilpotent "
                "preparation exponent is too small for this order")
        prev = val
        f = f - defect.homogeneous_part(val).scale(
            zcoef.inverse() if ring.exact else 1 / zcoef)
        f = f.truncate(order)
    defect = _graph_defect(V, f, order)
    if not defect.is_zero():
        raise UnpreparedFieldError("graph equation did not close at this order")
    if tangency:
        for J in f.coeffs:
            if J[0] < tangency:
                raise UnpreparedFieldError(
                    f"requested tangency (x)^{tangency} failed at {J}")
    # certificate
    f3 = _lift_xy(f, order)
    z3 = _var(ring, 3, order, 2)
    G = V.apply(z3 - f3)
    h, rem = _divide_by_graph(G, f, order)
    check = (h * (z3 - f3)).truncate(order) + _lift_xy(rem, order)
    certified = check.eq(G) and rem.is_zero()
    return CentreManifoldResult(f, h, rem, certified)


def _graph_defect(V, f, order):
    """(V3 - V1 f_x - V2 f_y) restricted to z = f, as a 2-var series."""
    ring = V.ring
    fx = f.derive(0).truncate(order)
    fy = f.derive(1).truncate(order)
    x2 = _var(ring, 2, order, 0)
    y2 = _var(ring, 2, order, 1)
    subs = [x2, y2, f]
    g3 = V.components[2] - (V.components[0] * _lift_xy(fx, order)).truncate(order) \
        - (V.components[1] * _lift_xy(fy, order)).truncate(order)
    return g3.substitute(subs)


def _lift_xy(s, order):
    coeffs = {(J[0], J[1], 0): c for J, c in s.coeffs.items()}
    return TruncatedSeries(s.ring, 3, order, coeffs)


def _divide_by_graph(G, f, order):
    """Synthetic division of G(x,y,z) by (z - f(x,y)): (quotient, rem)."""
    ring = G.ring
    max_z = max((J[2] for J in G.coeffs), default=0)
    H = {}
    Hnext = TruncatedSeries.zero(ring, 2, order)
    for jz in range(max_z, 0, -1):
        Gj = _coeff_of_power(G, 2, jz)
        Hj = (Gj + (f * Hnext).truncate(order))
        H[jz - 1] = Hj
        Hnext = Hj
    G0 = _coeff_of_power(G, 2, 0)
    rem = (G0 + (f * Hnext).truncate(order)) if H else G0
    hcoeffs = {}
    for jz, Hj in H.items():
        for J, c in Hj.coeffs.items():
            K = (J[0], J[1], jz)
            if sum(K) <= order:
                hcoeffs[K] = c
    h = TruncatedSeries(ring, 3, order, hcoeffs)
    return h, rem
