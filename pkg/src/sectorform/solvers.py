"""Formal solvers: small-divisor right inverses, the maximal-ideal fixed
point, obstruction detection, field linearisation and monomialisation.

The linear model throughout is chi*f + sum_i lam_i x_i df/dx_i; its right
inverse divides the coefficient at x^J by chi + J.Lambda and fails exactly
on resonances, which are first-class results here, not exceptions to hide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .fields import VectorField, linear_part
from .rings import QE
from .series import SubstitutionCache, TruncatedSeries, iter_indices, weight


class ResonanceError(ValueError):
    """A divisor chi + J.Lambda vanished; carries the offending index."""

    def __init__(self, J, component=None, chi=None):
        self.J = tuple(J)
        self.component = component
        self.chi = chi
        where = f" (component {component})" if component is not None else ""
        super().__init__(f"resonance at J={self.J}{where}")


class StagnationError(RuntimeError):
    """The fixed-point iteration stopped gaining valuation."""

    def __init__(self, degree):
        self.degree = degree
        super().__init__(f"iteration stagnated at degree {degree}")


def euler_operator(chi, lam, f: TruncatedSeries) -> TruncatedSeries:
    """Forward action chi*f + sum lam_i x_i df/dx_i."""
    out = f.scale(chi) if not _is_zero_scalar(chi) else \
        TruncatedSeries.zero(f.ring, f.nvars, f.order)
    for i, l in enumerate(lam):
        if _is_zero_scalar(l):
            continue
        term = f.derive(i).truncate(f.order).multiply_monomial(
            tuple(1 if k == i else 0 for k in range(f.nvars)), l)
        out = out + term
    return out


def _is_zero_scalar(v):
    return v.is_zero if isinstance(v, QE) else v == 0


def _dot(J, lam):
    acc = None
    for j, l in zip(J, lam):
        if j:
            term = l * j
            acc = term if acc is None else acc + term
    return acc


def power_series_right_inverse(chi, lam, h: TruncatedSeries) -> TruncatedSeries:
    """Kh = sum h_J / (chi + J.Lambda) x^J.

    Exact right inverse of the euler_operator; preserves the maximal-ideal
    valuation (no loss, beta = 0).  Raises ResonanceError at a vanishing
    divisor with the offending J; chi = 0 demands a zero constant term.
    """
    ring = h.ring
    chi0 = _is_zero_scalar(chi)
    if chi0 and not ring.is_zero(h.constant_term):
        raise ValueError("chi = 0 requires a right-hand side in the maximal ideal")
    out = {}
    for J, c in h.coeffs.items():
        dot = _dot(J, lam)
        div = chi if dot is None else (dot + chi)
        if _div_is_zero(ring, div):
            if ring.is_zero(c):
                continue
            raise ResonanceError(J, chi=chi)
        out[J] = c / div
    return TruncatedSeries(ring, h.nvars, h.order, out)


def _div_is_zero(ring, div):
    if isinstance(div, QE):
        return div.is_zero
    if isinstance(div, complex):
        return abs(div) < 1e-9
    return div == 0


@dataclass
class LinearisedOperator:
    """chi, Lambda and the nonlinearity hook P(f) - P'(0) f.

    The hook is a callable series -> series supplied by the caller; the
    polynomial-in-derived-variables contract behind it is spot-checked by
    valuation probes and by validate_linear_part.
    """

    chi: object
    lam: tuple
    perturbation: object = None          # callable f -> P(f) - P'(0) f

    def linear(self, f):
        return euler_operator(self.chi, self.lam, f)

    def full(self, f):
        out = self.linear(f)
        if self.perturbation is not None:
            out = out + self.perturbation(f)
        return out

    def right_inverse(self, h):
        return power_series_right_inverse(self.chi, self.lam, h)


def validate_linear_part(op, full_operator, f: TruncatedSeries, t_degree=4):
    """Check that the t-linear jet of full_operator(t*f) matches op.linear(f).

    Exact rings extract the linear coefficient by solving the Vandermonde
    system on t = 1..t_degree+1; the float ring uses a symmetric finite
    difference and the ring tolerance.  Returns the mismatch series.
    """
    ring = f.ring
    expected = op.linear(f)
    if ring.exact:
        nodes = [QE(t, d=getattr(ring, "d", 0)) for t in range(1, t_degree + 2)]
        samples = [full_operator(f.scale(t)) for t in nodes]
        coeff_vectors = _solve_vandermonde(ring, nodes, samples)
        linear_term = coeff_vectors[0]  # coefficient of t^1
        return linear_term - expected
    t = 2.0 ** -10
    approx = (full_operator(f.scale(t)) - full_operator(f.scale(-t))).scale(1 / (2 * t))
    return approx - expected


def _solve_vandermonde(ring, nodes, samples):
    """Solve sum_k t^k A_k = sample(t) for A_1..A_K (A_0 = 0 assumed)."""
    K = len(nodes)
    M = [[nodes[r] ** (c + 1) for c in range(K)] for r in range(K)]
    # gaussian elimination over the exact ring, one series column vector
    rows = [list(M[r]) + [samples[r]] for r in range(K)]
    for col in range(K):
        piv = next(r for r in range(col, K) if not rows[r][col].is_zero)
        rows[col], rows[piv] = rows[piv], rows[col]
        inv = rows[col][col].inverse()
        rows[col] = [e * inv if isinstance(e, QE) else e.scale(inv)
                     for e in rows[col]]
        for r in range(K):
            if r != col:
                factor = rows[r][col]
                if factor.is_zero:
                    continue
                rows[r] = [
                    (e - factor * rows[col][c]) if isinstance(e, QE)
                    else e - rows[col][c].scale(factor)
                    for c, e in enumerate(rows[r])]
    return [rows[r][K] for r in range(K)]


def madic_fixed_point(op: LinearisedOperator, K, g: TruncatedSeries,
                      order=None, max_rounds=None) -> TruncatedSeries:
    """Solve P(f) = g by the iteration h <- g - (P(K h) - h), f = K h.

    Requires the defect Q = P K - 1 to gain maximal-ideal valuation at
    every step (checked; violations raise StagnationError with the stuck
    degree).  The result is idempotent under extra rounds at a fixed
    truncation.
    """
    order = g.order if order is None else order
    g = g.truncate(order)
    h = g
    prev_val = 0
    rounds = 0
    limit = max_rounds if max_rounds is not None else 2 * order + 4
    while rounds < limit:
        rounds += 1
        f = K(h)
        residual = (op.full(f) - g).truncate(order)
        if residual.is_zero():
            return f
        val = residual.valuation()
        if val is not None and val <= prev_val and rounds > 1:
            raise StagnationError(val)
        prev_val = val if val is not None else order + 1
        h = h - residual  # h_{n+1} = g - Q h_n = h_n - (P(K h_n) - g)
    raise StagnationError(prev_val)


@dataclass
class ObstructionReport:
    """Outcome of the finite fixed-point search in the quotient ring."""

    cutoff: int
    found: bool
    residual: TruncatedSeries | None = None
    starting_jet: TruncatedSeries | None = None
    obstruction_index: tuple | None = None
    obstruction_degree: int | None = None


def obstruction_check(op: LinearisedOperator, K, g: TruncatedSeries,
                      beta: int) -> ObstructionReport:
    """Search a fixed point of f -> g - Qf in F / m^(2 beta + 3).

    K may be partial (raising ResonanceError on dead divisors): hitting a
    resonant monomial with a nonzero coefficient is the obstruction and is
    reported, not raised.  On success the starting jet K(h*) seeds
    madic_fixed_point.
    """
    cutoff = 2 * beta + 3
    work_order = cutoff - 1          # classes mod m^cutoff
    gq = g.truncate(min(g.order, work_order))
    h = gq
    residual = gq
    for _ in range(cutoff + 2):
        try:
            f = K(h)
        except ResonanceError as exc:
            return ObstructionReport(
                cutoff, False, residual=h,
                obstruction_index=exc.J, obstruction_degree=weight(exc.J))
        residual = (op.full(f) - gq).truncate(work_order)
        if residual.is_zero():
            return ObstructionReport(cutoff, True,
                                     residual=residual, starting_jet=f)
        h = h - residual
    return ObstructionReport(cutoff, False, residual=residual)


# ------------------------------------------------------------------ maps
def identity_map(ring, nvars, order):
    return [TruncatedSeries.variable(ring, nvars, order, i) for i in range(nvars)]


def compose_map(outer, inner):
    """outer o inner, componentwise substitution."""
    return [c.substitute(inner) for c in outer]


def invert_map(phi):
    """Formal inverse of a map with invertible linear jet.

    Splits phi = A o (id + eta) with A the degree-1 jet, inverts the
    tangent-to-identity part by back-substitution, then composes with the
    exact matrix inverse of A.
    """
    ring = phi[0].ring
    n = phi[0].nvars
    order = phi[0].order
    unit = [tuple(1 if k == j else 0 for k in range(n)) for j in range(n)]
    A = [[phi[i].coefficient(unit[j]) for j in range(n)] for i in range(n)]
    Ainv = _matrix_inverse(ring, A)
    # tangent-to-identity part: (A^-1 phi)
    eta_map = []
    for i in range(n):
        acc = TruncatedSeries.zero(ring, n, order)
        for j in range(n):
            if not _coeff_zero(ring, Ainv[i][j]):
                acc = acc + phi[j].scale(Ainv[i][j])
        eta_map.append(acc)
    # back-substitution: psi with (id + eta)(psi) = id
    psi = identity_map(ring, n, order)
    for _ in range(order + 1):
        new = []
        for i in range(n):
            corr = eta_map[i].substitute(psi) - psi[i]  # eta_i(psi) part
            new.append(TruncatedSeries.variable(ring, n, order, i) - corr)
        if all(a.eq(b) for a, b in zip(new, psi)):
            psi = new
            break
        psi = new
    # full inverse: psi o A^-1
    lin = []
    for i in range(n):
        acc = TruncatedSeries.zero(ring, n, order)
        for j in range(n):
            if not _coeff_zero(ring, Ainv[i][j]):
                acc = acc + TruncatedSeries.variable(ring, n, order, j).scale(Ainv[i][j])
        lin.append(acc)
    return compose_map(psi, lin)


def _coeff_zero(ring, v):
    return ring.is_zero(v)


def _matrix_inverse(ring, A):
    n = len(A)
    aug = [[ring.coerce(A[r][c]) for c in range(n)]
           + [ring.one() if c == r else ring.zero() for c in range(n)]
           for r in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if not ring.is_zero(aug[r][col])), None)
        if piv is None:
            raise ValueError("linear jet is not invertible")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = aug[col][col].inverse() if ring.exact else 1 / aug[col][col]
        aug[col] = [e * inv for e in aug[col]]
        for r in range(n):
            if r != col and not ring.is_zero(aug[r][col]):
                f = aug[r][col]
                aug[r] = [e - f * aug[col][c] for c, e in enumerate(aug[r])]
    return [row[n:] for row in aug]


def transform_field(V: VectorField, phi, psi=None) -> VectorField:
    """Field in the new coordinates u, where x = phi(u).

    Components are W_i = V(psi_i) o phi for psi the inverse map; psi is
    computed when not supplied.
    """
    if psi is None:
        psi = invert_map(phi)
    comps = [V.apply(p).substitute(phi) for p in psi]
    return VectorField(comps, tags=V.tags)


# -------------------------------------------------------- linearisation
@dataclass
class LinearisationResult:
    conjugation: list            # map phi with x = phi(u), phi = id + h
    eigenvalues: tuple
    residual: VectorField        # defining-relation residual, zero on success


def linearize_field(V: VectorField, order=None) -> LinearisationResult:
    """Formal linearisation of a field with semisimple diagonal linear part.

    Solves V_i(phi(u)) = sum_j lam_j u_j dphi_i/du_j degree by degree; the
    divisor at x^J in component i is J.Lambda - lam_i, so any resonance in
    the field convention aborts with the offending index.  The returned
    residual is the left side minus the right side, recomputed from the
    final conjugation by substitution: the verification is not shared with
    the solver path.
    """
    order = V.order if order is None else order
    V = V.truncate(order)
    ring = V.ring
    n = V.nvars
    L = linear_part(V)
    lam = _require_diagonal(ring, L.matrix, n)
    D_of = lambda s: euler_operator(ring.zero() if ring.exact else 0j, lam, s)
    h = [TruncatedSeries.zero(ring, n, order) for _ in range(n)]
    for m in range(2, order + 1):
        phi = [TruncatedSeries.variable(ring, n, order, i) + h[i] for i in range(n)]
        cache = SubstitutionCache(phi, n)
        for i in range(n):
            resid = V.components[i].substitute_with(cache) - D_of(phi[i])
            part = resid.homogeneous_part(m)
            if part.is_zero():
                continue
            upd = {}
            for J, c in part.coeffs.items():
                div = _dot(J, lam) - lam[i]
                if _div_is_zero(ring, div):
                    raise ResonanceError(J, component=i)
                upd[J] = c / div
            h[i] = h[i] + TruncatedSeries(ring, n, order, upd)
    phi = [TruncatedSeries.variable(ring, n, order, i) + h[i] for i in range(n)]
    cache = SubstitutionCache(phi, n)
    resid_comps = [V.components[i].substitute_with(cache) - D_of(phi[i])
                   for i in range(n)]
    return LinearisationResult(phi, tuple(lam), VectorField(resid_comps))


def _require_diagonal(ring, M, n):
    for i in range(n):
        for j in range(n):
            if i != j and not ring.is_zero(ring.coerce(M[i][j])):
                raise ValueError(
                    "linear part must be diagonal; split eigendirections first")
    return tuple(ring.coerce(M[i][i]) for i in range(n))


# ------------------------------------------------------- monomialisation
@dataclass
class MonomialisationResult:
    nu: object
    conjugation: list            # map xi_i = x_i e^{f_i}
    exponent_shift: list         # the f_i themselves
    residual: list               # E_i defect series, zero on success


def monomialise(u: TruncatedSeries, P, lam, order=None) -> MonomialisationResult:
    """Kill the unit of u x^P (lam_i x_i d_i) up to the single obstruction.

    Works degree by degree on E_i(f, nu) = u (lam_i + D f_i)(1 + nu xi^P)
    - lam_i e^{P.f} with xi^P = e^{P.f} x^P; the per-monomial matrix
    (J.Lambda) Id - Lambda P^T is invertible unless J.Lambda is 0 or
    P.Lambda, the latter allowed only at J = P where nu absorbs the
    residual.  Secondary resonances J != P with J.Lambda = P.Lambda abort.
    """
    ring = u.ring
    n = u.nvars
    order = u.order if order is None else order
    u = u.truncate(order)
    P = tuple(P)
    if not ring.eq(u.constant_term, ring.one()):
        raise ValueError("unit must have constant term 1")
    PL = _dot(P, lam)
    if _div_is_zero(ring, PL):
        raise ResonanceError(P, chi=0)
    f = [TruncatedSeries.zero(ring, n, order) for _ in range(n)]
    nu = ring.zero()
    wP = weight(P)
    for m in range(1, order + 1):
        resid = _monomialise_defect(ring, u, f, nu, P, lam, order)
        for J in sorted({J for r in resid for J in r.coeffs if weight(J) == m}):
            R = [r.coefficient(J) for r in resid]
            JL = _dot(J, lam)
            JL = ring.zero() if JL is None else JL
            if J == P:
                nu_new = -_vec_dot(P, R) / PL
                nu = nu + nu_new
                Rp = [R[i] + nu_new * lam[i] for i in range(n)]
                c = [-Rp[i] / PL for i in range(n)]
            else:
                if _div_is_zero(ring, JL):
                    raise ResonanceError(J, chi=0)
                gap = JL - PL
                if _div_is_zero(ring, gap):
                    raise ResonanceError(J, chi=PL)  # secondary resonance
                pr = _vec_dot(P, R)
                pc = (-pr if pr is not None else ring.zero()) / gap
                c = [(-R[i] + pc * lam[i]) / JL for i in range(n)]
            for i in range(n):
                if not ring.is_zero(c[i]):
                    f[i] = f[i] + TruncatedSeries.monomial(ring, n, order, J, c[i])
    resid = _monomialise_defect(ring, u, f, nu, P, lam, order)
    conj = [TruncatedSeries.variable(ring, n, order, i) * f[i].exp()
            for i in range(n)]
    return MonomialisationResult(nu, conj, f, resid)


def _vec_dot(P, R):
    acc = None
    for p, r in zip(P, R):
        if p:
            t = r * p
            acc = t if acc is None else acc + t
    return acc


def _monomialise_defect(ring, u, f, nu, P, lam, order):
    n = u.nvars
    D_of = lambda s: euler_operator(ring.zero() if ring.exact else 0j, lam, s)
    Pf = TruncatedSeries.zero(ring, n, order)
    for p, fi in zip(P, f):
        if p:
            Pf = Pf + fi.scale(p)
    ePf = Pf.exp()
    xiP = (ePf.multiply_monomial(P)).scale(nu) + 1  # 1 + nu xi^P
    out = []
    for i in range(n):
        lhs = (u * (D_of(f[i]) + lam[i]) * xiP).truncate(order)
        rhs = ePf.scale(lam[i])
        out.append(lhs - rhs)
    return out


# ------------------------------------------------------------ the beast
@dataclass
class BeastCoefficient:
    """zeta_k(x) = 1 / (1 + k x): numerator/denominator and the pole."""

    k: int
    denominator: tuple           # (1, k) for 1 + k x
    pole: object                 # exact rational -1/k

    def series(self, ring, order):
        from .series import geometric_series
        return geometric_series(ring, 1, order, (1,), -self.k)


def beast_probe(kmax: int):
    """Per-power coefficients of the obstructed graph equation.

    The y^k coefficient of (1 + x y d/dy) zeta = y/(1-y) solves
    (1 + k x) zeta_k = 1, so zeta_k = 1/(1+kx) with a pole at -1/k; the
    poles accumulate at 0 and obstruct every specialization x = -1/k.
    """
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    out = []
    for k in range(1, kmax + 1):
        pole = QE(-1) / k
        out.append(BeastCoefficient(k, (1, k), pole))
    return out
