"""Vector fields: linear data, resonances, blow-ups, the log-flat test.

A field is an n-tuple of truncated series, the coefficients in the
coordinate frame d/dx_i.  Coordinate hyperplanes may carry divisor tags
marking them as exceptional/invariant; tagging x_i requires component i
to be divisible by x_i, which is checked.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .rings import ExactRing, QE, ring_sqrt
from .series import TruncatedSeries, iter_indices, weight


class VectorField:
    def __init__(self, components, tags=()):
        if not components:
            raise ValueError("a field needs at least one component")
        self.components = list(components)
        c0 = self.components[0]
        self.ring = c0.ring
        self.nvars = c0.nvars
        self.order = c0.order
        for c in self.components:
            if c.ring != self.ring or c.nvars != self.nvars:
                raise ValueError("components share ring and nvars")
            if c.order != self.order:
                raise ValueError("components share the truncation order")
        if len(self.components) != self.nvars:
            raise ValueError("need one component per variable")
        self.tags = frozenset(tags)
        for i in self.tags:
            if not self._divisible_by_var(self.components[i], i):
                raise ValueError(
                    f"hyperplane x_{i}=0 tagged invariant but component {i} "
                    f"is not divisible by x_{i}")

    @staticmethod
    def _divisible_by_var(s: TruncatedSeries, i: int) -> bool:
        return all(J[i] >= 1 for J in s.coeffs)

    # -- derivation action ------------------------------------------------
    def apply(self, f: TruncatedSeries) -> TruncatedSeries:
        """The derivation V(f) = sum_i V_i df/dx_i at truncation order."""
        out = TruncatedSeries.zero(self.ring, self.nvars, f.order)
        for i, c in enumerate(self.components):
            out = out + (c.truncate(f.order) * f.derive(i).truncate(f.order))
        return out.truncate(f.order)

    def __add__(self, other):
        return VectorField([a + b for a, b in zip(self.components, other.components)],
                           self.tags & other.tags)

    def __sub__(self, other):
        return VectorField([a - b for a, b in zip(self.components, other.components)],
                           self.tags & other.tags)

    def scale(self, scalar):
        return VectorField([c.scale(scalar) for c in self.components], self.tags)

    def multiply(self, s: TruncatedSeries):
        return VectorField([(c * s).truncate(self.order) for c in self.components],
                           self.tags)

    def truncate(self, order):
        return VectorField([c.truncate(order) for c in self.components], self.tags)

    def eq(self, other) -> bool:
        return all(a.eq(b) for a, b in zip(self.components, other.components))

    def __repr__(self):
        return f"VectorField(nvars={self.nvars}, order={self.order}, tags={sorted(self.tags)})"

    # -- serialization -----------------------------------------------------
    def to_json_dict(self) -> dict:
        return {"nvars": self.nvars, "order": self.order,
                "components": [c.to_json_dict() for c in self.components],
                "tags": sorted(self.tags)}

    @classmethod
    def from_json_dict(cls, ring, data) -> "VectorField":
        comps = [TruncatedSeries.from_json_dict(ring, c) for c in data["components"]]
        return cls(comps, tags=data.get("tags", ()))


@dataclass
class LinearData:
    """Degree-1 jet of a field: the action on m/m^2."""

    matrix: list                      # nested lists of ring values
    eigenvalues: list | None          # ring values when exact, else complex
    semisimple: bool | None
    exact: bool
    residual: float = 0.0             # eigen-solver residual for numeric path

    def eigenvalue_tuple(self):
        if self.eigenvalues is None:
            raise ValueError("eigenvalues were not computable")
        return tuple(self.eigenvalues)


def linear_part(V: VectorField) -> LinearData:
    """Matrix of the degree-1 jet; exact eigenvalues where the ring allows.

    The constant term must vanish (the field is singular at the origin).
    Exact eigenvalues are produced for triangular matrices and via the
    closed form for 2x2 blocks whose discriminant has a square root in
    the ring; otherwise the dense numeric solver is used and its residual
    reported.
    """
    ring = V.ring
    n = V.nvars
    for c in V.components:
        if not ring.is_zero(c.constant_term):
            raise ValueError("field does not vanish at the origin")
    unit = [tuple(1 if k == j else 0 for k in range(n)) for j in range(n)]
    M = [[V.components[i].coefficient(unit[j]) for j in range(n)] for i in range(n)]
    eig, semisimple = _exact_eigenvalues(ring, M)
    if eig is not None:
        return LinearData(M, eig, semisimple, exact=True)
    A = np.array([[complex(ring.coerce(M[i][j])) if ring.exact else M[i][j]
                   for j in range(n)] for i in range(n)])
    w, vecs = np.linalg.eig(A)
    residual = max(float(np.linalg.norm(A @ vecs[:, k] - w[k] * vecs[:, k]))
                   for k in range(n))
    semisimple = bool(np.linalg.matrix_rank(vecs, tol=1e-8) == n)
    return LinearData(M, [complex(x) for x in w], semisimple, exact=False,
                      residual=residual)


def _exact_eigenvalues(ring, M):
    if not ring.exact:
        return None, None
    n = len(M)
    lower = all(ring.is_zero(M[i][j]) for i in range(n) for j in range(i + 1, n))
    upper = all(ring.is_zero(M[i][j]) for j in range(n) for i in range(j + 1, n))
    if lower or upper:
        eig = [M[i][i] for i in range(n)]
        off_diag = any(not ring.is_zero(M[i][j])
                       for i in range(n) for j in range(n) if i != j)
        distinct = len({_key(e) for e in eig}) == len(eig)
        return eig, (not off_diag) or distinct
    if n == 2:
        tr = M[0][0] + M[1][1]
        det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
        disc = tr * tr - 4 * det
        root = ring_sqrt(ring, ring.coerce(disc))
        if root is not None:
            half = QE(1, d=ring.d) / 2
            eig = [(tr + root) * half, (tr - root) * half]
            return eig, eig[0] != eig[1] or ring.is_zero(disc) and _is_scalar(ring, M)
    return None, None


def _is_scalar(ring, M):
    return all(ring.is_zero(M[i][j]) for i in range(len(M)) for j in range(len(M))
               if i != j) and M[0][0] == M[1][1]


def _key(v):
    return (v.ar, v.ai, v.br, v.bi) if isinstance(v, QE) else v


# ---------------------------------------------------------------- resonances
@dataclass
class ResonanceReport:
    resonances: list            # (J, chi_or_component_index)
    search_bound: int
    siegel_witness: dict | None = None   # trial N -> min |chi+J.L| |J|^N
    collapse_flag: bool = False

    @property
    def found(self) -> bool:
        return bool(self.resonances)


def find_resonances(lam, chi=0, max_weight=8, field_mode=False,
                    ring=None, budget=2_000_000) -> ResonanceReport:
    """Exhaustively search chi + J.Lambda = 0 for |J| <= max_weight.

    ``field_mode`` switches to the field-linearisation convention: for each
    component i, hunt for J with |J| >= 2 and J.Lambda - lam_i = 0 (the
    j_i = -1 reading).  Exact rings use exact zero tests; the floating
    cut declares a resonance at |chi + J.L| < 1e-9 * max(1, |J|).
    """
    if max_weight < 1:
        raise ValueError("search bound must be >= 1")
    n = len(lam)
    count = _shell_count(n, max_weight)
    if count > budget:
        raise ValueError(f"enumeration budget exceeded: {count} > {budget}")
    exact = ring.exact if ring is not None else isinstance(lam[0], QE)
    hits = []
    for J in iter_indices(n, max_weight, 1):
        dot = _dot(J, lam)
        if field_mode:
            if weight(J) < 2:
                continue
            for i in range(n):
                v = dot - lam[i]
                if _is_res_zero(v, J, exact):
                    hits.append((J, i))
        else:
            v = dot + chi
            if _is_res_zero(v, J, exact):
                hits.append((J, chi))
    return ResonanceReport(hits, max_weight)


def _shell_count(n, D):
    return math.comb(D + n, n)


def _dot(J, lam):
    acc = None
    for j, l in zip(J, lam):
        if j:
            term = l * j
            acc = term if acc is None else acc + term
    if acc is None:
        return lam[0] * 0
    return acc


def _is_res_zero(v, J, exact):
    if exact:
        return v == 0 if not isinstance(v, QE) else v.is_zero
    return abs(v) < 1e-9 * max(1, weight(J))


def siegel_witness(lam, chi=0, max_weight=20, trial_exponents=(1, 2, 4),
                   field_mode=False, ring=None) -> ResonanceReport:
    """Empirical Siegel constants: min |chi + J.L| * |J|^N over |J| <= D.

    Precondition: no exact resonance up to the bound (a resonance poisons
    the estimate and is reported instead).  The collapse flag is raised
    when the witness keeps decaying shell after shell for every exponent
    tried, i.e. the data looks worse than any polynomial smallness.
    """
    base = find_resonances(lam, chi, max_weight, field_mode=field_mode, ring=ring)
    if base.found:
        return base
    n = len(lam)
    shell_min = {}
    for J in iter_indices(n, max_weight, 1):
        if field_mode and weight(J) < 2:
            continue
        vals = []
        if field_mode:
            vals = [abs(_dot(J, lam) - lam[i]) for i in range(n)]
        else:
            vals = [abs(_dot(J, lam) + chi)]
        w = weight(J)
        m = min(vals)
        shell_min[w] = min(shell_min.get(w, math.inf), m)
    witness = {}
    collapse = True
    for N in trial_exponents:
        running = math.inf
        trace = []
        for w in sorted(shell_min):
            running = min(running, shell_min[w] * (w ** N))
            trace.append(running)
        witness[N] = running
        half = len(trace) // 2
        early = min(trace[:half]) if half else trace[0]
        if running >= 0.5 * early:
            collapse = False
    return ResonanceReport([], max_weight, siegel_witness=witness,
                           collapse_flag=collapse)


# ------------------------------------------------------------------ blow-ups
@dataclass(frozen=True)
class BlowupChart:
    """Monomial blow-up data: center variables and the chart index.

    The substitution is x_j -> x_i * x_j for j in the center other than
    the chart index i; point blow-up centers list every variable, axis
    centers a subset.
    """

    center: tuple
    chart_index: int

    def __post_init__(self):
        if self.chart_index not in self.center:
            raise ValueError("chart index must belong to the center")

    def substitution(self, ring, nvars, order):
        subs = []
        for k in range(nvars):
            if k in self.center and k != self.chart_index:
                J = [0] * nvars
                J[k] = 1
                J[self.chart_index] += 1
                subs.append(TruncatedSeries.monomial(ring, nvars, order, tuple(J)))
            else:
                subs.append(TruncatedSeries.variable(ring, nvars, order, k))
        return subs


def blowup_pullback(V: VectorField, chart: BlowupChart) -> VectorField:
    """Pull the field back to a blow-up chart (exact monomial algebra).

    Requires the center to be invariant: each component V_j for j in the
    center must lie in the center's ideal.  New tags: the chart variable
    x_i picks up the exceptional divisor.
    """
    n, ring, order = V.nvars, V.ring, V.order
    center = set(chart.center)
    i = chart.chart_index
    ideal_ok = all(_in_ideal(V.components[j], center) for j in center)
    if not ideal_ok:
        raise ValueError("blow-up center is not invariant for the field")
    subs = chart.substitution(ring, n, order)
    pulled = [c.substitute(subs) for c in V.components]
    new_components = []
    for k in range(n):
        if k == i:
            new_components.append(pulled[i])
        elif k in center:
            # w_k = (V_k - x_k V_i / x_i) / x_i  pulled back
            ei = tuple(1 if t == i else 0 for t in range(n))
            ek = tuple(1 if t == k else 0 for t in range(n))
            num = pulled[k] - pulled[i].multiply_monomial(ek)
            new_components.append(num.divide_monomial(ei))
        else:
            new_components.append(pulled[k])
    tags = set(V.tags) | {i}
    return VectorField(new_components, tags=tags)


def _in_ideal(s: TruncatedSeries, center) -> bool:
    return all(any(J[c] >= 1 for c in center) for J in s.coeffs)


def saturate(V: VectorField):
    """Divide out the common monomial factor; returns (field, exponents)."""
    mins = [min((min(J[i] for J in c.coeffs) if c.coeffs else 10 ** 9)
                for c in V.components) for i in range(V.nvars)]
    expo = tuple(0 if m >= 10 ** 9 else m for m in mins)
    if all(e == 0 for e in expo):
        return V, expo
    comps = [c.divide_monomial(expo) for c in V.components]
    return VectorField(comps, tags=V.tags), expo


def non_log_flat_ideal(V: VectorField):
    """Generators of the non-log-flat locus ideal.

    The field is written in the logarithmic frame {x_e d/dx_e for tagged
    e, d/dx_j otherwise}; the coefficients, saturated by their common
    monomial factor, generate the ideal.  A unit ideal means log-flat.
    """
    gens = []
    for i, c in enumerate(V.components):
        if i in V.tags:
            J = tuple(1 if k == i else 0 for k in range(V.nvars))
            gens.append(c.divide_monomial(J))
        else:
            gens.append(c)
    sat, _ = saturate(VectorField(gens))
    nonzero = [g for g in sat.components if not g.is_zero()]
    return nonzero


def is_unit_ideal(gens) -> bool:
    return any(not g.ring.is_zero(g.constant_term) for g in gens)
