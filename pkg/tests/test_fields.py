"""Field tests: jets, resonances, Siegel witnesses, blow-ups, log-flatness."""

import math
import random

import pytest

from sectorform.fields import (BlowupChart, VectorField, blowup_pullback,
                               find_resonances, is_unit_ideal, linear_part,
                               non_log_flat_ideal, saturate, siegel_witness)
from sectorform.rings import ExactRing, FloatRing, QE
from sectorform.series import TruncatedSeries, random_series

R = ExactRing()
R2 = ExactRing(2)


def mono(J, value=1, nvars=2, order=8, ring=R):
    return TruncatedSeries.monomial(ring, nvars, order, J, value)


def zero(nvars=2, order=8, ring=R):
    return TruncatedSeries.zero(ring, nvars, order)


def linear_field(lams, order=8, ring=R):
    n = len(lams)
    comps = []
    for i, l in enumerate(lams):
        J = tuple(1 if k == i else 0 for k in range(n))
        comps.append(TruncatedSeries.monomial(ring, n, order, J, l))
    return VectorField(comps)


# ------------------------------------------------------------ linear part
def test_linear_part_diagonal():
    lam = QE(0, 0, -1, 0, 2)  # -sqrt(2)
    V = linear_field([QE(1, d=2), lam], ring=R2)
    L = linear_part(V)
    assert L.exact and L.semisimple
    assert L.eigenvalue_tuple() == (QE(1, d=2), lam)


def test_linear_part_one_eigenvalue_with_zero_block():
    # z dz + x^2 dy in 3 vars: matrix has single eigenvalue 1 and zero block
    comps = [zero(3), mono((2, 0, 0), nvars=3), mono((0, 0, 1), nvars=3)]
    V = VectorField(comps)
    L = linear_part(V)
    assert sorted(abs(complex(e)) for e in L.eigenvalue_tuple()) == [0.0, 0.0, 1.0]


def test_linear_part_discards_higher_jet():
    V = VectorField([mono((1, 0)) + mono((0, 2)), zero()])
    L = linear_part(V)
    assert L.matrix[0][0] == QE(1)
    assert all(L.matrix[i][j] == QE(0) for i in range(2) for j in range(2)
               if (i, j) != (0, 0))


def test_linear_part_requires_vanishing():
    V = VectorField([TruncatedSeries.one(R, 2, 8), zero()])
    with pytest.raises(ValueError):
        linear_part(V)


def test_linear_part_2x2_closed_form_in_extension():
    # matrix [[0, 1], [2, 0]] has eigenvalues +-sqrt(2), exact in Q(sqrt 2)
    V = VectorField([mono((0, 1), ring=R2), mono((1, 0), 2, ring=R2)])
    L = linear_part(V)
    assert L.exact
    s2 = R2.sqrt_d()
    assert set(map(str, L.eigenvalue_tuple())) == {str(s2), str(-s2)}


def test_linear_part_numeric_fallback():
    F = FloatRing()
    comps = [TruncatedSeries(F, 2, 4, {(0, 1): 1.0}),
             TruncatedSeries(F, 2, 4, {(1, 0): -3.0})]
    L = linear_part(VectorField(comps))
    assert not L.exact and L.residual < 1e-10
    vals = sorted(abs(e) for e in L.eigenvalues)
    assert all(abs(v - math.sqrt(3)) < 1e-9 for v in vals)


# ------------------------------------------------------------- resonances
def test_resonances_integer_pairs():
    rep = find_resonances([QE(1), QE(-1)], max_weight=6)
    assert {J for J, _ in rep.resonances} == {(k, k) for k in range(1, 4)}


def test_no_resonance_for_sqrt2():
    rep = find_resonances([QE(1, d=2), R2.sqrt_d()], max_weight=12, ring=R2)
    assert not rep.found


def test_node_resonances_field_convention_oracle():
    # lambda = (1, -p/q): field resonances J.L = lam_i; brute-force oracle
    p, q = 2, 3
    lam = [QE(1), QE(-p) / q]
    rep = find_resonances(lam, max_weight=8, field_mode=True)
    oracle = set()
    for j1 in range(9):
        for j2 in range(9 - j1):
            if j1 + j2 < 2:
                continue
            val = QE(j1) - QE(p * j2) / q
            for i in range(2):
                if val == lam[i]:
                    oracle.add(((j1, j2), i))
    assert set(map(tuple, rep.resonances)) == oracle
    assert rep.found


def test_resonance_budget():
    with pytest.raises(ValueError):
        find_resonances([QE(1)] * 6, max_weight=40, budget=1000)


# ---------------------------------------------------------- Siegel witness
def test_siegel_positive_integers_bounded_below():
    rep = siegel_witness([QE(1), QE(2)], max_weight=12, trial_exponents=(1, 2))
    assert not rep.collapse_flag
    assert all(v >= 1.0 - 1e-12 for v in rep.siegel_witness.values())


def test_siegel_sqrt2_matches_continued_fraction_oracle():
    # |j1 - j2 sqrt(2)| for the best approximants ~ 1/(2 sqrt(2) j2);
    # witness with N=1 stabilizes near (2+sqrt(2))/4 ~ 0.8536
    lam = [QE(1, d=2), -R2.sqrt_d()]
    rep = siegel_witness(lam, max_weight=60, trial_exponents=(1,), ring=R2)
    w = rep.siegel_witness[1]
    # continued-fraction oracle: convergents of sqrt(2)
    best = math.inf
    a, b = 1, 1  # p/q convergent seeds
    for _ in range(8):
        a, b = a + 2 * b, a + b
        best = min(best, abs(a - b * math.sqrt(2)) * (a + b))
    assert not rep.collapse_flag
    assert abs(w - best) < 0.15


def test_siegel_liouville_like_collapses():
    # Liouville-like float: the factorial-prefix sum in base 2, whose best
    # approximant 49/64 is abnormally good; the witness keeps collapsing
    # through the searched shells for every exponent tried.
    F = FloatRing()
    liou = sum(2.0 ** (-math.factorial(k)) for k in range(1, 5))
    rep = siegel_witness([1.0 + 0j, complex(-liou)], max_weight=130,
                         trial_exponents=(1, 2), ring=F)
    assert rep.collapse_flag


def test_siegel_reports_resonance_instead():
    rep = siegel_witness([QE(1), QE(-1)], max_weight=6)
    assert rep.found and rep.siegel_witness is None


# ---------------------------------------------------------------- blow-ups
def test_point_blowup_radial_field():
    # V = x dx + y dy, chart y = x y': pullback is x dx
    V = VectorField([mono((1, 0)), mono((0, 1))])
    W = blowup_pullback(V, BlowupChart((0, 1), 0))
    assert W.components[0].eq(mono((1, 0)))
    assert W.components[1].is_zero()
    assert 0 in W.tags


def test_blowup_central_component_congruence():
    # z dz + x^2 y dy + x^3 dz-ish congruences: blow up z = x = 0, chart z = x z'
    # exponents of the I^k congruence drop to plain x^k (paper's V.3 step)
    order = 8
    comps = [zero(3, order),
             mono((2, 1, 0), nvars=3, order=order),
             mono((0, 0, 1), nvars=3, order=order) + mono((3, 0, 0), nvars=3, order=order)]
    V = VectorField(comps)
    W = blowup_pullback(V, BlowupChart((0, 2), 0))
    # z' component: (V_z - z' V_x)/x  pulled back: x^3/x -> x^2 etc.
    assert W.components[2].coefficient((2, 0, 0)) == QE(1)
    assert W.components[2].coefficient((0, 0, 1)) == QE(1)


def test_blowup_requires_invariant_center():
    V = VectorField([mono((0, 1)), mono((1, 0))])  # rotation: axes not invariant
    with pytest.raises(ValueError):
        blowup_pullback(V, BlowupChart((0,), 0))


def test_blowup_chart_consistency_battery():
    # the two charts of a point blow-up agree after the transition substitution
    rng = random.Random(23)
    order = 6
    for _ in range(100):
        cx = random_series(R, 2, order, rng, min_weight=1)
        cy = random_series(R, 2, order, rng, min_weight=1)
        V = VectorField([cx, cy])
        W0 = blowup_pullback(V, BlowupChart((0, 1), 0))  # (x, y'): y = x y'
        W1 = blowup_pullback(V, BlowupChart((0, 1), 1))  # (x', y): x = y x'
        # transition on overlap: x = y x', y' = 1/x'.  Check the invariant
        # pairing W(x*y) which must pull back consistently: in chart 0 the
        # product xy equals x^2 y', in chart 1 it is y^2 x'.
        f0 = mono((2, 1), nvars=2, order=order)
        f1 = mono((1, 2), nvars=2, order=order)
        a = W0.apply(f0)
        b = W1.apply(f1)
        # swap roles (x <-> y) maps chart-0 data to chart-1 data
        swapped = TruncatedSeries(R, 2, a.order,
                                  {(J[1], J[0]): c for J, c in b.coeffs.items()})
        V_swapped = VectorField([TruncatedSeries(R, 2, order,
                                                 {(J[1], J[0]): c for J, c in cy.coeffs.items()}),
                                 TruncatedSeries(R, 2, order,
                                                 {(J[1], J[0]): c for J, c in cx.coeffs.items()})])
        W0s = blowup_pullback(V_swapped, BlowupChart((0, 1), 0))
        assert W0s.apply(f0).eq(swapped)


# ---------------------------------------------------------------- saturation
def test_saturate_common_factor():
    V = VectorField([mono((2, 0)), mono((1, 1))])
    W, expo = saturate(V)
    assert expo == (1, 0)
    assert W.components[0].eq(mono((1, 0)))
    assert W.components[1].eq(mono((0, 1)))


def test_saturate_idempotent_and_multiplicative():
    rng = random.Random(4)
    for _ in range(25):
        base = VectorField([random_series(R, 2, 6, rng, min_weight=1) + mono((1, 0), order=6),
                            random_series(R, 2, 6, rng, min_weight=1) + mono((0, 1), order=6)])
        sat0, _ = saturate(base)
        m = (rng.randint(0, 2), rng.randint(0, 2))
        lifted = VectorField([c.multiply_monomial(m) for c in sat0.components])
        W, expo = saturate(lifted)
        _, again = saturate(W)
        assert again == (0, 0)
        assert all(e >= mm for e, mm in zip(expo, m))  # re-extracts the factor


def test_resonances_brute_force_scan_agreement():
    # independent dense scan vs find_resonances on random rational eigenvalues
    rng = random.Random(77)
    for _ in range(100):
        lam = [QE(rng.randint(-4, 4)) / rng.randint(1, 3) for _ in range(2)]
        if all(l.is_zero for l in lam):
            continue
        chi = QE(rng.randint(-2, 2))
        rep = find_resonances(lam, chi=chi, max_weight=8)
        oracle = []
        for j1 in range(9):
            for j2 in range(9 - j1):
                if j1 + j2 < 1:
                    continue
                if (lam[0] * j1 + lam[1] * j2 + chi).is_zero:
                    oracle.append((j1, j2))
        got = [J for J, _ in rep.resonances]
        assert sorted(got) == sorted(oracle)


# ------------------------------------------------------------------ log-flat
def test_log_flat_frame_element():
    V = VectorField([mono((1,), nvars=1, order=8)], tags=(0,))
    gens = non_log_flat_ideal(V)
    assert is_unit_ideal(gens)


def test_non_log_flat_saddle_node_shape():
    # V = z dz + x^p dy with x tagged: ideal (z, x^p) in the log frame
    p = 3
    comps = [zero(3), mono((p, 0, 0), nvars=3), mono((0, 0, 1), nvars=3)]
    V = VectorField(comps, tags=(0,))
    gens = non_log_flat_ideal(V)
    assert not is_unit_ideal(gens)
    polys = sorted(g.to_json() for g in gens)
    expect = sorted([mono((p, 0, 0), nvars=3).to_json(),
                     mono((0, 0, 1), nvars=3).to_json()])
    assert polys == expect


def test_log_flat_after_isolated_blowup():
    # radial-ish field: off the proper transform the pullback is log-flat
    V = VectorField([mono((1, 0)), mono((0, 1)) + mono((2, 0))])
    W = blowup_pullback(V, BlowupChart((0, 1), 0))
    gens = non_log_flat_ideal(W)
    assert is_unit_ideal(gens)


def test_tag_divisibility_checked():
    with pytest.raises(ValueError):
        VectorField([mono((0, 1)), mono((0, 1))], tags=(0,))


# -------------------------------------------------------------- serialization
def test_field_json_roundtrip():
    V = VectorField([mono((1, 0)) + mono((0, 2), QE(-1) / 3), mono((0, 1))],
                    tags=(1,))
    data = V.to_json_dict()
    W = VectorField.from_json_dict(R, data)
    assert W.eq(V) and W.tags == V.tags
