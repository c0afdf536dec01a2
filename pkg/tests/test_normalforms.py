"""Normal-form tests: rectification, saddle-node invariants, the case
classifier, and the centre-manifold certificate."""

import random

import pytest

from sectorform.fields import VectorField, saturate
from sectorform.normalforms import (CentreManifoldResult, NormalFormReport,
                                    SaddleNodeInvariants, UnpreparedFieldError,
                                    centre_manifold_graph, classify_centre_field,
                                    rectify_smooth_factor, reduce_log_field,
                                    saddle_node_normal_form, series_root)
from sectorform.rings import ExactRing, QE
from sectorform.series import TruncatedSeries, geometric_series, random_series
from sectorform.solvers import compose_map, identity_map, invert_map, transform_field

R = ExactRing()
R2 = ExactRing(2)


def mono(J, value=1, order=12, ring=R, nvars=2):
    return TruncatedSeries.monomial(ring, nvars, order, J, value)


def var(i, order=12, ring=R, nvars=2):
    return TruncatedSeries.variable(ring, nvars, order, i)


def one(order=12, ring=R, nvars=2):
    return TruncatedSeries.one(ring, nvars, order)


def zero(order=12, ring=R, nvars=2):
    return TruncatedSeries.zero(ring, nvars, order)


# -------------------------------------------------------------- helpers
def saddle_node_model(p, r, Rpoly, nu, order, ring=R):
    """x^p { R(x) y dy + x^{r+1}/(1 + nu x^{p+r}) dx }."""
    den = one(order, ring) + mono((p + r, 0), nu, order, ring)
    xcomp = (mono((p + r + 1, 0), 1, order, ring) * den.invert_unit()).truncate(order)
    R2d = TruncatedSeries(ring, 2, order,
                          {(k, 0): c for (k,), c in Rpoly.coeffs.items()})
    ycomp = (R2d * var(1, order, ring)).multiply_monomial((p, 0)).truncate(order)
    return VectorField([xcomp, ycomp])


def tangent_perturbation(rng, order, ring=R, keep_y_divisor=False):
    """Random tangent-to-identity substitution of order >= 2.

    The x-part always preserves the exceptional divisor {x = 0} (the
    invariants are defined within the divisor-preserving class); the
    y-part is free unless the fixture also tags y = 0.
    """
    minw = 2
    a = random_series(ring, 2, order, rng, density=0.25, size=2, min_weight=minw)
    a = TruncatedSeries(ring, 2, order,
                        {J: c for J, c in a.coeffs.items() if J[0] >= 1})
    b = random_series(ring, 2, order, rng, density=0.25, size=2, min_weight=minw)
    if keep_y_divisor:
        b = TruncatedSeries(ring, 2, order,
                            {J: c for J, c in b.coeffs.items() if J[1] >= 1})
    return [var(0, order, ring) + a, var(1, order, ring) + b]


def series_poly(coeffs, order, ring=R):
    return TruncatedSeries(ring, 1, order, {(k,): c for k, c in coeffs.items()})


# --------------------------------------------------------- rectification
def test_rectify_trivial():
    V = VectorField([mono((2, 0)), zero()])
    yt = rectify_smooth_factor(V)
    assert yt.eq(var(1))


def test_rectify_shifts_out_the_flow():
    # V = x^2 (dx + dy): the invariant coordinate is y - x
    V = VectorField([mono((2, 0)), mono((2, 0))])
    yt = rectify_smooth_factor(V)
    assert yt.eq(var(1) - var(0))
    assert V.apply(yt).is_zero()


def test_rectify_random_battery_order12():
    rng = random.Random(31)
    for _ in range(8):
        u = one() + random_series(R, 2, 12, rng, density=0.3, min_weight=1)
        a = random_series(R, 2, 12, rng, density=0.3, min_weight=0)
        V = VectorField([(mono((2, 0)) * u).truncate(12),
                         (mono((2, 0)) * a).truncate(12)])
        yt = rectify_smooth_factor(V)
        assert V.apply(yt).is_zero()
        assert yt.coefficient((0, 1)) == QE(1)


def test_rectify_requires_unit():
    V = VectorField([(mono((2, 0)) * var(1)).truncate(12), mono((2, 0))])
    with pytest.raises(ValueError):
        rectify_smooth_factor(V)


# ----------------------------------------------------------- saddle-node
def test_saddle_node_already_normal():
    order = 12
    Rpoly = series_poly({0: 1, 1: 1}, order)   # R = 1 + x
    V = saddle_node_model(1, 1, Rpoly, QE(2), order)
    res = saddle_node_normal_form(V, order)
    inv = res.invariants
    assert inv.p == 1 and inv.r == 1
    assert inv.R.eq(Rpoly)
    assert inv.nu == QE(2)
    assert all(r.is_zero() for r in res.residual)
    # identity conjugation
    assert res.conjugation[0].eq(var(0, order))
    assert res.conjugation[1].eq(var(1, order))


def test_saddle_node_conjugation_verified_by_substitution():
    order = 12
    rng = random.Random(7)
    Rpoly = series_poly({0: 1, 1: -2, 2: 1}, order)
    V0 = saddle_node_model(1, 2, Rpoly, QE(-1), order)
    pert = tangent_perturbation(rng, order)
    V = transform_field(V0, pert)
    res = saddle_node_normal_form(V, order)
    inv = res.invariants
    assert (inv.p, inv.r) == (1, 2)
    assert inv.R.eq(Rpoly)
    assert inv.nu == QE(-1)
    assert all(r.is_zero() for r in res.residual)
    # substitution oracle: the composite conjugation recovers the model
    W = transform_field(V, res.conjugation)
    model = saddle_node_model(1, 2, Rpoly, QE(-1), order)
    assert W.eq(model)


def test_saddle_node_invariant_stability_battery():
    order = 12
    rng = random.Random(99)
    for trial in range(4):
        p = rng.randint(1, 3)
        r = rng.randint(1, 3)
        coeffs = {0: 1}
        for k in range(1, r + 1):
            coeffs[k] = rng.randint(-2, 2)
        Rpoly = series_poly(coeffs, order)
        nu = QE(rng.randint(-3, 3))
        V0 = saddle_node_model(p, r, Rpoly, nu, order)
        pert = tangent_perturbation(rng, order)
        V = transform_field(V0, pert)
        res = saddle_node_normal_form(V, order)
        assert (res.invariants.p, res.invariants.r) == (p, r)
        assert res.invariants.R.eq(Rpoly)
        assert res.invariants.nu == nu
        assert all(x.is_zero() for x in res.residual)


def test_saddle_node_rejects_q_divisor():
    V = VectorField([(mono((1, 1)) * mono((2, 0))).truncate(12),
                     (mono((1, 1)) * var(1)).truncate(12)])
    with pytest.raises(UnpreparedFieldError):
        saddle_node_normal_form(V)


# --------------------------------------------------------- classifier
def fixture_a(order=12):
    # x^3 unit in dy plus an x-divisible dx part
    u = one(order) + mono((1, 0), 1, order)
    return VectorField([(mono((3, 0)) * mono((1, 0))).truncate(order),
                        (mono((3, 0)) * u).truncate(order)])


def fixture_b(order=12):
    # x^{p+1}/(1+nu(y)x^p) dx with p = 2, nu(y) = 1 + y
    den = one(order) + mono((2, 0), 1, order) + \
        (mono((2, 0)) * var(1)).truncate(order)
    return VectorField([(mono((3, 0)) * den.invert_unit()).truncate(order),
                        zero(order)])


def fixture_c(order=12):
    den = one(order) + mono((1, 0), -2, order)
    return VectorField([(mono((2, 2)) * den.invert_unit()).truncate(order),
                        zero(order)], tags=(1,))


def fixture_d(order=12):
    return VectorField([zero(order), mono((2, 1), 1, order)])


def fixture_e(order=12, ring=R2):
    lam = ring.sqrt_d()
    den = (one(order, ring) +
           mono((1, 1), QE(3, d=2), order, ring)).invert_unit()
    xc = (mono((1, 1), 1, order, ring) * den * var(0, order, ring)).truncate(order)
    yc = (mono((1, 1), lam, order, ring) * den * var(1, order, ring)).truncate(order)
    return VectorField([xc, yc])


def fixture_f(order=12):
    return saddle_node_model(2, 1, series_poly({0: 1, 1: 3}, order), QE(1), order)


def fixture_g(order=12):
    # z dz + x^p y^q/(1+y^q(R+lam x^{p+r})) (y dy + x^r/(1+nu x^r)(q x dx - p y dy))
    p, q, r = 1, 2, 1
    nu, lam = QE(2), QE(-1)
    Rpoly = mono((0, 0), 3, order)   # R = 3 (degree <= r-1 = 0)
    ring = R
    prof = (one(order) + mono((r, 0), nu, order)).invert_unit()
    S = Rpoly + mono((p + r, 0), lam, order)
    mult = (one(order) + (S * mono((0, q), 1, order)).truncate(order)).invert_unit()
    bx = (mono((r, 0)) * prof * var(0)).scale(q).truncate(order)
    by = (var(1) + (mono((r, 0)) * prof * var(1)).scale(-p).truncate(order)).truncate(order)
    m = mono((p, q), 1, order)
    return VectorField([(m * mult * bx).truncate(order),
                        (m * mult * by).truncate(order)], tags=(0, 1))


def fixture_h(order=14):
    # eigenvalues (l, -k) = (1, -1); P = (i,j) + n(k,l) = (1,0) + 1*(1,1)
    k = l = 1
    i, j, n, r = 1, 0, 1, 1
    nu, lam = QE(1), QE(2)
    Rpoly = mono((0, 0), -1, order)  # degree <= r-1 = 0
    u = mono((1, 1), 1, order)       # x^k y^l
    Y = mono((1, 0), 1, order)       # x^i y^j
    prof = (one(order) + u.scale(nu)).invert_unit()
    S = Rpoly + (u ** (n + r)).scale(lam)
    mult = (one(order) + (Y * S).truncate(order)).invert_unit()
    b1x = var(0).scale(l)
    b1y = var(1).scale(-k)
    b2x = var(0).scale(j)
    b2y = var(1).scale(-i)
    main = (Y * (u ** n)).truncate(order)
    xc = (main * mult * (b1x + ((u ** r) * prof * b2x).truncate(order))).truncate(order)
    yc = (main * mult * (b1y + ((u ** r) * prof * b2y).truncate(order))).truncate(order)
    return VectorField([xc, yc], tags=(0,))


def fixture_i(order=14):
    # (i,j) = 0, n = 1: (x^k y^l)^n {R(u)(l x dx - k y dy) + u^r/(1+nu u^{n+r}) x dx}
    k, l, n, r = 1, 1, 1, 1
    nu = QE(1)
    Rpoly = one(order) + mono((1, 1), 2, order)   # R(u) = 1 + 2u, deg <= r
    u = mono((1, 1), 1, order)
    prof = ((u ** r) * (one(order) + (u ** (n + r)).scale(nu)).invert_unit()).truncate(order)
    xc = ((u ** n) * ((Rpoly * var(0).scale(l)).truncate(order)
                      + (prof * var(0)).truncate(order))).truncate(order)
    yc = ((u ** n) * (Rpoly * var(1).scale(-k))).truncate(order)
    return VectorField([xc, yc], tags=(0, 1))


def fixture_j(order=14):
    # smooth descended foliation: x^i y^j (x^k y^l)^n/(1 + x^i y^j nu(u)) (l x dx - k y dy)
    k, l, i, j, n = 1, 2, 0, 1, 1
    u = mono((1, 2), 1, order)
    Y = mono((0, 1), 1, order)
    nu_series = one(order).scale(QE(1)) + u.scale(QE(-2))
    mult = (one(order) + (Y * nu_series).truncate(order)).invert_unit()
    main = (Y * (u ** n)).truncate(order)
    xc = (main * mult * var(0).scale(l)).truncate(order)
    yc = (main * mult * var(1).scale(-k)).truncate(order)
    return VectorField([xc, yc], tags=(0, 1)) if False else \
        VectorField([xc, yc], tags=(0,))


def fixture_h_prime(order=14):
    # n = 0, j = 0: x^p/(1 + x^p R(u)) {(l x dx - k y dy) + u^r/(1+nu u^r) y dy}
    k, l, p, r = 2, 1, 1, 1
    nu = QE(-1)
    Rpoly = one(order).scale(QE(2))
    u = mono((2, 1), 1, order)
    Y = mono((1, 0), 1, order)
    prof = ((u ** r) * (one(order) + (u ** r).scale(nu)).invert_unit()).truncate(order)
    mult = (one(order) + (Y * Rpoly).truncate(order)).invert_unit()
    xc = (Y * mult * var(0).scale(l)).truncate(order)
    yc = (Y * mult * (var(1).scale(-k) + (prof * var(1)).truncate(order))).truncate(order)
    return VectorField([xc, yc], tags=(0,))


def fixture_j_prime(order=14):
    # (x^k y^l)^n (l x dx - k y dy), exactly
    k, l, n = 2, 3, 1
    u = mono((2, 3), 1, order)
    xc = ((u ** n) * var(0).scale(l)).truncate(order)
    yc = ((u ** n) * var(1).scale(-k)).truncate(order)
    return VectorField([xc, yc], tags=(0, 1))


def test_classify_case_a():
    rep = classify_centre_field(fixture_a())
    assert rep.case_tag == "a"
    assert rep.invariants["p"] == 3
    assert all(r.is_zero() for r in rep.residual)


def test_classify_case_b():
    rep = classify_centre_field(fixture_b())
    assert rep.case_tag == "b"
    assert rep.invariants["p"] == 2
    nu = rep.invariants["nu"]
    assert nu.coefficient((0,)) == QE(1) and nu.coefficient((1,)) == QE(1)
    assert all(r.is_zero() for r in rep.residual)


def test_classify_case_c():
    rep = classify_centre_field(fixture_c())
    assert rep.case_tag == "c"
    assert rep.invariants["p"] == 1 and rep.invariants["q"] == 2
    assert rep.invariants["nu"].coefficient((0,)) == QE(-2)


def test_classify_case_d():
    rep = classify_centre_field(fixture_d())
    assert rep.case_tag == "d"
    assert rep.invariants["p"] == 2 and rep.invariants["q"] == 1


def test_classify_case_e():
    rep = classify_centre_field(fixture_e())
    assert rep.case_tag == "e"
    assert rep.invariants["p"] == 1 and rep.invariants["q"] == 1
    assert rep.invariants["lambda"] == R2.sqrt_d()
    assert rep.invariants["nu"] == QE(3, d=2)


def test_classify_case_f():
    rep = classify_centre_field(fixture_f())
    assert rep.case_tag == "f"
    assert rep.invariants["p"] == 2 and rep.invariants["r"] == 1
    assert rep.invariants["lambda"] == QE(1)


def test_classify_case_g():
    rep = classify_centre_field(fixture_g())
    assert rep.case_tag == "g"
    inv = rep.invariants
    assert (inv["p"], inv["q"], inv["r"]) == (1, 2, 1)
    assert inv["nu"] == QE(2)
    assert inv["R"].coefficient((0,)) == QE(3)
    assert inv["lambda"] == QE(-1)
    assert any("completion" in n for n in rep.notes)


def test_classify_case_h():
    rep = classify_centre_field(fixture_h())
    assert rep.case_tag == "h"
    inv = rep.invariants
    assert (inv["k"], inv["l"], inv["i"], inv["j"], inv["n"]) == (1, 1, 1, 0, 1)
    assert inv["r"] == 1
    assert not inv["first_integral"]


def test_classify_case_i():
    rep = classify_centre_field(fixture_i())
    assert rep.case_tag == "i"
    inv = rep.invariants
    assert (inv["k"], inv["l"], inv["n"], inv["r"]) == (1, 1, 1, 1)
    assert not inv["first_integral"]
    assert inv["nu"] == QE(1)
    assert inv["R"].coefficient((1,)) == QE(2)


def test_classify_case_j():
    rep = classify_centre_field(fixture_j())
    assert rep.case_tag == "j"
    assert rep.invariants["first_integral"]
    nus = rep.invariants["nu_series"]
    assert nus.coefficient((0,)) == QE(1)
    assert nus.coefficient((1,)) == QE(-2)


def test_classify_case_h_prime():
    rep = classify_centre_field(fixture_h_prime())
    assert rep.case_tag == "h'"
    assert not rep.invariants["first_integral"]
    assert rep.invariants["r"] == 1


def test_classify_case_j_prime():
    rep = classify_centre_field(fixture_j_prime())
    assert rep.case_tag == "j'"
    assert rep.invariants["first_integral"]
    assert (rep.invariants["k"], rep.invariants["l"], rep.invariants["n"]) == (2, 3, 1)


def test_classifier_deterministic():
    reps = [classify_centre_field(fixture_e()).to_json_dict() for _ in range(3)]
    assert reps[0] == reps[1] == reps[2]


def test_classifier_invariant_stability_smooth_cases():
    rng = random.Random(5)
    order = 10
    for build, tag in [(fixture_a, "a"), (fixture_b, "b")]:
        V0 = build(order)
        pert = tangent_perturbation(rng, order)
        V = transform_field(V0, pert)
        rep = classify_centre_field(V)
        assert rep.case_tag == tag
        rep0 = classify_centre_field(V0)
        assert rep.invariants["p"] == rep0.invariants["p"]
        if "nu" in rep0.invariants:
            assert rep.invariants["nu"].eq(rep0.invariants["nu"])


def test_classifier_invariant_stability_e():
    rng = random.Random(6)
    order = 10
    V0 = fixture_e(order)
    pert = tangent_perturbation(rng, order, ring=R2, keep_y_divisor=True)
    # keep both divisors: restrict the x-perturbation to (x) as well
    px = TruncatedSeries(R2, 2, order,
                         {J: c for J, c in (pert[0] - var(0, order, R2)).coeffs.items()
                          if J[0] >= 1})
    py = TruncatedSeries(R2, 2, order,
                         {J: c for J, c in (pert[1] - var(1, order, R2)).coeffs.items()
                          if J[1] >= 1})
    pert = [var(0, order, R2) + px, var(1, order, R2) + py]
    V = transform_field(V0, pert)
    rep = classify_centre_field(V)
    rep0 = classify_centre_field(V0)
    assert rep.case_tag == "e"
    assert rep.invariants["lambda"] == rep0.invariants["lambda"]
    assert rep.invariants["nu"] == rep0.invariants["nu"]


# ------------------------------------------------------ centre manifold
def lift3(s, order, ring=R):
    return TruncatedSeries(ring, 3, order,
                           {(J[0], J[1], 0): c for J, c in s.coeffs.items()})


def test_centre_manifold_gamma_zero():
    order = 10
    xc = mono((2, 0, 0), 1, order, nvars=3) * TruncatedSeries.variable(R, 3, order, 0)
    yc = mono((1, 0, 0), 1, order, nvars=3)
    zc = TruncatedSeries.variable(R, 3, order, 2)
    V = VectorField([xc.truncate(order), yc.truncate(order), zc])
    res = centre_manifold_graph(V, order)
    assert res.graph.is_zero() and res.certified


def test_centre_manifold_simple_fixture():
    order = 10
    yc = mono((2, 0, 0), 1, order, nvars=3)
    zc = TruncatedSeries.variable(R, 3, order, 2) - mono((3, 0, 0), 1, order, nvars=3)
    V = VectorField([TruncatedSeries.zero(R, 3, order), yc, zc])
    res = centre_manifold_graph(V, order)
    assert res.graph.eq(mono((3, 0), 1, order))
    assert res.certified and res.remainder.is_zero()


def test_centre_manifold_invariance_battery():
    rng = random.Random(13)
    order = 10
    for _ in range(6):
        gamma = random_series(R, 2, order, rng, density=0.3, min_weight=0)
        a = random_series(R, 2, order, rng, density=0.3, min_weight=0)
        z3 = TruncatedSeries.variable(R, 3, order, 2)
        xc = (mono((2, 0, 0), 1, order, nvars=3) *
              TruncatedSeries.variable(R, 3, order, 0) * lift3(a, order)).truncate(order)
        yc = (mono((2, 0, 0), 1, order, nvars=3)).truncate(order)
        zc = z3 + (mono((3, 0, 0), 1, order, nvars=3) * lift3(gamma, order)).truncate(order)
        V = VectorField([xc, yc, zc])
        res = centre_manifold_graph(V, order)
        assert res.certified
        assert res.remainder.is_zero()


def test_centre_manifold_beast_per_power_poles():
    # V = (z - y/(1-y)) dz - x y dy: the graph equation is the beast; the
    # per-power coefficients reproduce the 1/(1+kx) expansions
    order = 12
    ring = R
    geom = TruncatedSeries(ring, 3, order,
                           {(0, n, 0): 1 for n in range(1, order + 1)})
    zc = TruncatedSeries.variable(ring, 3, order, 2) - geom
    yc = -(mono((1, 1, 0), 1, order, nvars=3))
    V = VectorField([TruncatedSeries.zero(ring, 3, order), yc, zc])
    res = centre_manifold_graph(V, order)
    assert res.certified
    from sectorform.solvers import beast_probe
    for b in beast_probe(5):
        expect = b.series(ring, order - b.k)
        for (m,), c in expect.coeffs.items():
            assert res.graph.coefficient((m, b.k)) == c


def test_centre_manifold_stall_reported():
    # gamma depending on z with no x^k gap: the solve cannot gain degree
    order = 8
    z3 = TruncatedSeries.variable(R, 3, order, 2)
    zc = z3 + (z3 * z3).truncate(order) + mono((1, 0, 0), 1, order, nvars=3)
    V = VectorField([TruncatedSeries.zero(R, 3, order),
                     TruncatedSeries.zero(R, 3, order), zc])
    try:
        res = centre_manifold_graph(V, order)
        assert res.certified  # if it converges, the certificate must hold
    except UnpreparedFieldError:
        pass


def test_series_root():
    rng = random.Random(3)
    for k in (2, 3, 5):
        u = one(8) + random_series(R, 2, 8, rng, density=0.4, min_weight=1)
        root = series_root(u, k)
        assert (root ** k).eq(u)
