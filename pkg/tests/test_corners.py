import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import setups as S
from helpers import random_coeff, seeds
from superint import expr as E
from superint.berezin import DEFAULT, BerezinDensity, fibre_integral
from superint.chart import Chart, CoordinateSystem, Retraction, associated_retraction, pullback_fn
from superint.corners import (
    CornerData,
    Face,
    change_of_vars_corners,
    change_of_vars_local,
    count_terms,
    enumerate_indices,
    immersion,
    induced_retraction,
    restrict_density,
    restrict_volume,
)
from superint.errors import InvalidCornerData, NoAdaptedCoordinates
from superint.grassmann import SuperNumber
from superint.quadrature import Region, integrate_berezin, integrate_volume

u1, u2, t1 = E.var("u1"), E.var("u2"), E.var("t1")
INF = math.inf


def on_face(e, face, n=50):
    tp = face.sample_params(n)
    m = n if face.box else 1
    return np.broadcast_to(np.asarray(E.evaluate(e, tp), float), (m,))


# -- index sets --------------------------------------------------------------


def test_indices_codim_one_q2():
    face = Face("f", [0], {"u1": E.ZERO, "u2": t1}, [u2], {"t1": (0, 1)})
    assert enumerate_indices(face, 2, 2) == [((1, 0), (0, 0))]


def test_indices_codim_one_q4():
    face = Face("f", [1], {"u1": t1, "u2": E.ZERO}, [u1], {"t1": (0, 1)})
    assert enumerate_indices(face, 2, 4) == [((0, 1), (0, 0)), ((0, 2), (0, 1))]


def test_indices_codim_two_q4():
    face = Face("c", [0, 1], {"u1": E.ZERO, "u2": E.ZERO})
    assert enumerate_indices(face, 2, 4) == [((1, 1), (0, 0))]


def test_no_indices_beyond_half_q():
    face = Face("c", [0, 1], {"u1": E.ZERO, "u2": E.ZERO})
    assert enumerate_indices(face, 2, 2) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 4), st.data())
def test_indices_partition_the_multi_indices(n, half_q, data):
    # every nonzero i with |i| <= q/2 lies in exactly one J_H
    q = 2 * half_q
    seen = []
    for s in range(1, 2 ** n):
        vanish = [i for i in range(n) if s >> i & 1]
        for j, jd in enumerate_indices(_abstract_face(vanish), n, q):
            assert all((j[i] > 0) == (i in vanish) for i in range(n))
            assert all(jd[i] == max(j[i] - 1, 0) for i in range(n))
            seen.append(j)
    expected = [i for i in np.ndindex(*([half_q + 1] * n)) if 0 < sum(i) <= half_q]
    assert sorted(seen) == sorted(expected)


def _abstract_face(vanish):
    # only the vanishing set enters the index enumeration
    return SimpleNamespace(vanish=list(vanish))


# -- restriction ----------------------------------------------------------------


def test_restriction_of_lebesgue_to_a_line():
    ch = Chart(2, 0, region=Region({"u1": (0, 1), "u2": (0, 1)}))
    face = Face("left", [0], {"u1": E.ZERO, "u2": t1}, [u2], {"t1": (0, 1)})
    data = CornerData(ch, [u1], [face])
    g = E.exp(u1) * E.cos(u2) + 2
    r = restrict_density(BerezinDensity(ch, ch.lift(g)), data, face, Retraction.canonical(ch))
    assert np.allclose(on_face(r.coeff.body, face), on_face(E.cos(t1) + 2, face), atol=1e-14)


def test_restriction_to_a_diagonal_gives_arc_length():
    # normalised rho: the restricted Lebesgue density is the induced length
    ch = Chart(2, 0, region=Region({"u1": (0, 1), "u2": (0, 1)}))
    face = Face("diag", [0], {"u1": t1, "u2": 1 - t1}, [u1], {"t1": (0, 1)})
    data = CornerData(ch, [(1 - u1 - u2) * (1 / math.sqrt(2))], [face])
    r = restrict_density(BerezinDensity(ch, ch.lift(E.ONE)), data, face, Retraction.canonical(ch))
    assert np.allclose(on_face(r.coeff.body, face), math.sqrt(2), atol=1e-13)


def test_polar_restriction_is_f_over_eps_times_arc_length():
    eps = 0.3
    ch = Chart(2, 0, region=Region({"u1": (eps, 1), "u2": (-math.pi, math.pi)}, periodic={"u2"}))
    face = Face("circle", [0], {"u1": E.const(eps), "u2": t1}, [u2], {"t1": (-math.pi, math.pi)}, {"t1"})
    data = CornerData(ch, [u1 - eps], [face])
    f0 = E.exp(u1 * E.cos(u2))
    # f0 dv0 = f0 r dr dth; the density f0 / r dv0 has coefficient f0 in (r, th)
    r = restrict_density(BerezinDensity(ch, ch.lift(f0)), data, face, Retraction.canonical(ch))
    ds = eps  # arc length element eps dth
    want = on_face(E.substitute(f0, {"u1": E.const(eps), "u2": t1}), face) / eps * ds
    assert np.allclose(on_face(r.coeff.body, face), want, atol=1e-13)


@pytest.mark.parametrize("face", ["left", "bottom", "right", "top", "c00", "c10", "c11", "c01"])
def test_fibre_integration_commutes_with_restriction_on_the_square(face):
    s = S.square()
    data, g2, om = s["data"], s["gamma2"], s["omega"]
    fc = data.face(face)
    gH = induced_retraction(data, fc, g2)
    lhs = fibre_integral(gH, restrict_density(om, data, fc, g2))
    k = fc.codim
    sign = DEFAULT.sign_s(2, 4) * DEFAULT.sign_s(2 - k, 4)
    rhs = E.mul(E.const(sign), restrict_volume(fibre_integral(g2, om), data, fc))
    assert np.max(np.abs(on_face(lhs, fc) - on_face(rhs, fc))) < 1e-10


def test_fibre_integration_commutes_with_restriction_on_the_circle():
    s = S.polar(0.3)
    data, g2, om = s["data"], s["gamma2"], s["omega"]
    fc = data.face("circle")
    lhs = fibre_integral(induced_retraction(data, fc, g2), restrict_density(om, data, fc, g2))
    sign = DEFAULT.sign_s(2, 2) * DEFAULT.sign_s(1, 2)
    rhs = E.mul(E.const(sign), restrict_volume(fibre_integral(g2, om), data, fc))
    assert np.max(np.abs(on_face(lhs, fc) - on_face(rhs, fc))) < 1e-10


# -- induced retraction -----------------------------------------------------------


def test_canonical_retraction_induces_canonical():
    s = S.quadrant()
    for name in ("edge1", "edge2", "corner"):
        assert induced_retraction(s["data"], s["data"].face(name), s["gamma"]).is_canonical()


@pytest.mark.parametrize("name", ["left", "bottom", "top"])
def test_induced_retraction_commutes_with_immersion(name):
    # iota_H* gamma* g = gamma_H* (g o P) for base functions g
    s = S.square()
    data, g2 = s["data"], s["gamma2"]
    fc = data.face(name)
    gH = induced_retraction(data, fc, g2)
    iota = immersion(data, fc, g2)
    g = E.exp(u1) * E.sin(u2 + 0.3) + u1 * u2
    a = pullback_fn(iota, g2.pull(g))
    b = gH.pull(data.on_face(fc, g))
    assert a.equals(b, variables=gH.chart.variables, low=0.05, high=0.95)


def test_boundary_of_half_line_r14():
    # the boundary structure from gamma*(rho) sends sum gamma*(f_nu) xi^nu to sum f_nu(0) xi^nu
    ch = Chart(1, 4, region=Region({"u1": (0, INF)}))
    X = [ch.coordinate(i) for i in range(2, 6)]
    v = ch.coordinate(1) + X[0] * X[1] + X[2] * X[3]
    g = associated_retraction(CoordinateSystem(ch, [v] + X))
    face = Face("origin", [0], {"u1": E.ZERO})
    data = CornerData(ch, [u1], [face])
    iota = immersion(data, face, g)
    rng = np.random.default_rng(5)
    fs = {m: E.add(E.const(float(rng.uniform(-1, 1))), E.mul(E.const(float(rng.uniform(-1, 1))), E.exp(u1)))
          for m in (0, 0b11, 0b101, 0b1111)}
    f = sum((g.pull(c) * SuperNumber(4, {m: 1}) for m, c in fs.items()), SuperNumber(4))
    got = pullback_fn(iota, f)
    for m, c in fs.items():
        assert abs(float(E.evaluate(got.coeffs.get(m, E.ZERO), {})) - float(E.evaluate(c, {"u1": 0.0}))) < 1e-13


# -- corner data validation --------------------------------------------------


def test_non_vanishing_boundary_function_is_rejected():
    ch = Chart(2, 0, region=Region({"u1": (0, 1), "u2": (0, 1)}))
    face = Face("left", [0], {"u1": E.const(0.1), "u2": t1}, [u2], {"t1": (0, 1)})
    with pytest.raises(InvalidCornerData):
        CornerData(ch, [u1], [face])


def test_wrong_tangent_coordinate_is_rejected():
    ch = Chart(2, 0, region=Region({"u1": (0, 1), "u2": (0, 1)}))
    face = Face("left", [0], {"u1": E.ZERO, "u2": t1}, [u1 + u2 + 1], {"t1": (0, 1)})
    with pytest.raises(InvalidCornerData):
        CornerData(ch, [u1], [face])


def test_dependent_boundary_functions_are_rejected():
    ch = Chart(2, 0, region=Region({"u1": (0, 1), "u2": (0, 1)}))
    face = Face("left", [0], {"u1": E.ZERO, "u2": t1}, [u1], {"t1": (0, 1)})
    with pytest.raises((NoAdaptedCoordinates, InvalidCornerData)):
        CornerData(ch, [u1], [face])


def test_cusp_of_a_drop_is_rejected():
    # near the tip of a drop both sides share a tangent: rho = u2^2 - u1^3 has
    # vanishing differential at the tip, so no adapted coordinates exist there
    ch = Chart(2, 0, region=Region({"u1": (0, 1), "u2": (-1, 1)}))
    tip = Face("tip", [0], {"u1": E.ZERO, "u2": E.ZERO})
    with pytest.raises((NoAdaptedCoordinates, InvalidCornerData)):
        CornerData(ch, [u1 ** 3 - u2 ** 2], [tip])


def test_boundary_derivation_must_be_dual_to_rho():
    ch = Chart(2, 0, region=Region({"u1": (0, 1), "u2": (0, 1)}))
    face = Face("left", [0], {"u1": E.ZERO, "u2": t1}, [u2], {"t1": (0, 1)})
    with pytest.raises(InvalidCornerData):
        CornerData(ch, [u1], [face], fields={0: [E.const(2), E.ZERO]})


def test_duplicate_face_names_are_rejected():
    ch = Chart(1, 0, region=Region({"u1": (0, 1)}))
    f = Face("a", [0], {"u1": E.ZERO})
    with pytest.raises(InvalidCornerData):
        CornerData(ch, [u1], [f, f])


# -- local formula --------------------------------------------------------------


def test_local_formula_has_no_correction_for_equal_retractions():
    s = S.square()
    _, corr = change_of_vars_local(s["omega"], s["gamma"], s["gamma"])
    assert corr == {}


def test_local_formula_rudakov():
    s = S.rudakov()
    bulk, corr = change_of_vars_local(s["omega"], s["gamma"], s["gamma2"])
    assert set(corr) == {(1,)}
    total = integrate_volume(E.add(bulk, *corr.values()), s["chart"].region)
    assert abs(total - integrate_berezin(s["omega"], s["gamma2"], s["chart"].region)) < 1e-13


def test_local_formula_is_a_pointwise_identity():
    s = S.square()
    bulk, corr = change_of_vars_local(s["omega"], s["gamma"], s["gamma2"])
    assert E.equivalent(E.add(bulk, *corr.values()), fibre_integral(s["gamma2"], s["omega"]),
                        variables=["u1", "u2"], low=0.05, high=0.95)


# -- the engine ----------------------------------------------------------------------


@pytest.mark.parametrize("f0", [u1, E.exp(u1), E.sin(3 * u1) + 1, u1 ** 3 - 2 * u1, E.cos(u1) * u1])
def test_rudakov_boundary_is_the_endpoint_difference(f0):
    s = S.rudakov(f0=f0, f12=E.sin(u1))
    rep = change_of_vars_corners(s["omega"], s["gamma"], s["gamma2"], s["data"], with_lhs=True)
    want = -DEFAULT.sign_s(1, 2) * (float(E.evaluate(f0, {"u1": 1.0})) - float(E.evaluate(f0, {"u1": 0.0})))
    assert abs(rep.boundary - want) < 1e-13
    assert abs(rep.residual) < 1e-12


def test_quadrant_terms_match_a_direct_computation():
    s = S.quadrant()
    ch, g, g2, om = s["chart"], s["gamma"], s["gamma2"], s["omega"]
    d = [b - a for a, b in zip(g.images, g2.images)]

    def F(i):
        c = d[0] ** i[0] * d[1] ** i[1] * ch.lift(1.0 / (math.factorial(i[0]) * math.factorial(i[1])))
        return fibre_integral(g, om.lmul(c))

    def edge(e, var, other):
        return integrate_volume(E.substitute(e, {var: E.ZERO}), Region({other: (0, INF)}), 64)

    # fundamental theorem of calculus along each edge, and the value at the corner
    want = {
        (1, 0): edge(F((1, 0)), "u1", "u2"),
        (2, 0): -edge(E.diff(F((2, 0)), "u1"), "u1", "u2"),
        (0, 1): edge(F((0, 1)), "u2", "u1"),
        (0, 2): -edge(E.diff(F((0, 2)), "u2"), "u2", "u1"),
        (1, 1): float(E.evaluate(F((1, 1)), {"u1": 0.0, "u2": 0.0})),
    }
    rep = change_of_vars_corners(om, g, g2, s["data"], rule=64, with_lhs=True)
    got = {t.j: t.value for t in rep.terms}
    assert got.keys() == want.keys()
    for j in want:
        assert abs(got[j] - want[j]) < 1e-10, j
    assert abs(rep.residual) < 1e-10


def test_square_has_thirteen_terms():
    s = S.square()
    assert count_terms(s["omega"], s["gamma"], s["gamma2"], s["data"]) == 13
    rep = change_of_vars_corners(s["omega"], s["gamma"], s["gamma2"], s["data"], with_lhs=True)
    # bulk plus twelve boundary terms: two per edge, one per corner
    assert len(rep.terms) == 12 and all(t.value != 0 for t in rep.terms)
    assert abs(rep.residual) < 1e-10


def _setup(name):
    return {"rudakov": S.rudakov, "quadrant": S.quadrant, "square": S.square, "polar": lambda: S.polar(0.3)}[name]()


@pytest.mark.parametrize("name", ["rudakov", "quadrant", "square", "polar"])
def test_superderivation_and_classical_routes_agree(name):
    s = _setup(name)
    kw = dict(rule=s.get("rule"))
    a = change_of_vars_corners(s["omega"], s["gamma"], s["gamma2"], s["data"], route="superderivation", **kw)
    b = change_of_vars_corners(s["omega"], s["gamma"], s["gamma2"], s["data"], route="classical", **kw)
    assert abs(a.boundary - b.boundary) < 1e-8
    va = {(t.face, t.j): t.value for t in a.terms}
    vb = {(t.face, t.j): t.value for t in b.terms}
    assert va.keys() == vb.keys()
    for k in va:
        assert abs(va[k] - vb[k]) < 1e-8, k


@pytest.mark.parametrize("name", ["quadrant", "square"])
def test_boundary_total_does_not_depend_on_the_boundary_derivations(name):
    s = _setup(name)
    kw = dict(rule=s.get("rule"))
    a = change_of_vars_corners(s["omega"], s["gamma"], s["gamma2"], s["data"], **kw)
    b = change_of_vars_corners(s["omega"], s["gamma"], s["gamma2"], s["data"],
                               odd_shift=S.square_odd_shift(s["chart"]), **kw)
    # other even parts as well
    c = change_of_vars_corners(s["omega"], s["gamma"], s["gamma2"], S.alternative_fields(s["data"]),
                               odd_shift=S.square_odd_shift(s["chart"]), **kw)
    assert abs(a.boundary - b.boundary) < 1e-8
    assert abs(a.boundary - c.boundary) < 1e-8


def test_polar_total_does_not_depend_on_the_boundary_derivations():
    s = S.polar(0.3)
    ch = s["chart"]
    shift = [ch.lift(u1) * ch.coordinate(3), ch.coordinate(4) * ch.lift(E.cos(u2))]
    a = change_of_vars_corners(s["omega"], s["gamma"], s["gamma2"], s["data"], rule=128)
    b = change_of_vars_corners(s["omega"], s["gamma"], s["gamma2"], s["data"], rule=128, odd_shift=shift)
    assert abs(a.boundary - b.boundary) < 1e-8


def test_boundary_terms_vanish_for_compact_support():
    s = S.square()
    ch = s["chart"]
    w = E.bump([u1, u2], [0.5, 0.5], 0.4)
    om = BerezinDensity(ch, ch.lift(w) * s["omega"].coeff)
    rep = change_of_vars_corners(om, s["gamma"], s["gamma2"], s["data"], rule=256, with_lhs=True)
    assert all(abs(t.value) < 1e-14 for t in rep.terms)
    # with compact support the two integrals agree outright; the bump needs a fine rule
    assert abs(rep.lhs - rep.bulk) < 1e-7


# -- the integral does not depend on the retraction for compact support ----------


def _random_retraction(rng, ch):
    X = [ch.coordinate(i) for i in range(3, 3 + ch.q)]
    L = ch.lift
    ims = []
    for i in range(2):
        im = ch.coordinate(i + 1)
        for a in range(ch.q):
            for b in range(a + 1, ch.q):
                im = im + L(random_coeff(rng)) * X[a] * X[b]
        if ch.q == 4:
            im = im + L(random_coeff(rng)) * X[0] * X[1] * X[2] * X[3]
        ims.append(im)
    return Retraction(ch, ims)


@pytest.mark.parametrize("q,order,tol", [(4, 32, 1e-10), (2, 192, 1e-9)])
def test_integral_is_independent_of_retraction_for_compact_support(q, order, tol):
    # q = 4 uses a polynomial weight whose zero extension is C^2 across the
    # box boundary; q = 2 a smooth bump, which converges more slowly
    if q == 4:
        w = E.power((1 - u1 ** 2) * (1 - u2 ** 2), 3)
    else:
        w = E.bump([u1, u2], [0.0, 0.0], 1.0)
    ch = Chart(2, q, region=Region({"u1": (-1, 1), "u2": (-1, 1)}))
    rng = np.random.default_rng(0)
    for _ in range(10):
        om = BerezinDensity(ch, SuperNumber(q, {m: E.mul(w, random_coeff(rng)) for m in range(2 ** q)}))
        g, g2 = _random_retraction(rng, ch), _random_retraction(rng, ch)
        a = integrate_berezin(om, g, ch.region, order)
        b = integrate_berezin(om, g2, ch.region, order)
        assert abs(a - b) < tol


@settings(max_examples=8, deadline=None)
@given(seeds())
def test_residual_vanishes_for_random_square_retractions(seed):
    rng = np.random.default_rng(seed)
    ch = Chart(2, 2, region=Region({"u1": (0, 1), "u2": (0, 1)}))
    data = S.square()["data"]
    data = CornerData(ch, data.rho, data.faces)
    om = BerezinDensity(ch, SuperNumber(2, {m: random_coeff(rng) for m in range(4)}))
    g, g2 = _random_retraction(rng, ch), _random_retraction(rng, ch)
    rep = change_of_vars_corners(om, g, g2, data, with_lhs=True)
    assert abs(rep.residual) < 1e-10
