import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_super, seeds
from superint import expr as E
from superint.berezin import DEFAULT, Convention, fibre_integral, frame_of, transform_density
from superint.chart import Chart, CoordinateSystem, Retraction, associated_retraction
from superint.corners import CornerData, Face
from superint.errors import InvalidCornerData
from superint.grassmann import SuperNumber
from superint.quadrature import Region
from superint.stokes import (
    IntegralForm,
    boundary_orientation,
    cartan_d,
    classical_d,
    fibre_integral_forms,
    pullback_integral_form,
    stokes_general,
    verify_stokes,
)

u, u1, u2, t1 = E.var("u1"), E.var("u1"), E.var("u2"), E.var("t1")
ZERO, ONE = E.ZERO, E.ONE


def r14():
    ch = Chart(1, 4, region=Region({"u1": (0, math.inf)}))
    X = [ch.coordinate(i) for i in range(2, 6)]
    v = ch.coordinate(1) + X[0] * X[1] + X[2] * X[3]
    y = CoordinateSystem(ch, [v] + X, names=["v"])
    data = CornerData(ch, [u], [Face("origin", [0], {"u1": ZERO})])
    return ch, v, y, data


def slab():
    ch = Chart(1, 2, region=Region({"u1": (0, 1)}))
    data = CornerData(ch, [u, 1 - u], [Face("a", [0], {"u1": ZERO}), Face("b", [1], {"u1": ONE})])
    return ch, data


def square(q):
    ch = Chart(2, q, region=Region({"u1": (0, 1), "u2": (0, 1)}))
    faces = [
        Face("left", [0], {"u1": ZERO, "u2": t1}, [u2], {"t1": (0, 1)}),
        Face("bottom", [1], {"u1": t1, "u2": ZERO}, [u1], {"t1": (0, 1)}),
        Face("right", [2], {"u1": ONE, "u2": t1}, [u2], {"t1": (0, 1)}),
        Face("top", [3], {"u1": t1, "u2": ONE}, [u1], {"t1": (0, 1)}),
    ]
    return ch, CornerData(ch, [u1, u2, 1 - u1, 1 - u2], faces)


def random_form(rng, ch, frame=None):
    names = ch.variables
    comps = {i: random_super(rng, ch.q, names=names) for i in range(1, ch.p + ch.q + 1) if rng.random() < 0.8}
    return IntegralForm(ch, comps or {1: random_super(rng, ch.q, names=names)}, frame)


def random_retraction(rng, ch):
    L = ch.lift
    X = [ch.coordinate(ch.p + j) for j in range(1, ch.q + 1)]
    a, b = (round(float(c), 3) for c in rng.uniform(-1, 1, 2))
    ims = []
    for i in range(ch.p):
        v = E.var(ch.variables[i])
        ims.append(ch.coordinate(i + 1) + L(a + b * E.sin(v)) * X[0] * X[1])
    return Retraction(ch, ims)


# -- the half line R^{1,4} ------------------------------------------------------


def test_cartan_derivative_of_half_v_squared():
    ch, v, y, _ = r14()
    w = IntegralForm(ch, {1: v * v * ch.lift(0.5)}, y)
    # default b = p + q is odd, which puts a sign on even components
    assert cartan_d(w).coeff.equals(-v)
    w_q = IntegralForm(ch, {1: v * v * ch.lift(0.5)}, y, Convention(b_rule="q"))
    assert cartan_d(w_q).coeff.equals(v)


def test_cartan_derivative_of_a_constant_vanishes():
    ch, _, y, _ = r14()
    assert cartan_d(IntegralForm(ch, {1: 3.0, 2: 1.5}, y)).coeff.is_zero()


def test_r14_stokes_with_the_induced_structure_balances():
    ch, v, y, data = r14()
    w = IntegralForm(ch, {1: v * v * ch.lift(0.5)}, y)
    rep = verify_stokes(w, associated_retraction(y), data)
    assert rep.lhs == pytest.approx(0, abs=1e-14)
    assert rep.rhs == pytest.approx(0, abs=1e-14)


def test_r14_naive_boundary_needs_transversal_corrections():
    ch, v, y, data = r14()
    w = IntegralForm(ch, {1: v * v * ch.lift(0.5)}, y)
    g = associated_retraction(y)
    naive = stokes_general(w, g, data, {"origin": ch.coordinate(1)})
    # the uncorrected boundary integral is 1 while the bulk integral is 0
    assert naive.lhs == pytest.approx(0, abs=1e-14)
    assert naive.boundary["origin"] == pytest.approx(1, abs=1e-14)
    assert naive.corrections[("origin", 1)] == pytest.approx(2, abs=1e-14)
    assert naive.corrections[("origin", 2)] == pytest.approx(-1, abs=1e-14)
    assert naive.residual < 1e-13
    good = stokes_general(w, g, data, {"origin": v})
    assert good.boundary["origin"] == pytest.approx(0, abs=1e-14)
    assert all(c == pytest.approx(0, abs=1e-14) for c in good.corrections.values())


# -- chart independence and fibre integration -------------------------------------


@settings(max_examples=20, deadline=None)
@given(seeds(), st.sampled_from([(1, 2), (2, 2)]))
def test_cartan_derivative_is_chart_independent(seed, dim):
    rng = np.random.default_rng(seed)
    ch = Chart(*dim)
    fr = frame_of(random_retraction(rng, ch))
    w = random_form(rng, ch)
    a = cartan_d(w)
    b = transform_density(cartan_d(w.to_frame(fr)), None)
    assert a.coeff.equals(b.coeff, variables=ch.variables)


@settings(max_examples=20, deadline=None)
@given(seeds(), st.sampled_from([(1, 2), (2, 2), (2, 0)]))
def test_fibre_integration_commutes_with_d(seed, dim):
    rng = np.random.default_rng(seed)
    ch = Chart(*dim)
    g = random_retraction(rng, ch) if ch.q else Retraction.canonical(ch)
    w = random_form(rng, ch)
    lhs = fibre_integral(g, cartan_d(w))
    rhs = classical_d(fibre_integral_forms(g, w), ch.variables)
    assert E.equivalent(lhs, rhs, variables=ch.variables)


def test_to_frame_round_trip():
    rng = np.random.default_rng(11)
    ch = Chart(2, 2)
    fr = frame_of(random_retraction(rng, ch))
    w = random_form(rng, ch)
    assert w.to_frame(fr).to_frame(None).equals(w, variables=ch.variables)


# -- boundary pullback --------------------------------------------------------------


def test_boundary_pullback_does_not_depend_on_tangent_coordinates():
    ch, _ = square(2)
    rng = np.random.default_rng(4)
    w = random_form(rng, ch)
    tau = ch.coordinate(1) + ch.lift(E.cos(u2)) * ch.coordinate(3) * ch.coordinate(4)
    out = []
    for tangent in (u2, u2 + u1 * E.exp(u2)):
        face = Face("left", [0], {"u1": ZERO, "u2": t1}, [tangent], {"t1": (0, 1)})
        data = CornerData(ch, [u1], [face])
        out.append(pullback_integral_form(w, data, face, tau).coeff)
    assert out[0].equals(out[1], variables=["t1"], low=0.05, high=0.95)


def test_odd_components_do_not_reach_the_boundary():
    ch, data = square(2)
    f = SuperNumber(2, {0: E.exp(u1), 3: u2})
    w = IntegralForm(ch, {3: f, 4: f})
    for face in data.faces:
        tau = ch.lift(data.rho[face.vanish[0]])
        assert pullback_integral_form(w, data, face, tau).coeff.is_zero()


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 6))
def test_stokes_sign_is_trivial_under_the_default_convention(p, q):
    assert DEFAULT.sign_s(p, q) * DEFAULT.sign_s(p - 1, q) * (-1) ** q == 1
    assert Convention("pq-only").sign_s(p, q) * Convention("pq-only").sign_s(p - 1, q) * (-1) ** q == 1
    half = Convention("half-q")
    assert half.sign_s(p, q) * half.sign_s(p - 1, q) * (-1) ** q == (-1) ** q


def test_boundary_orientation_of_the_square():
    _, data = square(0)
    got = {f.name: boundary_orientation(data, f) for f in data.faces}
    # outward normal first, then the tangent t: counterclockwise boundary
    assert got == {"left": -1, "bottom": 1, "right": 1, "top": -1}


# -- Stokes's theorem -----------------------------------------------------------------


def test_classical_stokes_on_the_square():
    ch, data = square(0)
    w = IntegralForm(ch, {1: u1 ** 2 * u2})
    rep = verify_stokes(w, Retraction.canonical(ch), data)
    # d(u1^2 u2 du2) = 2 u1 u2 du1 du2 integrates to 1/2
    assert rep.lhs == pytest.approx(0.5, abs=1e-14)
    assert rep.residual < 1e-14


def test_stokes_on_the_slab():
    ch, data = slab()
    L = ch.lift
    X1, X2 = ch.coordinate(2), ch.coordinate(3)
    g = Retraction(ch, [L(u) + L(E.sin(u)) * X1 * X2])
    w = IntegralForm(ch, {1: L(E.exp(u)) + L(u * u) * X1 * X2, 2: L(E.cos(u)) * X1 + L(u) * X2,
                          3: L(u) * X1 * X2 + 1})
    rep = verify_stokes(w, g, data)
    assert abs(rep.lhs) > 0.1
    assert rep.residual < 1e-12


@settings(max_examples=10, deadline=None)
@given(seeds())
def test_stokes_on_the_square_with_random_data(seed):
    rng = np.random.default_rng(seed)
    ch, data = square(2)
    rep = verify_stokes(random_form(rng, ch), random_retraction(rng, ch), data)
    assert rep.residual < 1e-10


@settings(max_examples=10, deadline=None)
@given(seeds())
def test_stokes_with_arbitrary_boundary_structures(seed):
    rng = np.random.default_rng(seed)
    ch, data = slab()
    L = ch.lift
    X1, X2 = ch.coordinate(2), ch.coordinate(3)
    w = random_form(rng, ch)
    g2 = random_retraction(rng, ch)
    a, b = (round(float(c), 3) for c in rng.uniform(-1, 1, 2))
    taus = {"a": L(u) + L(a + u) * X1 * X2, "b": L(1 - u) + L(b * E.exp(u)) * X1 * X2}
    rep = stokes_general(w, g2, data, taus)
    assert rep.residual < 1e-10


def test_general_structure_must_have_body_rho():
    ch, data = slab()
    w = IntegralForm(ch, {1: 1.0})
    with pytest.raises(InvalidCornerData):
        stokes_general(w, Retraction.canonical(ch), data, {"a": ch.lift(u + 1), "b": ch.lift(1 - u)})


def test_stokes_needs_codimension_one_faces():
    ch = Chart(2, 0, region=Region({"u1": (0, 1), "u2": (0, 1)}))
    data = CornerData(ch, [u1, u2], [Face("c", [0, 1], {"u1": ZERO, "u2": ZERO})])
    with pytest.raises(InvalidCornerData):
        verify_stokes(IntegralForm(ch, {1: 1.0}), Retraction.canonical(ch), data)


def test_component_index_is_checked():
    with pytest.raises(IndexError):
        IntegralForm(Chart(1, 2), {4: 1.0})
