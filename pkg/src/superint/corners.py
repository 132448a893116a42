"""Supermanifolds with corners: faces, restriction and boundary terms.

A region ``N_0 = {rho_i > 0}`` carries user-declared faces. Each face fixes
the set ``S`` of boundary functions vanishing on it, a parametrization
``P(t)`` of the face and tangent base coordinates ``u~_0`` with
``u~_0(P(t)) = t``, so that ``(rho_S, u~_0)`` are adapted base coordinates
near the face.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import expr as E
from .berezin import (
    BerezinDensity,
    DiffOp,
    act,
    body_sign,
    fibre_integral,
    frame_of,
    jacobian_ber,
)
from .chart import (
    Chart,
    CoordinateSystem,
    Morphism,
    Retraction,
    expr_matrix_inverse,
    pullback_fn,
)
from .errors import InvalidCornerData, NoAdaptedCoordinates, SignAmbiguous
from .grassmann import SuperNumber, scalar
from .quadrature import Region, check_decay, integrate_volume

__all__ = [
    "Face",
    "CornerData",
    "enumerate_indices",
    "immersion",
    "restrict_density",
    "restrict_volume",
    "induced_retraction",
    "boundary_derivations",
    "change_of_vars_local",
    "change_of_vars_corners",
    "count_terms",
    "BoundaryDecomposition",
    "BoundaryTerm",
]

_CHECK_TOL = 1e-9


@dataclass
class Face:
    """A boundary manifold ``H_0`` of codimension ``len(vanish)``.

    Parameters
    ----------
    name : str
    vanish : tuple of int
        0-based indices of the boundary functions vanishing on the face.
    param : dict
        ``{u name: Expr in the face variables}``, the parametrization ``P``.
    tangent : list of Expr
        Tangent base coordinates ``u~_0`` (functions of the chart variables).
    box : dict
        Parameter domain ``{t name: (lo, hi)}``; empty for a corner point.
    periodic : set of str
        Periodic face variables.
    """

    name: str
    vanish: tuple
    param: dict
    tangent: list = field(default_factory=list)
    box: dict = field(default_factory=dict)
    periodic: set = field(default_factory=set)

    def __post_init__(self):
        self.vanish = tuple(sorted(self.vanish))
        self.param = {k: E.as_expr(v) for k, v in self.param.items()}
        self.tangent = [E.as_expr(t) for t in self.tangent]
        if len(self.tangent) != len(self.box):
            raise InvalidCornerData(f"face {self.name}: need one tangent coordinate per face variable")

    @property
    def variables(self) -> list:
        return list(self.box)

    @property
    def codim(self) -> int:
        return len(self.vanish)

    def region(self) -> Region | None:
        if not self.box:
            return None
        return Region(dict(self.box), periodic=set(self.periodic))

    def sample_params(self, n: int = 16, seed: int = 3) -> dict:
        if not self.box:
            return {}
        return self.region().sample_points(n, np.random.default_rng(seed))

    def points(self, tpts: dict, n: int) -> dict:
        """Chart points ``P(t)`` for face parameters ``tpts``."""
        memo: dict = {}
        return {k: np.broadcast_to(E.evaluate(v, tpts, memo), (n,)).astype(float)
                for k, v in self.param.items()}


class CornerData:
    """Boundary functions, faces and optional boundary derivations on a chart.

    Parameters
    ----------
    chart : Chart
        Its region is the box or mapped domain containing ``N_0``.
    rho : list of Expr
        Boundary functions; ``N_0 = {rho_i > 0}`` inside the chart region.
    faces : list of Face
    fields : dict, optional
        ``{i: [a_i1, ..., a_ip]}`` classical boundary derivations
        ``A_i = sum_k a_ik d/du_k``; default ``d/drho_i`` in each face's
        adapted coordinates.
    odd_shift : list, optional
        Odd super numbers ``c_l`` added as ``sum_l c_l d/dxi_l`` to every
        boundary superderivation (another valid family).
    """

    def __init__(self, chart: Chart, rho, faces, fields=None, odd_shift=None, check: bool = True):
        self.chart = chart
        self.rho = [E.as_expr(r) for r in rho]
        self.faces = list(faces)
        self.fields = {int(i): [E.as_expr(a) for a in v] for i, v in (fields or {}).items()}
        self.odd_shift = odd_shift
        names = [f.name for f in self.faces]
        if len(set(names)) != len(names):
            raise InvalidCornerData("face names must be unique")
        for f in self.faces:
            for i in f.vanish:
                if not 0 <= i < len(self.rho):
                    raise InvalidCornerData(f"face {f.name}: boundary function index {i + 1} out of range")
            if f.codim + len(f.box) != chart.p:
                raise InvalidCornerData(f"face {f.name}: codimension plus face dimension must equal p")
            if set(f.param) != set(chart.variables):
                raise InvalidCornerData(f"face {f.name}: parametrization must give every chart variable")
        self._adapted = {}
        if check:
            self.validate()

    def face(self, name: str) -> Face:
        for f in self.faces:
            if f.name == name:
                return f
        raise KeyError(name)

    def adapted_jacobian(self, face: Face):
        """Symbolic ``d(rho_S, u~_0)/du`` (rows: functions), inverse and determinant."""
        hit = self._adapted.get(face.name)
        if hit is None:
            funcs = [self.rho[i] for i in face.vanish] + face.tangent
            jac = [[E.diff(g, v) for v in self.chart.variables] for g in funcs]
            inv, det = expr_matrix_inverse(jac)
            hit = self._adapted[face.name] = (jac, inv, det)
        return hit

    def on_face(self, face: Face, e: E.Expr) -> E.Expr:
        """``e o P`` as an expression in the face variables."""
        return E.substitute(e, face.param)

    def validate(self, n: int = 24):
        """Sampled checks of the face declarations and the independence condition."""
        for f in self.faces:
            t = f.sample_params(n)
            m = n if f.box else 1
            pts = f.points(t, m)
            for i, r in enumerate(self.rho):
                val = np.broadcast_to(E.evaluate(r, pts), (m,))
                if i in f.vanish:
                    if np.any(np.abs(val) > _CHECK_TOL):
                        raise InvalidCornerData(f"face {f.name}: rho{i + 1} does not vanish on the face")
                elif np.any(val < -_CHECK_TOL):
                    raise InvalidCornerData(f"face {f.name}: rho{i + 1} is negative on the face")
            for tv, tn in zip(f.tangent, f.variables):
                val = np.broadcast_to(E.evaluate(tv, pts), (m,))
                if np.any(np.abs(val - t[tn]) > 1e-8 * (1 + np.abs(t[tn]))):
                    raise InvalidCornerData(f"face {f.name}: tangent coordinate does not invert the parametrization")
            _, _, det = self.adapted_jacobian(f)
            dv = np.broadcast_to(E.evaluate(det, pts), (m,))
            if np.any(np.abs(dv) < 1e-12):
                raise NoAdaptedCoordinates(f"face {f.name}: boundary functions and tangent coordinates are dependent")
            for i, comps in self.fields.items():
                if i not in f.vanish:
                    continue
                for l in f.vanish:
                    val = E.add(*[E.mul(a, E.diff(self.rho[l], v))
                                  for a, v in zip(comps, self.chart.variables)])
                    got = np.broadcast_to(E.evaluate(val, pts), (m,))
                    if np.any(np.abs(got - (1.0 if l == i else 0.0)) > 1e-8):
                        raise InvalidCornerData(f"boundary derivation {i + 1} fails A_i(rho_j) = delta_ij on {f.name}")

    def exempt(self, pts) -> np.ndarray:
        """Boundary points lying on a declared face (some ``rho_i`` vanishes)."""
        n = len(next(iter(pts.values())))
        out = np.zeros(n, dtype=bool)
        for r in self.rho:
            out |= np.abs(np.broadcast_to(E.evaluate(r, pts), (n,))) < 1e-9
        return out


def enumerate_indices(face: Face, n: int, q: int):
    """``(j, j_down)`` for ``j in J_H`` with ``|j| <= q // 2``, lexicographic."""
    cap = q // 2
    S = face.vanish
    k = len(S)
    out = []
    if k == 0 or k > cap:
        return out
    for vals in product(range(1, cap + 1), repeat=k):
        if sum(vals) > cap:
            continue
        j = [0] * n
        for i, v in zip(S, vals):
            j[i] = v
        out.append((tuple(j), tuple(max(v - 1, 0) for v in j)))
    out.sort()
    return out


# --------------------------------------------------------------------------
# immersion, restriction, induced retraction


class _FaceGeometry:
    """Face chart, immersion and adapted frame for one face and one ``tau``."""

    def __init__(self, data: CornerData, face: Face, tau):
        chart = data.chart
        q = chart.q
        self.face = face
        self.face_chart = Chart(len(face.box), q, variables=face.variables,
                                region=face.region(), name=f"H[{face.name}]")
        fc = self.face_chart
        jac, inv, det = data.adapted_jacobian(face)
        on = lambda e: data.on_face(face, e)  # noqa: E731
        inv_face = [[on(c) for c in row] for row in inv]
        # solve tau_S(U, xi) = 0 and u~_0(U) = t with body(U) = P(t)
        U = [scalar(q, face.param[v]) for v in chart.variables]
        odd = [fc.coordinate(fc.p + j) for j in range(1, q + 1)]
        targets = [SuperNumber(q)] * face.codim + [fc.coordinate(i + 1) for i in range(fc.p)]
        for _ in range(q // 2):
            phi = Morphism(fc, chart, U + odd)
            vals = [pullback_fn(phi, tau[i]) for i in face.vanish]
            vals += [pullback_fn(phi, chart.lift(t)) for t in face.tangent]
            res = [v - t for v, t in zip(vals, targets)]
            if all(r.soul.is_zero() for r in res):
                break
            U = [U[l] - sum((res[k].soul * scalar(q, inv_face[l][k]) for k in range(chart.p)),
                            SuperNumber(q))
                 for l in range(chart.p)]
        self.iota = Morphism(fc, chart, U + odd)
        # adapted frame x = (tau_S, u~_0, xi) on the chart
        ims = [tau[i] for i in face.vanish] + [chart.lift(t) for t in face.tangent]
        ims += [chart.coordinate(chart.p + j) for j in range(1, q + 1)]
        self.frame = CoordinateSystem(chart, ims, name=f"a[{face.name}]")
        # orientation sign of the adapted frame, sampled on the face
        tp = face.sample_params(16)
        m = 16 if face.box else 1
        pts = face.points(tp, m)
        dv = np.atleast_1d(E.evaluate(det, pts))
        if np.any(dv > 0) == np.any(dv < 0):
            raise SignAmbiguous(f"face {face.name}: adapted Jacobian changes sign")
        self.sign = 1 if np.all(dv > 0) else -1
        self.det_on_face = on(det)


def _geometry(data: CornerData, face: Face, tau, key) -> _FaceGeometry:
    cache = data.__dict__.setdefault("_geom", {})
    hit = cache.get((face.name, key))
    if hit is None:
        hit = cache[(face.name, key)] = _FaceGeometry(data, face, tau)
    return hit


def _tau(data: CornerData, gamma: Retraction):
    return [gamma.pull(r) for r in data.rho]


def immersion(data: CornerData, face: Face, gamma: Retraction) -> Morphism:
    """``iota_H`` for the boundary structure ``tau = gamma*(rho)``."""
    return _geometry(data, face, _tau(data, gamma), id(gamma)).iota


def restrict_density(omega: BerezinDensity, data: CornerData, face: Face, gamma: Retraction) -> BerezinDensity:
    """``omega|_{H, gamma*(rho)}`` on the face chart (standard frame ``(t, xi)``)."""
    geo = _geometry(data, face, _tau(data, gamma), id(gamma))
    chart = data.chart
    if omega.kind == "density":
        sign = geo.sign
        if omega.frame is not None:
            sign *= body_sign(_frame_det(omega.frame), chart)
        d = jacobian_ber(omega.frame, geo.frame) * scalar(chart.q, sign)
    else:
        d = jacobian_ber(omega.frame, geo.frame)
    f = omega.coeff * d
    return BerezinDensity(geo.face_chart, pullback_fn(geo.iota, f), None, omega.kind, omega.convention)


def _frame_det(frame):
    from .berezin import _std_jacobian

    return _std_jacobian(frame).body_det_R()


def induced_retraction(data: CornerData, face: Face, gamma: Retraction) -> Retraction:
    """``gamma_H`` with ``gamma_H*(t) = iota_H*(gamma*(u~_0))``."""
    geo = _geometry(data, face, _tau(data, gamma), id(gamma))
    cached = getattr(geo, "gamma_H", None)
    if cached is not None:
        return cached
    fc = geo.face_chart
    ims = []
    for t, name in zip(face.tangent, fc.variables):
        im = pullback_fn(geo.iota, gamma.pull(t))
        body = im.body
        if body is not E.var(name):
            if not E.equivalent(body, E.var(name), variables=[name], low=-0.9, high=0.9) and \
                    not _equivalent_on(body, E.var(name), fc):
                raise NoAdaptedCoordinates(f"face {face.name}: tangent coordinate body is not {name}")
            im = SuperNumber(fc.q, dict(im.coeffs, **{0: E.var(name)}))
        ims.append(im)
    geo.gamma_H = Retraction(fc, ims)
    return geo.gamma_H


def _equivalent_on(a, b, chart):
    pts = chart.sample_points(20)
    va = np.broadcast_to(E.evaluate(a, pts), (20,))
    vb = np.broadcast_to(E.evaluate(b, pts), (20,))
    return bool(np.allclose(va, vb, rtol=1e-10, atol=1e-12))


def restrict_volume(g, data: CornerData, face: Face) -> E.Expr:
    """Classical restriction ``(g |du_0|)|_{H_0, rho}`` as a function of the face variables."""
    _, _, det = data.adapted_jacobian(face)
    absdet = E.sqrt(E.power(det, 2))
    return data.on_face(face, E.mul(E.as_expr(g), E.power(absdet, -1)))


# --------------------------------------------------------------------------
# boundary derivations


def classical_fields(data: CornerData, face: Face) -> dict:
    """``{i: [a_i1..a_ip]}`` for ``i`` in the face's vanishing set."""
    out = {}
    _, inv, _ = data.adapted_jacobian(face)
    for pos, i in enumerate(face.vanish):
        if i in data.fields:
            out[i] = data.fields[i]
        else:
            # d/drho_i in coordinates (rho_S, u~_0): column pos of the inverse Jacobian
            out[i] = [inv[k][pos] for k in range(data.chart.p)]
    return out


def boundary_derivations(data: CornerData, face: Face, gamma: Retraction, odd_shift=None) -> dict:
    """Boundary superderivations ``D_i`` lifting the classical fields through ``gamma``.

    ``D_i = sum_k gamma*(a_ik) d/du_k`` in the frame ``(gamma*(u_0), xi)``,
    plus the optional odd shift ``sum_l c_l d/dxi_l``.
    """
    chart = data.chart
    shift = odd_shift if odd_shift is not None else data.odd_shift
    out = {}
    for i, comps in classical_fields(data, face).items():
        coeffs = [gamma.pull(a) for a in comps]
        if shift:
            coeffs += [c if isinstance(c, SuperNumber) else chart.lift(c) for c in shift]
        else:
            coeffs += [SuperNumber(chart.q)] * chart.q
        out[i] = DiffOp.derivation(chart, coeffs, None if gamma.is_canonical() else frame_of(gamma))
    return out


def _apply_classical(g: E.Expr, comps, variables) -> E.Expr:
    # (g |du|).A = -sum_k d_k(a_k g) |du|
    return E.mul(E.const(-1), E.add(*[E.diff(E.mul(a, g), v) for a, v in zip(comps, variables)]))


# --------------------------------------------------------------------------
# engines


@dataclass
class BoundaryTerm:
    face: str
    j: tuple
    j_down: tuple
    value: float
    sign: int = 1


@dataclass
class BoundaryDecomposition:
    """Bulk term, signed boundary terms and (optionally) the direct left side."""

    bulk: float
    terms: list
    lhs: float | None = None
    route: str = "superderivation"
    decay_ok: bool = True

    @property
    def boundary(self) -> float:
        return float(sum(t.value for t in self.terms))

    @property
    def total(self) -> float:
        return self.bulk + self.boundary

    @property
    def residual(self) -> float | None:
        return None if self.lhs is None else abs(self.lhs - self.total)

    def by_face(self) -> dict:
        out: dict = {}
        for t in self.terms:
            out[t.face] = out.get(t.face, 0.0) + t.value
        return out


def _integrate_face(expr_, face: Face, rule):
    if not face.box:
        return float(np.asarray(E.evaluate(expr_, {}), dtype=float))
    return integrate_volume(expr_, face.region(), rule)


def _omega_j(omega: BerezinDensity, diffs, j) -> BerezinDensity:
    q = omega.chart.q
    c = scalar(q, 1.0 / math.prod(math.factorial(v) for v in j))
    for d, v in zip(diffs, j):
        if v:
            c = c * d ** v
    return omega.lmul(c)


def change_of_vars_local(omega: BerezinDensity, gamma: Retraction, gamma2: Retraction) -> tuple:
    """Integrands of the local change-of-retraction formula.

    Returns ``(bulk, corrections)`` where ``bulk = gamma_!(omega)`` and
    ``corrections[i] = gamma_!((1/i!) omega (v - u)^i . d_u^i)`` for ``i != 0``;
    ``int_(U, gamma2) omega`` is the integral of their sum.
    """
    chart = gamma.chart
    p, q = chart.dim
    cap = q // 2
    diffs = [v - u for u, v in zip(gamma.images, gamma2.images)]
    frame = None if gamma.is_canonical() else frame_of(gamma)
    out = {}
    for i in product(range(cap + 1), repeat=p):
        if sum(i) == 0 or sum(i) > cap:
            continue
        w = _omega_j(omega, diffs, i)
        if w.coeff.is_zero():
            continue
        op = DiffOp(chart, {tuple(i) + (0,) * q: scalar(q, 1)}, frame)
        out[tuple(i)] = fibre_integral(gamma, act(w, op))
    return fibre_integral(gamma, omega), out


def _terms_superderivation(omega, gamma, data, diffs, rule, odd_shift):
    chart = data.chart
    p, q = chart.dim
    conv = omega.convention
    n = len(data.rho)
    terms = []
    for face in data.faces:
        idx = enumerate_indices(face, n, q)
        if not idx:
            continue
        D = boundary_derivations(data, face, gamma, odd_shift)
        gH = induced_retraction(data, face, gamma)
        sign = conv.sign_s(p, q) * conv.sign_s(p - face.codim, q)
        for j, jd in idx:
            w = _omega_j(omega, diffs, j)
            if w.coeff.is_zero():
                terms.append(BoundaryTerm(face.name, j, jd, 0.0, sign))
                continue
            for i, v in enumerate(jd):
                for _ in range(v):
                    w = act(w, D[i])
            r = restrict_density(w, data, face, gamma)
            g = fibre_integral(gH, r)
            terms.append(BoundaryTerm(face.name, j, jd, sign * _integrate_face(g, face, rule), sign))
    return terms


def _terms_classical(omega, gamma, data, diffs, rule):
    chart = data.chart
    q = chart.q
    n = len(data.rho)
    terms = []
    for face in data.faces:
        idx = enumerate_indices(face, n, q)
        if not idx:
            continue
        fields = classical_fields(data, face)
        for j, jd in idx:
            w = _omega_j(omega, diffs, j)
            g = fibre_integral(gamma, w)
            for i, v in enumerate(jd):
                for _ in range(v):
                    g = _apply_classical(g, fields[i], chart.variables)
            val = _integrate_face(restrict_volume(g, data, face), face, rule)
            terms.append(BoundaryTerm(face.name, j, jd, val, 1))
    return terms


def change_of_vars_corners(omega: BerezinDensity, gamma: Retraction, gamma2: Retraction,
                           data: CornerData, rule=None, route: str = "superderivation",
                           with_lhs: bool = True, odd_shift=None,
                           check_decay_: bool = True) -> BoundaryDecomposition:
    """Boundary decomposition of ``int_(N, gamma2) omega`` relative to ``gamma``.

    ``route="superderivation"`` restricts ``omega_j . D^{j_down}`` to each
    boundary supermanifold and integrates against the induced retraction;
    ``route="classical"`` first takes ``gamma_!`` and acts with classical
    boundary derivations.
    """
    if route not in ("superderivation", "classical"):
        raise ValueError("route must be 'superderivation' or 'classical'")
    chart = data.chart
    region = chart.region
    if region is None:
        raise InvalidCornerData("chart needs a region to integrate over")
    bulk_g = fibre_integral(gamma, omega)
    lhs_g = fibre_integral(gamma2, omega) if with_lhs else None
    decay_ok = True
    if check_decay_:
        decay_ok = check_decay(bulk_g, region, exempt=data.exempt)
        if lhs_g is not None:
            decay_ok &= check_decay(lhs_g, region, exempt=data.exempt)
    bulk = integrate_volume(bulk_g, region, rule)
    lhs = integrate_volume(lhs_g, region, rule) if lhs_g is not None else None
    diffs = [gamma2.pull(r) - gamma.pull(r) for r in data.rho]
    if route == "superderivation":
        terms = _terms_superderivation(omega, gamma, data, diffs, rule, odd_shift)
    else:
        terms = _terms_classical(omega, gamma, data, diffs, rule)
    return BoundaryDecomposition(bulk, terms, lhs, route, decay_ok)


def count_terms(omega: BerezinDensity, gamma: Retraction, gamma2: Retraction, data: CornerData) -> int:
    """Number of structurally nonzero summands (bulk plus boundary terms)."""
    q = data.chart.q
    diffs = [gamma2.pull(r) - gamma.pull(r) for r in data.rho]
    count = 0 if omega.coeff.is_zero() else 1
    for face in data.faces:
        for j, _ in enumerate_indices(face, len(data.rho), q):
            if not _omega_j(omega, diffs, j).coeff.is_zero():
                count += 1
    return count
