"""Integral forms of order ``p - 1``, Cartan derivative and Stokes's theorem.

An integral form ``sum_i f_i Dx (x) d/dx_i Pi`` is stored through its left
coefficients ``f_i`` relative to a frame ``x`` of the chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .berezin import (
    DEFAULT,
    BerezinDensity,
    Convention,
    DiffOp,
    act,
    fibre_integral,
    frame_derivative,
    frame_of,
    jacobian_ber,
)
from .chart import Retraction, expr_det, pullback_fn
from .corners import CornerData, Face, _FaceGeometry, induced_retraction
from .errors import InvalidCornerData, SignAmbiguous
from .grassmann import Parity, SuperNumber, scalar
from .quadrature import integrate_volume

__all__ = [
    "IntegralForm",
    "cartan_d",
    "pullback_integral_form",
    "fibre_integral_forms",
    "classical_d",
    "boundary_orientation",
    "verify_stokes",
    "stokes_general",
    "StokesReport",
]


def _cparity(chart, k) -> int:
    # parity of the k-th (0-based) coordinate
    return 0 if k < chart.p else 1


class IntegralForm:
    """``sum_i f_i Dx (x) d/dx_i Pi`` on a chart.

    Parameters
    ----------
    chart : Chart
    components : dict
        ``{i: f_i}`` with 1-based ``i`` in ``1..p+q``.
    frame : CoordinateSystem, optional
        The frame ``x``; ``None`` is the standard frame.
    """

    def __init__(self, chart, components, frame=None, convention: Convention = DEFAULT):
        n = chart.p + chart.q
        comps = {}
        for i, f in components.items():
            if not 1 <= int(i) <= n:
                raise IndexError(f"component index {i} out of range 1..{n}")
            comps[int(i)] = f if isinstance(f, SuperNumber) else chart.lift(f)
        self.chart = chart
        self.components = comps
        self.frame = frame
        self.convention = convention

    @property
    def b(self) -> int:
        return self.convention.b(self.chart.p, self.chart.q)

    def parity(self) -> Parity:
        pars = set()
        for i, f in self.components.items():
            if f.is_zero():
                continue
            if f.parity is Parity.MIXED:
                return Parity.MIXED
            pars.add((f.parity.value + self.b + _cparity(self.chart, i - 1) + 1) % 2)
        if len(pars) > 1:
            return Parity.MIXED
        return Parity(pars.pop()) if pars else Parity.EVEN

    def to_frame(self, target) -> "IntegralForm":
        """Rewrite in the frame ``target`` (chain rule and Berezinian factor)."""
        if target is self.frame:
            return self
        ch = self.chart
        b = self.b
        n = ch.p + ch.q
        ber = jacobian_ber(self.frame, target)
        ims = target.images if target is not None else ch.standard()
        out = {}
        for j in range(n):
            acc = SuperNumber(ch.q)
            for i, f in self.components.items():
                dx = frame_derivative(ims[j], i, self.frame, ch)
                if dx.is_zero():
                    continue
                t = f * dx * ber
                # (cX)Pi = (-1)^{|c|} c (XPi); this keeps the Cartan derivative chart independent
                if ((_cparity(ch, j) + _cparity(ch, i - 1)) * (b + 1)) % 2:
                    t = -t
                acc = acc + t
            if not acc.is_zero():
                out[j + 1] = acc
        return IntegralForm(ch, out, target, self.convention)

    def equals(self, other: "IntegralForm", **kw) -> bool:
        other = other.to_frame(self.frame)
        keys = set(self.components) | set(other.components)
        z = SuperNumber(self.chart.q)
        return all(self.components.get(k, z).equals(other.components.get(k, z), **kw) for k in keys)


def cartan_d(w: IntegralForm) -> BerezinDensity:
    """``d(f Dx (x) d/dx_i Pi) = (-1)^{|f Dx| |x_i Pi|} d f/dx_i Dx``."""
    ch = w.chart
    b = w.b
    out = SuperNumber(ch.q)
    for i, f in w.components.items():
        xi_pi = (_cparity(ch, i - 1) + 1) % 2
        for par in (Parity.EVEN, Parity.ODD):
            part = f.part(par)
            if part.is_zero():
                continue
            t = frame_derivative(part, i, w.frame, ch)
            out = out - t if ((par.value + b) * xi_pi) % 2 else out + t
    return BerezinDensity(ch, out, w.frame, "form", w.convention)


def boundary_orientation(data: CornerData, face: Face) -> int:
    """Sign of ``det[-grad rho | dP/dt]``: +1 if ``t`` is positively oriented."""
    if face.codim != 1:
        raise InvalidCornerData("boundary orientation needs a codimension one face")
    ch = data.chart
    rho = data.rho[face.vanish[0]]
    cols = [[E.mul(E.const(-1), data.on_face(face, E.diff(rho, v))) for v in ch.variables]]
    for t in face.variables:
        cols.append([E.diff(face.param[v], t) for v in ch.variables])
    det = expr_det([list(r) for r in zip(*cols)])
    tp = face.sample_params(16)
    m = 16 if face.box else 1
    dv = np.broadcast_to(np.asarray(E.evaluate(det, tp), dtype=float), (m,))
    if np.any(dv > 0) and np.any(dv < 0) or np.any(dv == 0):
        raise SignAmbiguous(f"face {face.name}: orientation is not constant")
    return 1 if dv[0] > 0 else -1


def _geometry(data: CornerData, face: Face, tau) -> _FaceGeometry:
    full = [None] * len(data.rho)
    full[face.vanish[0]] = tau
    return _FaceGeometry(data, face, full)


def pullback_integral_form(w: IntegralForm, data: CornerData, face: Face, tau: SuperNumber,
                           geometry=None) -> BerezinDensity:
    """``iota*(w)`` for the immersion with ``iota*(tau) = 0`` (face chart, frame ``(t, xi)``)."""
    geo = geometry or _geometry(data, face, tau)
    wa = w.to_frame(geo.frame)
    f1 = wa.components.get(1, SuperNumber(w.chart.q))
    if wa.b:
        f1 = -f1
    return BerezinDensity(geo.face_chart, pullback_fn(geo.iota, f1), None, "form", w.convention)


def restrict_form(omega: BerezinDensity, geo: _FaceGeometry) -> BerezinDensity:
    """``(f Dx)|_{H, tau} = iota*(f) D iota*(x~)`` in adapted coordinates ``x = (tau, x~)``."""
    d = jacobian_ber(omega.frame, geo.frame)
    return BerezinDensity(geo.face_chart, pullback_fn(geo.iota, omega.coeff * d), None,
                          "form", omega.convention)


def fibre_integral_forms(gamma: Retraction, w: IntegralForm) -> list:
    """``Psi(gamma_!(w))`` as coefficients ``c_i`` of ``du_1 ^ .. (no du_i) .. ^ du_p``."""
    ch = w.chart
    p = ch.p
    fr = None if gamma.is_canonical() else frame_of(gamma)
    wg = w.to_frame(fr)
    out = []
    for i in range(1, p + 1):
        f = wg.components.get(i)
        if f is None:
            out.append(E.ZERO)
            continue
        h = fibre_integral(gamma, BerezinDensity(ch, f, fr, "form", w.convention))
        out.append(E.mul(E.const((-1) ** (p + i - 1)), h))
    return out


def classical_d(coeffs, variables) -> E.Expr:
    """``d(sum_i c_i du_1 ^ .. (no du_i) .. ^ du_p)`` as the coefficient of ``du``."""
    return E.add(*[E.mul(E.const((-1) ** i), E.diff(c, v)) for i, (c, v) in enumerate(zip(coeffs, variables))])


def _integrate(g, face: Face, rule):
    if not face.box:
        return float(np.asarray(E.evaluate(g, {}), dtype=float))
    return integrate_volume(g, face.region(), rule)


@dataclass
class StokesReport:
    lhs: float
    rhs: float
    sign: int
    boundary: dict = field(default_factory=dict)
    corrections: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


def _check_faces(data: CornerData):
    if data.chart.region is None:
        raise InvalidCornerData("chart needs a region")
    for f in data.faces:
        if f.codim != 1:
            raise InvalidCornerData("Stokes's theorem needs disjoint codimension one faces")


def verify_stokes(w: IntegralForm, gamma: Retraction, data: CornerData, rule=None) -> StokesReport:
    """Both sides of ``int_(U, gamma) dw = (-1)^{s(p,q)+s(p-1,q)+q} int iota*(w)``.

    The boundary carries the structure ``tau = gamma*(rho)`` and the induced
    retraction; faces get the outward-normal-first orientation.
    """
    _check_faces(data)
    ch = data.chart
    p, q = ch.dim
    conv = w.convention
    lhs = integrate_volume(fibre_integral(gamma, cartan_d(w)), ch.region, rule)
    sign = conv.sign_s(p, q) * conv.sign_s(p - 1, q) * (-1) ** q
    parts = {}
    for face in data.faces:
        tau = gamma.pull(data.rho[face.vanish[0]])
        geo = _geometry(data, face, tau)
        bw = pullback_integral_form(w, data, face, tau, geo)
        gH = induced_retraction(data, face, gamma)
        val = _integrate(fibre_integral(gH, bw), face, rule)
        parts[face.name] = boundary_orientation(data, face) * val
    rhs = sign * sum(parts.values())
    return StokesReport(lhs, rhs, sign, parts)


def stokes_general(w: IntegralForm, gamma2: Retraction, data: CornerData, taus: dict,
                   rule=None) -> StokesReport:
    """Stokes's formula for an arbitrary boundary structure.

    ``taus`` maps face names to boundary structures ``tau`` (even, with body
    the face's boundary function). Both sides are evaluated; the
    transversal terms ``int (omega_j . D^{j-1})|_{tau}`` with
    ``omega_j = (1/j!) (gamma2*(rho) - tau)^j dw`` appear per face and ``j``.
    """
    _check_faces(data)
    ch = data.chart
    p, q = ch.dim
    conv = w.convention
    omega = cartan_d(w)
    lhs = integrate_volume(fibre_integral(gamma2, omega), ch.region, rule)
    outer = conv.sign_s(p, q) * conv.sign_s(p - 1, q)
    parts, corr = {}, {}
    total = 0.0
    for face in data.faces:
        rho = data.rho[face.vanish[0]]
        tau = taus[face.name]
        if not E.equivalent(tau.body, rho, variables=ch.variables):
            raise InvalidCornerData(f"face {face.name}: boundary structure must have body rho")
        geo = _geometry(data, face, tau)
        orient = boundary_orientation(data, face)
        canon = Retraction.canonical(geo.face_chart)
        bw = pullback_integral_form(w, data, face, tau, geo)
        parts[face.name] = orient * _integrate(fibre_integral(canon, bw), face, rule)
        total += (-1) ** q * parts[face.name]
        D = DiffOp.derivation(ch, [scalar(q, 1)] + [SuperNumber(q)] * (p + q - 1), geo.frame)
        diff = gamma2.pull(rho) - tau
        for j in range(1, q // 2 + 1):
            wj = omega.lmul(diff ** j * scalar(q, 1.0 / math.factorial(j)))
            for _ in range(j - 1):
                wj = act(wj, D)
            r = restrict_form(wj, geo)
            val = orient * _integrate(fibre_integral(canon, r), face, rule)
            corr[(face.name, j)] = val
            total -= val
    return StokesReport(lhs, outer * total, outer, parts, corr)
