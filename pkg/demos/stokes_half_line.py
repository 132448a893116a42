"""Stokes's theorem on ]0, inf[ x R^{0,4} for w = 1/2 v^2 Dy (x) d/dv Pi.

Here v = u + xi1 xi2 + xi3 xi4. Both sides vanish when the boundary carries
the structure v = 0. Cutting along u = 0 instead gives a boundary integral
of 1, which the transversal terms cancel.
"""

import math

from superint import expr as E
from superint.chart import Chart, CoordinateSystem, associated_retraction
from superint.corners import CornerData, Face
from superint.quadrature import Region
from superint.stokes import IntegralForm, cartan_d, stokes_general, verify_stokes

ch = Chart(1, 4, region=Region({"u1": (0, math.inf)}))
X = [ch.coordinate(i) for i in range(2, 6)]
v = ch.coordinate(1) + X[0] * X[1] + X[2] * X[3]
y = CoordinateSystem(ch, [v] + X, names=["v"])
gamma = associated_retraction(y)
data = CornerData(ch, [E.var("u1")], [Face("origin", [0], {"u1": E.ZERO})])

w = IntegralForm(ch, {1: v * v * ch.lift(0.5)}, y)
print("dw has coefficient", cartan_d(w).coeff, "in the frame y")

good = verify_stokes(w, gamma, data)
print(f"boundary structure v = 0: lhs {good.lhs:+.3f}, rhs {good.rhs:+.3f}, sign {good.sign:+d}")

naive = stokes_general(w, gamma, data, {"origin": ch.coordinate(1)})
print(f"boundary structure u = 0: boundary integral {naive.boundary['origin']:+.3f}")
for (face, j), val in naive.corrections.items():
    print(f"  transversal term j = {j}: {val:+.3f}")
print(f"  lhs {naive.lhs:+.3f}, corrected rhs {naive.rhs:+.3f}")
