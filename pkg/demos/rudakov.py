"""The coordinate change v = u + xi1 xi2 on ]0,1[ x R^{0,2}.

The density v |Dy| integrates to 0 against the retraction of y and to
sgn_s(1,2) against the standard one. The difference is an endpoint term.
"""

from superint import expr as E
from superint.berezin import DEFAULT, BerezinDensity
from superint.chart import Chart, CoordinateSystem, Retraction, associated_retraction
from superint.corners import CornerData, Face, change_of_vars_corners
from superint.quadrature import Region, integrate_berezin

u = E.var("u1")
ch = Chart(1, 2, region=Region({"u1": (0, 1)}))
xi1, xi2 = ch.coordinate(2), ch.coordinate(3)
y = CoordinateSystem(ch, [ch.coordinate(1) + xi1 * xi2, xi1, xi2], names=["v"])
gamma, gamma_y = Retraction.canonical(ch), associated_retraction(y)

w = BerezinDensity(ch, y.images[0], y)
print("int v|Dy| with the retraction of y:", integrate_berezin(w, gamma_y, ch.region))
print("int v|Dy| with the standard one:   ", integrate_berezin(w, gamma, ch.region))

data = CornerData(ch, [u, 1 - u], [Face("left", [0], {"u1": E.ZERO}), Face("right", [1], {"u1": E.ONE})])
print("\nendpoint terms for f = f0 + f12 xi1 xi2:")
for f0 in (u, E.exp(u), E.sin(3 * u)):
    om = BerezinDensity(ch, ch.lift(f0) + ch.lift(E.cos(u)) * xi1 * xi2, y)
    rep = change_of_vars_corners(om, gamma, gamma_y, data)
    f1, f00 = (float(E.evaluate(f0, {"u1": t})) for t in (1.0, 0.0))
    want = -DEFAULT.sign_s(1, 2) * (f1 - f00)
    print(f"  f0 = {f0!s:12s} boundary {rep.boundary:+.12f}  expected {want:+.12f}  residual {rep.residual:.1e}")
