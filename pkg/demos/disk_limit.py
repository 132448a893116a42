"""Polar coordinates on the disk, as the limit of annuli eps < r < 1.

A density with a bump body f0 is integrated in Cartesian coordinates and in
polar coordinates with the retraction of the polar system. The polar side
needs a boundary term on the inner circle; its eps -> 0 limit is
-sgn_s(2,2) 2 pi f0(0).
"""

import math

from superint import scenario

rep = scenario.run(scenario.load_example("polar"))
cov = rep["cov"]
for r in cov["runs"]:
    print(f"eps = {r['eps']:.2f}: bulk {r['bulk']:+.8f}  boundary {r['boundary']:+.8f}")
print(f"extrapolated boundary term {cov['boundary']:+.8f}  (2 pi = {2 * math.pi:.8f})")
print(f"Cartesian integral {cov['reference']:+.10f}")
print(f"polar bulk + boundary {cov['total']:+.10f}")
print(f"identity residual {cov['identity_residual']:.1e}")
