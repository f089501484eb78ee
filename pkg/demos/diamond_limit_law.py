"""Occurrences of the 28-edge diamond pattern: totals, singularity and limit constants.

Run with ``python demos/diamond_limit_law.py``.
"""
import mpmath

from singpert import asympt, critical
from singpert.maps.equation import diamond_model, tutte_model
from singpert.series import XMode
from singpert.solver import solve_dde

d = diamond_model()
print(d.to_text())

# at x = 1 the marked equation forgets the pattern and counts all near-triangulations
a = solve_dde(d, 10, XMode.numeric(1), ucap=40)
b = solve_dde(tutte_model(), 10, XMode.numeric(1), ucap=40)
print("totals agree with the unmarked equation:", a.t0 == b.t0)

cp = critical.solve_critical0(d)
print("z0 =", mpmath.nstr(cp.z0, 20), " (27/256 =", mpmath.nstr(mpmath.mpf(27) / 256, 20), ")")

# a large pattern is rare, so both constants are tiny and nearly equal
st = asympt.clt_from_z0(d)
print(f"mu = {float(st.mu):.4e}  sigma2 = {float(st.sigma2):.4e}")
