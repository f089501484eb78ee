"""Walk the example equation from series to critical point to limit law.

Run with ``python demos/example_pipeline.py``.
"""
import mpmath

from singpert import asympt, critical
from singpert.model import example2_model
from singpert.polysys import eliminate_critical, verify_annihilator
from singpert.series import XMode
from singpert.solver import residual_order, solve_dde, x_distribution

m = example2_model()
print(m.to_text())

# exact series with x kept symbolic
s = solve_dde(m, 12, "symbolic")
print("residual order:", residual_order(s))
for n in (3, 5, 8, 11):
    print(f"  law of x at n={n}:", [str(p) for p in x_distribution(s, n)])

# annihilators of u and t0 at the critical x, checked against the series
ua, ta = eliminate_critical(m)
print("t0 annihilator degree", ta.degree(), "residual order",
      verify_annihilator(ta, solve_dde(m, 20, "symbolic").t0))

# the unperturbed singularity and how it moves with x
cp = critical.solve_critical0(m)
print(f"z0 = {mpmath.nstr(cp.z0, 15)}, t0(z0) = {mpmath.nstr(cp.t00, 15)}")
for p in critical.continue_z0(m, [0.0, 0.02, 0.04, 0.06]):
    print(f"  x={float(p.x):.2f}  z0={mpmath.nstr(p.z0, 12)}")

# mean and variance constants against the moments of one large coefficient
st = asympt.clt_from_z0(m)
big = solve_dde(m, 150, XMode.jet(1, 3))
row = asympt.moment_table(big, [150])[0]
print(f"mu = {float(st.mu):.5f}   mean/n at n=150 = {float(row['mean']) / 150:.5f}")
print(f"sigma2 = {float(st.sigma2):.5f}   var/n at n=150 = {float(row['variance']) / 150:.5f}")
