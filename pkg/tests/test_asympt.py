from fractions import Fraction

import pytest

from singpert import asympt as A
from singpert.model import parse_model
from singpert.series import XMode
from singpert.solver import solve_dde


def synthetic(n_max=400, base=2.0, alpha=-2.5):
    return [0.0] + [n ** alpha * base ** n for n in range(1, n_max + 1)]


def test_detect_period_constructed():
    c = [1 if n % 3 == 0 else 0 for n in range(90)]
    assert A.detect_period(c) == (3, {0})
    shifted = [0, 0] + c[:-2]
    d, J = A.detect_period(shifted)
    assert d == 3 and J == {2}
    with pytest.raises(A.Inconclusive):
        A.detect_period(c[:20])


def test_detect_period_example_series(example2):
    s = solve_dde(example2, 120, XMode.numeric(0), backend="arb", prec=128)
    d, J = A.detect_period(s.t0_values())
    assert d >= 1 and J <= set(range(d))


def test_fit_exponent_synthetic():
    f = A.fit_exponent(synthetic(), 2.0)
    assert abs(f.exponent + 2.5) < 0.01
    assert f.period_d == 1


def test_fit_exponent_wrong_growth_rate():
    try:
        f = A.fit_exponent(synthetic(), 2.0 * 1.01)
    except A.Inconclusive:
        return
    assert abs(f.exponent + 2.5) > 0.5


def test_growth_rate_synthetic():
    assert abs(A.growth_rate(synthetic(), 1) - 2.0) < 1e-3


def test_clt_unperturbed_model():
    m = parse_model("order 2; shift x_plain; Q = 1 + z^2*u*y0^2 + z*y1; R = 0;")
    st = A.clt_from_z0(m)
    assert st.mu == 0 and st.sigma2 == 0


def test_point_masses(example2):
    s = solve_dde(example2, 6, "symbolic")
    m5 = A.empirical_moments(s, 5)
    assert m5["mean"] == 1 and m5["variance"] == 0
    m3 = A.empirical_moments(s, 3)
    assert m3["mean"] == 0 and m3["variance"] == 0


def test_jet_moments_match_exact_law(example2):
    n = 40
    exact = A.empirical_moments(solve_dde(example2, n, "symbolic"), n)
    jet = A.empirical_moments(solve_dde(example2, n, XMode.jet(1, 4)), n)
    for key in ("mean", "variance"):
        assert Fraction(jet[key]) == exact[key]
    assert abs(jet["skewness"] - exact["skewness"]) < 1e-12
    assert abs(jet["kurtosis"] - exact["kurtosis"]) < 1e-12


@pytest.mark.slow
def test_moment_trends(example2):
    ns = (50, 100, 150, 200)
    s = solve_dde(example2, max(ns), XMode.jet(1, 3))
    rows = A.moment_table(s, ns)
    ratios = [float(r["variance"]) / r["n"] for r in rows]
    skew = [abs(r["skewness"]) for r in rows]
    assert all(q > 0 for q in ratios)
    assert skew[-1] < skew[1] < skew[0]
    assert abs(ratios[-1] - ratios[-2]) < abs(ratios[1] - ratios[0])
    st = A.clt_from_z0(example2)
    # mean/n approaches mu at rate O(1/n)
    errs = [abs(float(r["mean"]) / r["n"] - float(st.mu)) * r["n"] for r in rows]
    assert max(errs) < 2 * min(errs) + 1
