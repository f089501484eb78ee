from fractions import Fraction

import pytest

from singpert.maps import enumerate_near_triangulations
from singpert.maps.equation import diamond_model
from singpert.model import parse_model
from singpert.series import TruncatedSeries, XMode, eval_rational_expr, discrete_delta, to_fraction
from singpert.solver import (ZeroDenominator, residual_order, solve_dde, solve_jacobi, x_distribution)


def terms(c):
    return {k: to_fraction(v) for k, v in c.terms().items()}


def test_first_coefficients(example2):
    s = solve_dde(example2, 5, "symbolic")
    assert [terms(c) for c in s.F.coeffs] == [
        {(0, 0): 1}, {}, {(1, 0): 1}, {(0, 0): 1}, {(2, 0): 2}, {(1, 0): 4, (0, 1): 2}]


def test_order_zero(example2):
    s = solve_dde(example2, 0, "symbolic")
    assert terms(s.F.coeffs[0]) == {(0, 0): 1}


def test_residual_order_and_tampering(example2):
    s = solve_dde(example2, 10, "symbolic")
    assert residual_order(s) >= 11
    bad = s.F.copy()
    bad.coeffs[7] = bad.coeffs[7] + s.ring.one()
    s.F = bad
    assert residual_order(s) <= 10


def test_fixed_point_check(example2):
    s = solve_dde(example2, 12, "symbolic")
    F = s.F
    b = {f"y{k}": discrete_delta(F, k) for k in range(3)}
    rhs = eval_rational_expr(example2.rhs(), b)
    top = max(n for n in range(13) if s.exact_ucap(n) >= 0)
    for n in range(top + 1):
        for (j, k), v in rhs.coeffs[n].terms().items():
            if j <= s.exact_ucap(n):
                assert v == F.coefficient(n, j, k)


def test_two_schedules_agree(example2):
    a = solve_dde(example2, 12, "symbolic")
    b = solve_jacobi(example2, 12, "symbolic")
    assert a.F == b.F


def test_distribution_examples(example2):
    s = solve_dde(example2, 8, "symbolic")
    assert x_distribution(s, 3) == [1]
    assert x_distribution(s, 5) == [0, 1]
    with pytest.raises(ZeroDenominator):
        x_distribution(s, 1)
    for n in range(3, 9):
        if s.F.coeffs[n].at_u0().is_zero():
            continue
        assert sum(x_distribution(s, n)) == 1


def test_critical_x_gives_unperturbed_solution(example2):
    s = solve_dde(example2, 15, XMode.numeric(0))
    unpert = parse_model("order 1; shift x_plain; Q = 1 + z^2*u*y0^2 + z*y1; R = 0;")
    s0 = solve_dde(unpert, 15, XMode.numeric(0), ucap=s.ring.ucap)
    for n in range(16):
        for j in range(s.exact_ucap(n) + 1):
            assert s.coefficient(n, j) == s0.F.coefficient(n, j)


@pytest.mark.parametrize("xv", [0, Fraction(1, 2), 1, 2])
def test_non_negative_coefficients(example2, xv):
    for m in (example2, diamond_model()):
        s = solve_dde(m, 14, XMode.numeric(xv))
        for n in range(15):
            for (j, _), v in s.F.coeffs[n].terms().items():
                if j <= s.exact_ucap(n):
                    assert v >= 0


def test_symbolic_x_degree_bounded(example2):
    s = solve_dde(example2, 12, "symbolic")
    for n, c in enumerate(s.F.coeffs):
        assert c.x_degree() <= n


def test_diamond_at_x1_matches_map_counts():
    I = 12
    m = diamond_model()
    N = I // 3
    s = solve_dde(m, N, XMode.numeric(1), ucap=m.k * N + I + 1)
    counts = enumerate_near_triangulations(I).counts()
    assert counts
    for (j, n), c in counts.items():
        assert s.coefficient(n, j) == c


def test_float_backend_matches_exact(example2):
    a = solve_dde(example2, 20, XMode.numeric(Fraction(1, 2)))
    b = solve_dde(example2, 20, XMode.numeric(Fraction(1, 2)), backend="arb", prec=128)
    ea, eb = a.t0_values(), b.t0_values()
    for x, y in zip(ea, eb):
        if x:
            assert abs(float(x) - float(y.mid().str(30, radius=False))) <= 1e-12 * abs(float(x))


def test_header_and_json(example2):
    s = solve_dde(example2, 4, "symbolic")
    doc = s.to_json()
    assert doc["header"]["N"] == 4 and doc["header"]["x_mode"] == "symbolic"
    assert isinstance(s.F, TruncatedSeries)
