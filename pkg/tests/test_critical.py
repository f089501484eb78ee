import random

import mpmath
import pytest

from singpert import critical as C
from singpert.maps.equation import diamond_model
from singpert.model import parse_model
from singpert.polysys import from_model


@pytest.fixture(scope="module")
def cp(example2):
    return C.solve_critical0(example2)


def test_critical0_example(cp):
    assert 0 < cp.z0 < 1 and cp.t00 > 1
    assert cp.residual <= 1e-12


def test_critical0_diamond_is_tutte_point():
    d = C.solve_critical0(diamond_model())
    assert d.residual <= 1e-12 and d.t00 > 1
    assert abs(d.z0 - mpmath.mpf(27) / 256) < mpmath.mpf(10) ** -40


def test_critical0_violation_does_not_converge():
    with pytest.raises(C.NoConvergence):
        C.solve_critical0(parse_model("order 2; shift x_plain; Q = 1 + z*y1 + z*u*y1; R = y2;"))


def test_rescaled_closed_form_point(example2):
    with mpmath.workprec(256):
        r = C.solve_rescaled(example2, mpmath.mpf(1) / 10, 0, 1.5)
        assert r.V == -1
        assert abs(r.N + 5) < 1e-60 and abs(r.t1 - 5) < 1e-60


def _fd_det(example2, z, t0, V, N, t1, h=mpmath.mpf(10) ** -30):
    cs = C.critical_system(example2)
    eqs = cs.rescaled
    base = {"z": z, "x": 0, "t0": t0, "V": V, "N": N, "t1": t1}
    J = mpmath.matrix(3, 3)
    for j, var in enumerate(("V", "N", "t1")):
        up, dn = dict(base), dict(base)
        up[var] += h
        dn[var] -= h
        for i, e in enumerate(eqs):
            J[i, j] = (e.evaluate(up) - e.evaluate(dn)) / (2 * h)
    return mpmath.det(J)


def test_rescaled_determinant_by_finite_differences(example2):
    rng = random.Random(3)
    with mpmath.workprec(256):
        for _ in range(5):
            z, t0 = mpmath.mpf(rng.uniform(0.05, 0.95)), mpmath.mpf(rng.uniform(1.1, 2.9))
            r = C.solve_rescaled(example2, z, 0, t0)
            fd = _fd_det(example2, z, t0, r.V, r.N, r.t1)
            assert abs(r.jacobian_det - fd) <= 1e-40 * max(1, abs(fd))


def test_rescaled_small_x(example2):
    r0 = C.solve_rescaled(example2, 0.1, 0, 1.5)
    r = C.solve_rescaled(example2, 0.1, 1e-3, 1.5)
    assert r.residual <= 1e-12
    for a, b in ((r.V, r0.V), (r.N, r0.N), (r.t1, r0.t1)):
        assert abs(a - b) <= 100 * 1e-3 * max(1, abs(b))


def test_reduced_system_derivative_consistency(example2):
    z, u, T, t0, x = 0.2, 0.3, 1.4, 1.3, 0.01
    h = mpmath.mpf(10) ** -20
    with mpmath.workprec(256):
        R0 = C.reduced_system_residual(example2, z, u, T, t0, x)
        R1 = C.reduced_system_residual(example2, z, u, mpmath.mpf(T) + h, t0, x)
        R2 = C.reduced_system_residual(example2, z, u + h, T, t0, x)
        assert abs((R1[0] - R0[0]) / h - R0[2]) < 1e-15
        assert abs((R2[0] - R0[0]) / h - R0[1]) < 1e-15


def test_continuation_smooth(example2, cp):
    xs = [0.1 * i / 20 for i in range(21)]
    pts = C.continue_z0(example2, xs)
    z = [p.z0 for p in pts]
    assert abs(z[0] - cp.z0) < 1e-10
    assert all(a > b for a, b in zip(z, z[1:]))
    assert all(p.residual <= 1e-12 for p in pts)
    C_fit = max(abs(p.z0 - cp.z0) / p.x for p in pts[1:])
    assert C_fit < 1


def test_continuation_degenerate_path(example2, cp):
    (p,) = C.continue_z0(example2, [0])
    assert abs(p.z0 - cp.z0) < 1e-30


def test_path_must_start_at_critical_x(example2):
    with pytest.raises(ValueError):
        C.continue_z0(example2, [0.1])


def test_small_branch_laws(example2, cp):
    for xv in (1e-4, 1e-3):
        (r,) = C.branches_at(example2, cp.z0 / 2, [xv])
        pred = C.small_branch_prediction(example2, cp.z0 / 2, xv)
        assert 0.9 <= r["u2"] / pred <= 1.1
        (s,) = C.branches_at(example2, xv / 2, [xv])
        assert abs(s["u1"] * s["u2"] + s["z"] * s["x"]) / abs(s["z"] * s["x"]) <= 0.2


def test_z0_derivatives_richardson(example2):
    d = C.z0_derivatives(example2, h=1e-3)
    assert abs(d["z0p"]) > 1e-6
    assert 3.5 < d["fd_error_ratio"] < 4.5


def test_general_k_substitution_identity():
    m = parse_model("order 3; shift x_plain; Q = 1 + z^2*u*y0^2 + z*y1; R = y3;")
    P = from_model(m).poly
    eqs = C.general_k_substitution(P, 3)
    rng = random.Random(7)
    with mpmath.workprec(256):
        vals = {n: mpmath.mpf(rng.uniform(0.2, 0.9)) for n in ("z", "t0", "t1", "t2", "V", "N", "X")}
        X, V = vals["X"], vals["V"]
        T = vals["t0"] + X * V * vals["t1"] + X ** 2 * V ** 2 * vals["t2"] + X ** 3 * vals["N"]
        direct = P.evaluate({"z": vals["z"], "u": X * V, "T": T, "t0": vals["t0"], "t1": vals["t1"],
                             "t2": vals["t2"], "x": X ** 2})
        a = mpmath.log(direct / eqs[0].evaluate(vals)) / mpmath.log(X)
        assert abs(a - mpmath.nint(a)) < 1e-20


def test_general_k_two_matches_closed_form(example2):
    P = from_model(example2).poly
    eqs = C.general_k_substitution(P, 2)
    with mpmath.workprec(256):
        z, t0 = mpmath.mpf(3) / 10, mpmath.mpf(17) / 10
        vals = {"z": z, "t0": t0, "t1": (t0 - 1) / z, "V": -1, "N": (1 - t0) / z, "X": 0}
        for e in eqs:
            assert abs(e.evaluate(vals)) < 1e-60
