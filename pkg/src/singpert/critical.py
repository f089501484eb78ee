"""Critical systems of perturbed catalytic equations.

Notation: ``P(z,u,T,t0,...,x)`` is the polynomialized equation
(:func:`singpert.polysys.from_model`), ``xi = x - x_c`` the distance to the
critical value where the perturbation vanishes, and ``P1`` the polynomial of
the unperturbed first-order equation (``u (Q - T)`` cleared of denominators).

* :func:`solve_critical0` solves ``P1 = P1_u = P1_T = 0`` together with the
  discriminant ``P1_uu P1_TT - P1_uT^2 = 0``.
* :func:`solve_rescaled` solves the second-branch equations after the
  substitution ``u = xi V``, ``T = t0 + xi N`` (order 2).
* :func:`continue_z0` follows the singularity ``z0(x)`` by Newton continuation
  of the combined system (first branch + discriminant + rescaled second branch).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np
import sympy as sp
from scipy import optimize

from .model import DdeModel, Num
from .polysys import MultiPoly, _order, from_model

__all__ = [
    "NoConvergence", "MultipleRoots", "SingularJacobian", "StepCollapse", "DerivativeMismatch",
    "CriticalPoint0", "RescaledSolution", "PerturbedCritical", "CriticalSystem",
    "critical_system", "solve_critical0", "solve_rescaled", "reduced_system_residual",
    "first_order_residual", "reduced_to_first_order", "continue_z0", "z0_derivatives",
    "branches_at", "general_k_substitution", "GENERAL_K",
]

#: enables the order-k substitution machinery for k >= 3 (only property-tested)
GENERAL_K = False

DEFAULT_PREC = 256


def _mpf(v):
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


class NoConvergence(ArithmeticError):
    def __init__(self, message, best=None, residual=None, seeds=None):
        super().__init__(message)
        self.best, self.residual, self.seeds = best, residual, seeds


class MultipleRoots(UserWarning):
    pass


class SingularJacobian(ArithmeticError):
    def __init__(self, message, z=None, t0=None):
        super().__init__(message)
        self.z, self.t0 = z, t0


class StepCollapse(ArithmeticError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class DerivativeMismatch(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# compiled polynomials
# ---------------------------------------------------------------------------

class _Compiled:
    """Polynomial evaluator over a fixed variable list (mpmath and numpy)."""

    def __init__(self, poly: MultiPoly, variables: Sequence[str]):
        self.variables = tuple(variables)
        missing = set(poly.variables()) - set(variables)
        if missing:
            raise ValueError(f"unbound variables {sorted(missing)}")
        p = poly.lift(_order(poly.names + tuple(variables)))
        idx = [p.names.index(v) for v in self.variables]
        self.terms = []
        for mon, c in zip(p.p.monoms(), p.p.coeffs()):
            self.terms.append((Fraction(int(c.p), int(c.q)), tuple(int(mon[i]) for i in idx)))
        self.exps = np.array([e for _, e in self.terms], dtype=float).reshape(len(self.terms), len(self.variables))
        self.fcoef = np.array([float(c) for c, _ in self.terms])
        self._mpc = None

    def mp(self, values: Sequence) -> mpmath.mpf:
        if self._mpc is None or self._mpc[0] != mpmath.mp.prec:
            self._mpc = (mpmath.mp.prec, [mpmath.mpf(c.numerator) / c.denominator for c, _ in self.terms])
        coefs = self._mpc[1]
        cache = {}
        total = mpmath.mpf(0)
        for c, (_, e) in zip(coefs, self.terms):
            t = c
            for i, k in enumerate(e):
                if k:
                    key = (i, k)
                    pw = cache.get(key)
                    if pw is None:
                        pw = values[i] ** k
                        cache[key] = pw
                    t = t * pw
            total += t
        return total

    def jet(self, values: Sequence, order: int) -> list:
        """Evaluate on truncated power series (lists of mp numbers) in one auxiliary variable."""
        out = [mpmath.mpf(0)] * (order + 1)
        cache = {}

        def mul(a, b):
            r = [mpmath.mpf(0)] * (order + 1)
            for i, ai in enumerate(a):
                if ai == 0:
                    continue
                for j in range(order + 1 - i):
                    r[i + j] += ai * b[j]
            return r

        for c, e in self.terms:
            t = [mpmath.mpf(c.numerator) / c.denominator] + [mpmath.mpf(0)] * order
            for i, k in enumerate(e):
                if k:
                    key = (i, k)
                    if key not in cache:
                        pw = [mpmath.mpf(1)] + [mpmath.mpf(0)] * order
                        for _ in range(k):
                            pw = mul(pw, values[i])
                        cache[key] = pw
                    t = mul(t, cache[key])
            out = [a + b for a, b in zip(out, t)]
        return out

    def f(self, values) -> float:
        v = np.asarray(values, dtype=float)
        with np.errstate(all="ignore"):
            return float(np.dot(self.fcoef, np.prod(v[None, :] ** self.exps, axis=1)))

    def scale(self, values) -> mpmath.mpf:
        """Largest absolute term, used for relative residuals."""
        best = mpmath.mpf(0)
        for c, e in self.terms:
            t = abs(mpmath.mpf(c.numerator) / c.denominator)
            for vi, k in zip(values, e):
                if k:
                    t *= abs(vi) ** k
            best = max(best, t)
        return best


class _System:
    """Square polynomial system with symbolic Jacobian."""

    def __init__(self, eqs: Sequence[MultiPoly], unknowns: Sequence[str], params: Sequence[str] = ()):
        self.unknowns = tuple(unknowns)
        self.params = tuple(params)
        allv = self.unknowns + self.params
        self.eqs = [_Compiled(e, allv) for e in eqs]
        self.jac = [[_Compiled(e.derivative(w), allv) for w in self.unknowns] for e in eqs]
        self.dparam = [[_Compiled(e.derivative(p), allv) for p in self.params] for e in eqs]
        self.polys = list(eqs)

    def F(self, w, p=()):
        vals = list(w) + list(p)
        return mpmath.matrix([e.mp(vals) for e in self.eqs])

    def J(self, w, p=()):
        vals = list(w) + list(p)
        return mpmath.matrix([[d.mp(vals) for d in row] for row in self.jac])

    def Ff(self, w, p=()):
        vals = list(w) + list(p)
        return np.array([e.f(vals) for e in self.eqs])

    def Jf(self, w, p=()):
        vals = list(w) + list(p)
        return np.array([[d.f(vals) for d in row] for row in self.jac])

    def rel_residual(self, w, p=()):
        vals = list(w) + list(p)
        worst = mpmath.mpf(0)
        for e in self.eqs:
            r = abs(e.mp(vals))
            s = e.scale(vals)
            worst = max(worst, r / s if s else r)
        return worst

    def newton(self, w0, p=(), tol=None, maxit=80):
        """Damped Newton at the current mpmath precision; returns (w, relative residual)."""
        tol = tol if tol is not None else mpmath.mpf(2) ** (-(mpmath.mp.prec - 24))
        w = mpmath.matrix([mpmath.mpf(v) for v in w0])
        F = self.F(w, p)
        nF = mpmath.norm(F)
        for _ in range(maxit):
            J = self.J(w, p)
            try:
                step = mpmath.lu_solve(J, F)
            except ZeroDivisionError:
                raise SingularJacobian("singular Jacobian in Newton iteration")
            lam = mpmath.mpf(1)
            while True:
                wn = w - lam * step
                Fn = self.F(wn, p)
                nFn = mpmath.norm(Fn)
                if nFn <= nF or lam < mpmath.mpf(2) ** -20:
                    break
                lam /= 2
            w, F, nF = wn, Fn, nFn
            if mpmath.norm(lam * step) <= tol * (1 + mpmath.norm(w)):
                break
        return [w[i] for i in range(len(self.unknowns))], self.rel_residual(w, p)


# ---------------------------------------------------------------------------
# per-model preparation
# ---------------------------------------------------------------------------

def _strip_var(p: MultiPoly, var: str) -> tuple[MultiPoly, int]:
    v = MultiPoly.var(var, p.names)
    a = 0
    while True:
        q, r = divmod(p, v)
        if not r.is_zero():
            return p, a
        p, a = q, a + 1


def _disc(p: MultiPoly) -> MultiPoly:
    return p.derivative("u").derivative("u") * p.derivative("T").derivative("T") - p.derivative("u").derivative("T") ** 2


def _x_valuation(p: MultiPoly) -> int:
    if "x" not in p.names or p.is_zero():
        return 0
    i = p.names.index("x")
    return min(int(m[i]) for m in p.p.monoms())


@dataclass
class CriticalSystem:
    model: DdeModel
    P: MultiPoly           # in terms of xi (variable named x)
    P1: MultiPoly
    W: MultiPoly           # P at xi = 0 equals W * P1
    rescaled: list[MultiPoly]
    rescaled_x0: dict = field(default_factory=dict)

    @property
    def xc(self) -> Fraction:
        return self.model.critical_x


@lru_cache(maxsize=None)
def _critical_system_cached(text: str, shift: str, k: int) -> CriticalSystem:
    from .model import parse_model
    m = parse_model(text)
    P = from_model(m).poly
    xc = m.critical_x
    xi = MultiPoly.var("x", P.names)
    P = P.subs({"x": xi + xc}) if xc != 0 else P
    m1 = DdeModel(1, m.Q, Num(Fraction(0)), m.shift)
    P1, _ = _strip_var(from_model(m1).poly, "u")
    P1 = P1.primitive()
    P0 = P.subs({"x": 0})
    W, r = divmod(P0, P1)
    if not r.is_zero():
        raise ArithmeticError("polynomial at the critical x is not a multiple of the first-order kernel")
    rescaled = []
    if k == 2:
        names = tuple(sorted(set(P.names) | {"V", "N"}))
        V = MultiPoly.var("V", names)
        N = MultiPoly.var("N", names)
        X = MultiPoly.var("x", names)
        t0 = MultiPoly.var("t0", names)
        for q in (P, P.derivative("u"), P.derivative("T")):
            s = q.subs({"u": X * V, "T": t0 + X * N})
            a = _x_valuation(s)
            s = s.exact_div(X ** a) if a else s
            rescaled.append(s)
    cs = CriticalSystem(m, P, P1, W, rescaled)
    if rescaled:
        cs.rescaled_x0 = _rescaled_closed_form(rescaled)
    return cs


def critical_system(m: DdeModel) -> CriticalSystem:
    if m.k != 2 and not GENERAL_K:
        raise NotImplementedError("critical systems are implemented for order 2 (set GENERAL_K for the k >= 3 machinery)")
    return _critical_system_cached(m.to_text(), m.shift, m.k)


def _to_sympy(p: MultiPoly, syms: dict) -> sp.Expr:
    expr = sp.Integer(0)
    for mon, c in p.terms().items():
        t = sp.Rational(c.numerator, c.denominator)
        for n, e in zip(p.names, mon):
            if e:
                t *= syms[n] ** int(e)
        expr += t
    return expr


def _rescaled_closed_form(rescaled: list[MultiPoly]) -> dict:
    """Solve the rescaled system at xi = 0 for (V, N, t1) symbolically."""
    syms = {n: sp.Symbol(n) for n in ("V", "N", "t0", "t1", "z", "x")}
    eqs = [sp.expand(_to_sympy(e, syms).subs(syms["x"], 0)) for e in rescaled]
    sols = sp.solve(eqs, [syms["V"], syms["N"], syms["t1"]], dict=True)
    good = [s for s in sols if s.get(syms["V"], 0) != 0 and all(k in s for k in (syms["V"], syms["N"], syms["t1"]))]
    if not good:
        return {}
    s = good[0]
    return {
        "exprs": {k: sp.simplify(s[syms[k]]) for k in ("V", "N", "t1")},
        "funcs": {k: sp.lambdify((syms["z"], syms["t0"]), sp.simplify(s[syms[k]]), "mpmath") for k in ("V", "N", "t1")},
    }


# ---------------------------------------------------------------------------
# unperturbed critical point
# ---------------------------------------------------------------------------

@dataclass
class CriticalPoint0:
    z0: mpmath.mpf
    u0: mpmath.mpf
    T0: mpmath.mpf
    t00: mpmath.mpf
    residuals: list
    others: list = field(default_factory=list)
    flagged: bool = False

    @property
    def residual(self):
        return max(self.residuals)

    def as_dict(self):
        return {"z0": mpmath.nstr(self.z0, 30), "u0": mpmath.nstr(self.u0, 30), "T0": mpmath.nstr(self.T0, 30),
                "t00": mpmath.nstr(self.t00, 30), "residual": mpmath.nstr(self.residual, 5),
                "other_roots": len(self.others)}


def _system0(cs: CriticalSystem) -> _System:
    P1 = cs.P1
    return _System([P1, P1.derivative("u"), P1.derivative("T"), _disc(P1)], ("z", "u", "T", "t0"))


def solve_critical0(m: DdeModel, prec: int = DEFAULT_PREC, grid: int = 6, tmax: float | None = None,
                    tol: float = 1e-12) -> CriticalPoint0:
    """Dominant singularity of the unperturbed equation.

    A coarse grid over ``(0,1] x (0,1] x [1,B] x [1,B]`` seeds a double
    precision solver; converged roots are polished by Newton at ``prec`` bits.
    The root with the smallest ``z0 > 0`` and ``t00 > 1`` is returned, other
    admissible roots are listed in ``others``.
    """
    cs = critical_system(m) if m.k == 2 else _critical_system_cached(m.to_text(), m.shift, m.k)
    sysm = _system0(cs)
    B = tmax or 4.0
    zs = np.linspace(0.02, 1.0, grid)
    us = np.linspace(0.02, 1.0, grid)
    ts = np.linspace(1.0, B, grid)
    found = []
    seeds = 0
    for z in zs:
        for u in us:
            for T in ts:
                for t0 in ts:
                    seeds += 1
                    try:
                        sol = optimize.root(sysm.Ff, [z, u, T, t0], jac=sysm.Jf, method="hybr", options={"xtol": 1e-13})
                    except (ValueError, FloatingPointError, OverflowError):
                        continue
                    w = sol.x
                    if not sol.success or not np.all(np.isfinite(w)):
                        continue
                    if np.max(np.abs(sysm.Ff(w))) > 1e-8:
                        continue
                    if w[0] <= 1e-9 or w[3] <= 1 + 1e-9:
                        continue
                    if any(np.allclose(w, f, rtol=1e-7, atol=1e-9) for f in found):
                        continue
                    found.append(w)
    if not found:
        raise NoConvergence("no admissible root of the critical system", seeds=seeds)
    polished = []
    with mpmath.workprec(prec):
        for w in found:
            try:
                wp, res = sysm.newton(list(w))
            except SingularJacobian:
                continue
            if res <= tol and wp[0] > 0 and wp[3] > 1:
                if not any(abs(wp[0] - q[0][0]) < mpmath.mpf(10) ** -30 * (1 + abs(wp[0])) and
                           abs(wp[1] - q[0][1]) < mpmath.mpf(10) ** -20 for q in polished):
                    polished.append((wp, res))
        if not polished:
            raise NoConvergence("Newton refinement failed for every seed", best=found[0], seeds=seeds)
        polished.sort(key=lambda q: q[0][0])
        (z0, u0, T0, t00), _ = polished[0]
        vals = [z0, u0, T0, t00]
        residuals = [abs(e.mp(vals)) / (e.scale(vals) or 1) for e in sysm.eqs]
        cp = CriticalPoint0(+z0, +u0, +T0, +t00, residuals, [q[0] for q in polished[1:]], len(polished) > 1)
    return cp


def first_order_residual(m: DdeModel, z, u, T, t0) -> list:
    """Residuals of ``P1, P1_u, P1_T``."""
    cs = critical_system(m)
    vals = {"z": z, "u": u, "T": T, "t0": t0}
    return [p.evaluate(vals) for p in (cs.P1, cs.P1.derivative("u"), cs.P1.derivative("T"))]


# ---------------------------------------------------------------------------
# rescaled second-branch system
# ---------------------------------------------------------------------------

@dataclass
class RescaledSolution:
    x: object
    z: object
    t0: object
    V: object
    N: object
    t1: object
    jacobian_det: object
    residual: object = 0

    @property
    def u2(self):
        return self.x * self.V

    @property
    def T2(self):
        return self.t0 + self.x * self.N


def _rescaled_system(cs: CriticalSystem) -> _System:
    return _System(cs.rescaled, ("V", "N", "t1"), ("z", "x", "t0"))


def solve_rescaled(m: DdeModel, z, x, t0, prec: int = DEFAULT_PREC, tol: float = 1e-12) -> RescaledSolution:
    """Solve the rescaled second-branch equations for ``(V, N, t1)``.

    ``x`` is the model's marking variable; the substitution uses ``xi = x - x_c``.
    At ``xi = 0`` the closed forms are returned without iteration.
    """
    cs = critical_system(m)
    if not cs.rescaled_x0:
        raise NoConvergence("no closed form for the rescaled system at the critical x")
    sysr = _rescaled_system(cs)
    with mpmath.workprec(prec):
        z, x, t0 = _mpf(z), _mpf(x), _mpf(t0)
        xi = x - mpmath.mpf(cs.xc.numerator) / cs.xc.denominator
        if z == 0:
            raise SingularJacobian("z must be non-zero", z=z, t0=t0)
        f = cs.rescaled_x0["funcs"]
        w0 = [f["V"](z, t0), f["N"](z, t0), f["t1"](z, t0)]
        params = (z, xi, t0)
        if xi == 0:
            w, res = w0, sysr.rel_residual(w0, params)
        else:
            w, res = sysr.newton(w0, params)
            if res > tol:
                raise NoConvergence(f"rescaled system did not converge (residual {mpmath.nstr(res, 3)})")
        det = mpmath.det(sysr.J(w, params))
        if abs(det) < mpmath.mpf(2) ** (-prec // 2):
            raise SingularJacobian("Jacobian of the rescaled system is singular", z=z, t0=t0)
        return RescaledSolution(x, z, t0, w[0], w[1], w[2], det, res)


def reduced_system_residual(m: DdeModel, z, u, T, t0, x, prec: int = DEFAULT_PREC) -> list:
    """``(R, R_u, R_T)`` with ``R(z,u,T,t0,x) = P(z,u,T,t0, t1bar(z,x,t0), x)``."""
    cs = critical_system(m)
    with mpmath.workprec(prec):
        rs = solve_rescaled(m, z, x, t0, prec)
        xi = _mpf(x) - _mpf(cs.xc)
        vals = {"z": _mpf(z), "u": _mpf(u), "T": _mpf(T), "t0": _mpf(t0),
                "t1": rs.t1, "x": xi}
        P = cs.P
        return [P.evaluate(vals), P.derivative("u").evaluate(vals), P.derivative("T").evaluate(vals)]


def reduced_to_first_order(m: DdeModel, residual, z, u, T, t0) -> list:
    """Map ``(R, R_u, R_T)`` at the critical x to ``(P1, P1_u, P1_T)`` through ``P = W P1``."""
    cs = critical_system(m)
    vals = {"z": z, "u": u, "T": T, "t0": t0}
    W = cs.W.evaluate(vals)
    Wu = cs.W.derivative("u").evaluate(vals)
    WT = cs.W.derivative("T").evaluate(vals)
    R, Ru, RT = residual
    p1 = R / W
    return [p1, (Ru - Wu * p1) / W, (RT - WT * p1) / W]


# ---------------------------------------------------------------------------
# perturbed critical points and continuation
# ---------------------------------------------------------------------------

_COMBINED = ("z", "u", "T", "t0", "t1", "V", "N")


@dataclass
class PerturbedCritical:
    x: object
    z0: object
    u1: object
    T1: object
    t0: object
    t1: object
    V: object
    N: object
    xi: object
    detJ: object = None
    residual: object = None

    @property
    def u2(self):
        return self.xi * self.V

    @property
    def T2(self):
        return self.t0 + self.xi * self.N

    def vector(self):
        return [self.z0, self.u1, self.T1, self.t0, self.t1, self.V, self.N]

    def as_row(self):
        return {k: mpmath.nstr(v, 20) for k, v in (
            ("x", self.x), ("z0", self.z0), ("u1", self.u1), ("u2", self.u2), ("t0", self.t0),
            ("t1", self.t1), ("detJ", self.detJ), ("residual", self.residual))}


def _combined_system(cs: CriticalSystem) -> _System:
    P = cs.P
    eqs = [P, P.derivative("u"), P.derivative("T"), _disc(P)] + list(cs.rescaled)
    return _System(eqs, _COMBINED, ("x",))


@lru_cache(maxsize=None)
def _combined_cached(text, shift, k):
    return _combined_system(_critical_system_cached(text, shift, k))


def _combined(m: DdeModel) -> _System:
    critical_system(m)
    return _combined_cached(m.to_text(), m.shift, m.k)


def _start_point(m: DdeModel, prec: int) -> list:
    cs = critical_system(m)
    cp = solve_critical0(m, prec)
    f = cs.rescaled_x0["funcs"]
    with mpmath.workprec(prec):
        return [cp.z0, cp.u0, cp.T0, cp.t00, f["t1"](cp.z0, cp.t00), f["V"](cp.z0, cp.t00), f["N"](cp.z0, cp.t00)]


def _make_point(m, sysc, w, xi, prec) -> PerturbedCritical:
    cs = critical_system(m)
    x = xi + mpmath.mpf(cs.xc.numerator) / cs.xc.denominator
    rs = _rescaled_system(cs)
    det = mpmath.det(rs.J([w[5], w[6], w[4]], (w[0], xi, w[3])))
    res = sysc.rel_residual(w, (xi,))
    return PerturbedCritical(x, w[0], w[1], w[2], w[3], w[4], w[5], w[6], xi, det, res)


def continue_z0(m: DdeModel, x_path: Sequence, prec: int = DEFAULT_PREC, tol: float = 1e-12,
                min_step: float = 1e-12, start: Sequence | None = None) -> list[PerturbedCritical]:
    """Follow the singularity from the critical x along ``x_path`` (first entry must be the critical x)."""
    cs = critical_system(m)
    sysc = _combined(m)
    with mpmath.workprec(prec):
        xc = mpmath.mpf(cs.xc.numerator) / cs.xc.denominator
        path = [mpmath.mpf(v) for v in x_path]
        if not path or abs(path[0] - xc) > mpmath.mpf(10) ** -30:
            raise ValueError("the path must start at the critical x")
        w = list(start) if start is not None else _start_point(m, prec)
        w, res = sysc.newton(w, (mpmath.mpf(0),))
        out = [_make_point(m, sysc, w, mpmath.mpf(0), prec)]
        cur_xi = mpmath.mpf(0)
        dw = None
        for target in path[1:]:
            txi = target - xc
            while cur_xi != txi:
                step = txi - cur_xi
                while True:
                    seed = [a + step * b for a, b in zip(w, dw)] if dw is not None else w
                    try:
                        wn, res = sysc.newton(seed, (cur_xi + step,))
                        ok = res <= tol and abs(wn[0] - w[0]) <= 0.25 * abs(w[0]) + 10 * abs(step)
                    except SingularJacobian:
                        ok = False
                    if ok:
                        break
                    step /= 2
                    if abs(step) < min_step:
                        raise StepCollapse(f"step collapsed near x = {mpmath.nstr(cur_xi + xc, 10)}", path=out)
                dw = [(a - b) / step for a, b in zip(wn, w)]
                w = wn
                cur_xi = cur_xi + step
            out.append(_make_point(m, sysc, w, cur_xi, prec))
        return out


def _implicit_derivatives(sysc: _System, w, xi) -> tuple[list, list]:
    """First and second derivatives of the solution curve with respect to ``xi``."""
    n = len(w)
    J = sysc.J(w, (xi,))
    Fx = mpmath.matrix([row[0].mp(list(w) + [xi]) for row in sysc.dparam])
    d1 = mpmath.lu_solve(J, -Fx)
    d1 = [d1[i] for i in range(n)]
    # second derivative: g(s) = F(w + s d1 + s^2 d2/2, xi + s) = 0 up to s^2
    vals = [[w[i], d1[i], mpmath.mpf(0)] for i in range(n)] + [[xi, mpmath.mpf(1), mpmath.mpf(0)]]
    g2 = mpmath.matrix([2 * e.jet(vals, 2)[2] for e in sysc.eqs])
    d2 = mpmath.lu_solve(J, -g2)
    return d1, [d2[i] for i in range(n)]


def z0_derivatives(m: DdeModel, at_x=None, h=1e-3, prec: int = DEFAULT_PREC, rtol: float = 1e-6,
                   path_steps: int = 20) -> dict:
    """``z0``, ``z0'``, ``z0''`` at ``at_x`` by implicit differentiation and by central differences.

    Central differences with step ``h`` (error ``O(h^2)``) are compared with
    the implicit derivatives; the ``h/2`` differences and their Richardson
    combination are reported as well.
    """
    cs = critical_system(m)
    at_x = m.combinatorial_x if at_x is None else at_x
    sysc = _combined(m)
    with mpmath.workprec(prec):
        xc = mpmath.mpf(cs.xc.numerator) / cs.xc.denominator
        ax = mpmath.mpf(at_x.numerator) / at_x.denominator if isinstance(at_x, Fraction) else mpmath.mpf(at_x)
        h = mpmath.mpf(h)
        if ax == xc:
            path = [xc]
        else:
            path = [xc + (ax - xc) * i / path_steps for i in range(path_steps + 1)]
        curve = continue_z0(m, path, prec)
        base = curve[-1]
        w = base.vector()
        xi = ax - xc
        d1, d2 = _implicit_derivatives(sysc, w, xi)
        z0, zp, zpp = w[0], d1[0], d2[0]
        fd = {}
        for hh in (h, h / 2):
            vals = {}
            for sgn in (-1, 1):
                wn, res = sysc.newton([a + sgn * hh * b for a, b in zip(w, d1)], (xi + sgn * hh,))
                vals[sgn] = wn[0]
            fd[hh] = ((vals[1] - vals[-1]) / (2 * hh), (vals[1] - 2 * z0 + vals[-1]) / hh ** 2)
        (p1, s1), (p2, s2) = fd[h], fd[h / 2]
        rich1 = (4 * p2 - p1) / 3
        rich2 = (4 * s2 - s1) / 3
        err1 = abs(p1 - zp) / abs(zp) if zp else abs(p1)
        err2 = abs(s1 - zpp) / abs(zpp) if zpp else abs(s1)
        ratio = abs(p1 - zp) / abs(p2 - zp) if abs(p2 - zp) > 0 else mpmath.inf
        out = {
            "x": ax, "z0": z0, "z0p": zp, "z0pp": zpp,
            "fd_z0p": p1, "fd_z0pp": s1, "fd_half_z0p": p2, "fd_half_z0pp": s2,
            "richardson_z0p": rich1, "richardson_z0pp": rich2,
            "rel_err_z0p": err1, "rel_err_z0pp": err2, "fd_error_ratio": ratio,
            "point": base,
        }
        if err1 > rtol or err2 > rtol:
            raise DerivativeMismatch(
                f"finite differences and implicit derivatives disagree: {mpmath.nstr(err1, 3)}, {mpmath.nstr(err2, 3)}")
        return out


# ---------------------------------------------------------------------------
# branches at a fixed z
# ---------------------------------------------------------------------------

def branches_at(m: DdeModel, z, x_values: Sequence, prec: int = DEFAULT_PREC, series_order: int = 40) -> list[dict]:
    """``u1, u2 = xi V, t0, t1`` at fixed ``z`` for each ``x`` (below the singularity).

    Starts from the unperturbed branch (series values polished by Newton on
    ``P1 = P1_u = P1_T = 0``) and continues in ``x``.
    """
    from .polysys import unperturbed_branch

    cs = critical_system(m)
    br = unperturbed_branch(m, series_order)
    with mpmath.workprec(prec):
        z = mpmath.mpf(z)

        def ev(s):
            acc = mpmath.mpf(0)
            for c in reversed(s.coeffs):
                v = c.constant()
                acc = acc * z + mpmath.mpf(int(v.p)) / int(v.q)
            return acc

        seed = [ev(br["u"]), ev(br["T"]), ev(br["t0"])]
        s0 = _System([cs.P1, cs.P1.derivative("u"), cs.P1.derivative("T")], ("u", "T", "t0"), ("z",))
        (u, T, t0), res = s0.newton(seed, (z,))
        f = cs.rescaled_x0["funcs"]
        w = [u, T, t0, f["t1"](z, t0), f["V"](z, t0), f["N"](z, t0)]
        sysb = _System([cs.P, cs.P.derivative("u"), cs.P.derivative("T")] + list(cs.rescaled),
                       ("u", "T", "t0", "t1", "V", "N"), ("z", "x"))
        xc = mpmath.mpf(cs.xc.numerator) / cs.xc.denominator
        out = []
        cur = mpmath.mpf(0)
        for xv in x_values:
            txi = mpmath.mpf(xv) - xc
            steps = 8
            for i in range(1, steps + 1):
                xi = cur + (txi - cur) * i / steps
                w, res = sysb.newton(w, (z, xi))
            cur = txi
            out.append({"x": mpmath.mpf(xv), "xi": txi, "z": z, "u1": w[0], "T1": w[1], "t0": w[2], "t1": w[3],
                        "V": w[4], "N": w[5], "u2": txi * w[4], "T2": w[2] + txi * w[5], "residual": res})
        return out


def small_branch_prediction(m: DdeModel, z, xi, t0=1, t1=0):
    """First-order law ``u2 ~ -xi z R_{y_k} / Q_{y_1}`` (``z`` included in ``Q`` here)."""
    from .model import to_sympy
    Q = to_sympy(m.Q)
    R = to_sympy(m.R)
    syms = {n: sp.Symbol(n) for n in ("z", "u", "y0", "y1", f"y{m.k}", "x")}
    num = sp.diff(R, syms[f"y{m.k}"]) * syms["z"]
    den = sp.diff(Q, syms["y1"])
    val = (num / den).subs({syms["u"]: 0, syms["y0"]: t0, syms["y1"]: t1, syms["z"]: z,
                            syms["x"]: m.critical_x})
    return -xi * float(val)


# ---------------------------------------------------------------------------
# general order k
# ---------------------------------------------------------------------------

def general_k_substitution(P: MultiPoly, k: int, xc=0) -> list[MultiPoly]:
    """Rescaled branch equations for order ``k`` with ``X = xi^(1/(k-1))``.

    Substitutes ``x = xc + X^(k-1)``, ``u = X V`` and
    ``T = t0 + X V t1 + ... + X^(k-1) V^(k-1) t_{k-1} + X^k N`` into ``P, P_u, P_T``
    and removes the largest power of ``X``.  Only the principal branch of
    ``X`` is meaningful for real ``xi > 0``.
    """
    if k < 2:
        raise ValueError("order must be at least 2")
    names = tuple(sorted(set(P.names) | {"X", "V", "N"}))
    X = MultiPoly.var("X", names)
    V = MultiPoly.var("V", names)
    N = MultiPoly.var("N", names)
    T = MultiPoly.var("t0", names)
    for i in range(1, k):
        T = T + X ** i * V ** i * MultiPoly.var(f"t{i}", names)
    T = T + X ** k * N
    out = []
    for q in (P, P.derivative("u"), P.derivative("T")):
        s = q.subs({"x": X ** (k - 1) + xc, "u": X * V, "T": T})
        i = s.names.index("X")
        a = min(int(mm[i]) for mm in s.p.monoms()) if not s.is_zero() else 0
        out.append(s.exact_div(X ** a) if a else s)
    return out
