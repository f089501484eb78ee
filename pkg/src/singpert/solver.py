"""Power-series solution of a perturbed catalytic equation.

The right-hand side is compiled into a DAG of nodes that produce their
``z``-coefficients on demand.  Because every occurrence of the unknown carries
at least one factor ``z``, the coefficient of ``z**n`` of the right-hand side
only needs coefficients ``< n`` of the solution: one pass over ``n`` solves the
equation, and the unknown's node raises if asked for a coefficient that is not
known yet.

Truncation in ``u``.  The discrete derivative ``Δ^j`` discards the ``j``
lowest coefficients and shifts, so the top ``j`` coefficients of the result
are unknown once the input has been cut.  Along one ``z``-step the operator
of highest order costs ``k`` degrees (``1`` when the perturbation is switched
off), hence the ``z**n`` coefficient is kept and exact up to ``u``-degree
``ucap - k*n``.  The default ``ucap = k*N + k`` leaves ``t_0, ..., t_k``
exact at every order up to ``N``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .model import Add, DdeModel, Div, Mul, Neg, Num, Pow, RationalExpr, Sub, Var
from .series import (CoeffPoly, NonInvertibleSeries, Ring, TruncatedSeries, XMode,
                     discrete_delta, eval_rational_expr, series_to_json, to_fraction)

__all__ = [
    "NotWellFounded", "ZeroDenominator", "SeriesSolution",
    "solve_dde", "solve_jacobi", "residual_order", "x_distribution",
    "factorial_moments_from_jet", "make_ring",
]


class NotWellFounded(RuntimeError):
    """A coefficient of the unknown was needed before it could be computed."""


class ZeroDenominator(ZeroDivisionError):
    pass


# ---------------------------------------------------------------------------
# lazy coefficient nodes
# ---------------------------------------------------------------------------

class _Ctx:
    """Shared truncation data for one solve."""

    def __init__(self, ring: Ring, N: int, kk: int):
        self.ring = ring
        self.N = N
        self.kk = kk
        self.symbolic = ring.xmode.kind == "symbolic"

    def ucap(self, n: int) -> int:
        return self.ring.ucap - self.kk * n

    def xcap(self, n: int) -> int:
        return min(self.ring.xcap, n) if self.symbolic else self.ring.xcap


class _Node:
    __slots__ = ("ctx", "vals", "val")

    def __init__(self, ctx, val):
        self.ctx = ctx
        self.vals: list[CoeffPoly] = []
        self.val = val  # lower bound on the z-valuation

    def coeff(self, n: int) -> CoeffPoly:
        vals = self.vals
        while len(vals) <= n:
            m = len(vals)
            if m < self.val:
                vals.append(self.ctx.ring.zero())
            else:
                vals.append(self._compute(m))
        return vals[n]

    def _compute(self, n):
        raise NotImplementedError


class _Const(_Node):
    """Node with explicitly given sparse coefficients."""

    __slots__ = ("table", "top")

    def __init__(self, ctx, table: dict[int, CoeffPoly]):
        table = {n: c for n, c in table.items() if not c.is_zero()}
        super().__init__(ctx, min(table) if table else 10 ** 9)
        self.table = table
        self.top = max(table) if table else -1

    def _compute(self, n):
        c = self.table.get(n)
        if c is None:
            return self.ctx.ring.zero()
        return c.truncate(self.ctx.ucap(n), self.ctx.xcap(n))

    def support(self):
        return sorted(self.table)


class _Unknown(_Node):
    __slots__ = ("solution", "delta")

    def __init__(self, ctx, solution: list, delta: int):
        super().__init__(ctx, 0)
        self.solution = solution
        self.delta = delta

    def coeff(self, n):
        if n >= len(self.solution):
            raise NotWellFounded(f"coefficient {n} of the unknown is needed to compute itself")
        c = self.solution[n]
        return c.shift_u(-self.delta) if self.delta else c


class _Sum(_Node):
    __slots__ = ("a", "b", "sign")

    def __init__(self, ctx, a, b, sign):
        super().__init__(ctx, min(a.val, b.val))
        self.a, self.b, self.sign = a, b, sign

    def _compute(self, n):
        ca, cb = self.a.coeff(n), self.b.coeff(n)
        return ca + cb if self.sign > 0 else ca - cb


class _Neg(_Node):
    __slots__ = ("a",)

    def __init__(self, ctx, a):
        super().__init__(ctx, a.val)
        self.a = a

    def _compute(self, n):
        return -self.a.coeff(n)


class _Prod(_Node):
    __slots__ = ("a", "b")

    def __init__(self, ctx, a, b):
        if isinstance(b, _Const) and not isinstance(a, _Const):
            a, b = b, a
        super().__init__(ctx, a.val + b.val)
        self.a, self.b = a, b

    def _compute(self, n):
        ctx = self.ctx
        a, b = self.a, self.b
        uc, xc = ctx.ucap(n), ctx.xcap(n)
        acc = None
        if isinstance(a, _Const):
            idx = [i for i in a.support() if i <= n - b.val]
        else:
            idx = range(a.val, n - b.val + 1)
        for i in idx:
            ca = a.coeff(i)
            if ca.is_zero():
                continue
            cb = b.coeff(n - i)
            if cb.is_zero():
                continue
            t = ca.mul_trunc(cb, uc, xc)
            acc = t if acc is None else acc + t
        return acc if acc is not None else ctx.ring.zero()


class _Quot(_Node):
    __slots__ = ("a", "b", "inv0", "bidx", "expr")

    def __init__(self, ctx, a, b, expr):
        if b.val > 0:
            raise NonInvertibleSeries(f"denominator {expr} vanishes at z=0", expr=expr)
        super().__init__(ctx, a.val)
        self.a, self.b, self.expr = a, b, expr
        self.inv0 = None

    def _compute(self, n):
        ctx = self.ctx
        if self.inv0 is None:
            try:
                self.inv0 = self.b.coeff(0).inverse()
            except NonInvertibleSeries as exc:
                raise NonInvertibleSeries(f"denominator {self.expr} is not invertible", expr=self.expr) from exc
        uc, xc = ctx.ucap(n), ctx.xcap(n)
        acc = self.a.coeff(n)
        for i in range(1, n - self.val + 1):
            cb = self.b.coeff(i)
            if cb.is_zero():
                continue
            cq = self.coeff(n - i)
            if cq.is_zero():
                continue
            acc = acc - cb.mul_trunc(cq, uc, xc)
        return acc.mul_trunc(self.inv0, uc, xc)


class _Compiler:
    def __init__(self, ctx: _Ctx, solution: list):
        self.ctx = ctx
        self.solution = solution
        self.memo: dict = {}

    def const(self, table):
        return _Const(self.ctx, table)

    def node(self, e: RationalExpr) -> _Node:
        if e in self.memo:
            return self.memo[e]
        ring = self.ctx.ring
        if isinstance(e, Num):
            r = self.const({0: ring.const(e.value)})
        elif isinstance(e, Var):
            if e.name == "z":
                r = self.const({1: ring.one()})
            elif e.name == "u":
                r = self.const({0: ring.u()})
            elif e.name == "x":
                r = self.const({0: ring.x()})
            else:
                r = _Unknown(self.ctx, self.solution, int(e.name[1:]))
        elif isinstance(e, (Add, Sub)):
            a, b = self.node(e.left), self.node(e.right)
            r = self._fold_sum(a, b, 1 if isinstance(e, Add) else -1)
        elif isinstance(e, Neg):
            a = self.node(e.operand)
            r = self.const({n: -c for n, c in a.table.items()}) if isinstance(a, _Const) else _Neg(self.ctx, a)
        elif isinstance(e, Mul):
            r = self._mul(self.node(e.left), self.node(e.right))
        elif isinstance(e, Div):
            a, b = self.node(e.left), self.node(e.right)
            r = _Quot(self.ctx, a, b, e.right)
        elif isinstance(e, Pow):
            base = self.node(e.base)
            p = self._power(base, abs(e.exponent))
            if e.exponent < 0:
                r = _Quot(self.ctx, self.const({0: ring.one()}), p, e.base)
            else:
                r = p
        else:
            raise TypeError(e)
        self.memo[e] = r
        return r

    def _fold_sum(self, a, b, sign):
        if isinstance(a, _Const) and isinstance(b, _Const):
            table = dict(a.table)
            zero = self.ctx.ring.zero()
            for n, c in b.table.items():
                base = table.get(n, zero)
                table[n] = base + c if sign > 0 else base - c
            return self.const(table)
        return _Sum(self.ctx, a, b, sign)

    def _mul(self, a, b):
        if isinstance(a, _Const) and isinstance(b, _Const):
            ring = self.ctx.ring
            table: dict = {}
            for i, ca in a.table.items():
                for j, cb in b.table.items():
                    if i + j <= self.ctx.N:
                        table[i + j] = table.get(i + j, ring.zero()) + ca * cb
            return self.const(table)
        return _Prod(self.ctx, a, b)

    def _power(self, base, e):
        if e == 0:
            return self.const({0: self.ctx.ring.one()})
        result = None
        sq = base
        while e:
            if e & 1:
                result = sq if result is None else self._mul(result, sq)
            e >>= 1
            if e:
                sq = self._mul(sq, sq)
        return result


# ---------------------------------------------------------------------------
# solution container
# ---------------------------------------------------------------------------

def _perturbation_active(m: DdeModel, xmode: XMode) -> bool:
    return not (xmode.kind == "numeric" and m.shift_value(xmode.value) == 0)


def make_ring(m: DdeModel, N: int, xmode: XMode, backend: str = "exact", prec: int = 256,
              ucap: int | None = None) -> tuple[Ring, int]:
    kk = m.k if _perturbation_active(m, xmode) else 1
    if ucap is None:
        ucap = kk * N + m.k
    xcap = N if xmode.kind == "symbolic" else None
    return Ring(ucap, xmode, xcap, backend, prec), kk


@dataclass
class SeriesSolution:
    model: DdeModel
    N: int
    F: TruncatedSeries
    kk: int
    elapsed: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def ring(self) -> Ring:
        return self.F.ring

    @property
    def order_N(self) -> int:
        return self.N

    def exact_ucap(self, n: int) -> int:
        """Largest ``u``-degree of ``[z^n]F`` that is known exactly."""
        return self.ring.ucap - self.kk * n

    def section(self, i: int) -> TruncatedSeries:
        """``t_i = [u^i]F`` as a series in ``z``; only orders with ``i <= exact_ucap(n)`` are kept."""
        ring = self.ring
        top = min(self.N, (ring.ucap - i) // self.kk) if self.kk else self.N
        return TruncatedSeries(ring, top, [c.u_coeff(i) for c in self.F.coeffs[: top + 1]])

    @property
    def sections(self) -> list[TruncatedSeries]:
        return [self.section(i) for i in range(self.model.k + 1)]

    @property
    def t0(self) -> TruncatedSeries:
        return self.section(0)

    @property
    def t1(self) -> TruncatedSeries:
        return self.section(1)

    def t0_values(self) -> list:
        """Scalar coefficients of ``t_0`` (numeric ``x`` only)."""
        if self.ring.xmode.kind == "symbolic" and any(len(c.slots) > 1 for c in self.t0.coeffs):
            raise ValueError("t0 depends on x; use x_distribution or bind x")
        return [c.constant() for c in self.t0.coeffs]

    def header(self) -> dict:
        return {
            "model_hash": self.model.digest(),
            "model": self.model.name or "custom",
            "N": self.N,
            "backend": self.ring.backend,
            "x_mode": self.ring.xmode.describe(),
            "ucap": self.ring.ucap,
            "exact_u_rule": f"[z^n] exact for u-degree <= {self.ring.ucap} - {self.kk}*n",
        }

    def to_json(self) -> dict:
        return series_to_json(self.F, self.header())

    def coefficient(self, n: int, j: int = 0, xdeg: int = 0):
        if j > self.exact_ucap(n):
            raise ValueError(f"[z^{n} u^{j}] lies outside the exact region")
        return self.F.coeffs[n].terms().get((j, xdeg), self.ring.scalar(0))


def solve_dde(m: DdeModel, N: int, x_mode: XMode | str | object = "symbolic", backend: str = "exact",
              prec: int = 256, ucap: int | None = None) -> SeriesSolution:
    """Solve ``F = Q + S(x) z R`` modulo ``z^(N+1)`` in one pass over the ``z``-exponent."""
    import time

    if N < 0:
        raise ValueError("order must be non-negative")
    xmode = _as_xmode(x_mode)
    ring, kk = make_ring(m, N, xmode, backend, prec, ucap)
    ctx = _Ctx(ring, N, kk)
    solution: list[CoeffPoly] = []
    comp = _Compiler(ctx, solution)
    rhs_expr = m.rhs() if _perturbation_active(m, xmode) else m.Q
    t = time.perf_counter()
    with ring.context():
        rhs = comp.node(rhs_expr)
        for n in range(N + 1):
            try:
                c = rhs.coeff(n)
            except NotWellFounded as exc:
                raise NotWellFounded(f"{exc}; at order {n} (does every yj in Q carry a factor z?)") from None
            solution.append(c.truncate(ctx.ucap(n), ctx.xcap(n)))
    F = TruncatedSeries(ring, N, solution)
    return SeriesSolution(m, N, F, kk, time.perf_counter() - t)


def _as_xmode(x_mode) -> XMode:
    if isinstance(x_mode, XMode):
        return x_mode
    if isinstance(x_mode, str):
        return XMode.parse(x_mode)
    return XMode.numeric(x_mode)


def _bindings(F: TruncatedSeries, k: int) -> dict[str, TruncatedSeries]:
    return {f"y{j}": discrete_delta(F, j) for j in range(k + 1)}


def _truncate_region(F: TruncatedSeries, ucap0: int, kk: int) -> list[CoeffPoly]:
    out = []
    for n, c in enumerate(F.coeffs):
        xc = min(F.ring.xcap, n) if F.ring.xmode.kind == "symbolic" else F.ring.xcap
        out.append(c.truncate(ucap0 - kk * n, xc))
    return out


def solve_jacobi(m: DdeModel, N: int, x_mode="symbolic", backend="exact", prec=256) -> SeriesSolution:
    """Full-refresh fixed-point iteration ``F <- RHS(F)``, ``N + 1`` sweeps from ``F = 0``."""
    xmode = _as_xmode(x_mode)
    ring, kk = make_ring(m, N, xmode, backend, prec)
    rhs_expr = m.rhs() if _perturbation_active(m, xmode) else m.Q
    F = TruncatedSeries.zero(ring, N)
    for _ in range(N + 1):
        G = eval_rational_expr(rhs_expr, _bindings(F, m.k), ring, N)
        F = TruncatedSeries(ring, N, _truncate_region(G, ring.ucap, kk))
    return SeriesSolution(m, N, F, kk)


def residual_order(s: SeriesSolution) -> int:
    """First ``z``-exponent where ``F - RHS(F)`` is nonzero in the exact region (``N + 1`` if none)."""
    m, F = s.model, s.F
    ring = s.ring
    rhs_expr = m.rhs() if _perturbation_active(m, ring.xmode) else m.Q
    G = eval_rational_expr(rhs_expr, _bindings(F, m.k), ring, s.N)
    lhs = _truncate_region(F, ring.ucap, s.kk)
    rhs = _truncate_region(G, ring.ucap, s.kk)
    for n in range(s.N + 1):
        d = lhs[n] - rhs[n]
        if ring.backend == "exact":
            if not d.is_zero():
                return n
        else:
            for (_, _), v in d.terms().items():
                if not v.contains(0):
                    return n
    return s.N + 1


def x_distribution(s: SeriesSolution, n: int) -> list[Fraction]:
    """Law of ``X_n``: ``P(X_n = k) = [z^n x^k] t0 / [z^n] t0(x=1)``."""
    if s.ring.xmode.kind != "symbolic":
        raise ValueError("x_distribution needs a solution with symbolic x")
    if s.ring.backend != "exact":
        raise ValueError("x_distribution needs the exact backend")
    if n > s.N:
        raise ValueError(f"n = {n} exceeds the solved order {s.N}")
    c = s.F.coeffs[n].at_u0()
    weights = [to_fraction(p.coeffs()[0]) if p.length() else Fraction(0) for p in c.slots]
    total = sum(weights, Fraction(0))
    if total == 0:
        raise ZeroDenominator(f"[z^{n}] t0 vanishes at x = 1")
    return [w / total for w in weights]


def factorial_moments_from_jet(s: SeriesSolution, n: int) -> list:
    """``E[(X_n)_j]`` for ``j = 0..order`` from a jet solution at ``x = 1``."""
    xm = s.ring.xmode
    if xm.kind != "jet" or xm.value != 1:
        raise ValueError("need a jet expansion at x = 1")
    c = s.F.coeffs[n].at_u0()
    vals = [p.coeffs()[0] if p.length() else s.ring.scalar(0) for p in c.slots]
    vals += [s.ring.scalar(0)] * (xm.order + 1 - len(vals))
    c0 = vals[0]
    if (s.ring.backend == "exact" and c0 == 0) or (s.ring.backend == "arb" and c0.contains(0)):
        raise ZeroDenominator(f"[z^{n}] t0 vanishes at x = 1")
    out = []
    fact = 1
    with s.ring.context():
        for j, v in enumerate(vals):
            fact *= max(j, 1)
            out.append(v * fact / c0)
    return out
