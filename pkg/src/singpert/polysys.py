"""Exact multivariate polynomials, resultants and elimination.

``MultiPoly`` wraps ``flint.fmpq_mpoly`` with named variables; arithmetic
between polynomials over different variable sets is carried out in the union
(ordered by a fixed global ranking).  Resultants are determinants of
Sylvester matrices computed with fraction-free (Bareiss) elimination over the
polynomial ring.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Sequence

import flint
import mpmath

from .model import Add, DdeModel, Div, Mul, Neg, Num, Pow, RationalExpr, Sub, Var
from .series import Ring, TruncatedSeries, XMode, to_fraction

__all__ = [
    "MultiPoly", "Polynomialization", "Annihilator", "DenominatorNotMonomial", "EliminationCollapse",
    "from_model", "resultant", "eliminate", "eliminate_critical", "verify_annihilator",
    "verify_annihilator_float", "select_factor", "lift_series_solution", "unperturbed_branch",
    "load_fixture", "compare_with_fixture",
]

_RANK = ["u", "v", "T", "T1", "T2", "u1", "u2", "V", "N"] + [f"t{i}" for i in range(10)] + ["z", "s", "x", "w", "y"]


def _rank(name: str):
    try:
        return (0, _RANK.index(name), name)
    except ValueError:
        return (1, 0, name)


@lru_cache(maxsize=None)
def _ctx(names: tuple):
    return flint.fmpq_mpoly_ctx.get(names, "lex")


def _order(names: Iterable[str]) -> tuple:
    return tuple(sorted(set(names), key=_rank))


class DenominatorNotMonomial(ValueError):
    pass


class EliminationCollapse(ArithmeticError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class MultiPoly:
    """Polynomial with rational coefficients in named variables."""

    __slots__ = ("names", "p")

    def __init__(self, names: Sequence[str], p=None):
        self.names = tuple(names)
        self.p = p if p is not None else _ctx(self.names).from_dict({})

    # -- construction -------------------------------------------------------
    @classmethod
    def from_terms(cls, names, terms: Mapping[tuple, object]):
        names = tuple(names)
        d = {}
        for e, c in terms.items():
            f = to_fraction(c)
            if f:
                d[tuple(e)] = flint.fmpq(f.numerator, f.denominator)
        return cls(names, _ctx(names).from_dict(d))

    @classmethod
    def var(cls, name: str, names: Sequence[str] | None = None):
        names = _order(names or (name,))
        if name not in names:
            names = _order(names + (name,))
        e = tuple(1 if n == name else 0 for n in names)
        return cls.from_terms(names, {e: 1})

    @classmethod
    def const(cls, value, names: Sequence[str] = ("z",)):
        names = tuple(names)
        return cls.from_terms(names, {(0,) * len(names): value})

    def terms(self) -> dict[tuple, Fraction]:
        return {tuple(m): Fraction(str(c)) for m, c in zip(self.p.monoms(), self.p.coeffs())}

    def lift(self, names: Sequence[str]) -> "MultiPoly":
        names = tuple(names)
        if names == self.names:
            return self
        idx = [names.index(n) for n in self.names]
        d = {}
        for m, c in zip(self.p.monoms(), self.p.coeffs()):
            e = [0] * len(names)
            for i, k in zip(idx, m):
                e[i] = k
            d[tuple(e)] = c
        return MultiPoly(names, _ctx(names).from_dict(d))

    def _coerce(self, other):
        if isinstance(other, MultiPoly):
            if other.names == self.names:
                return self, other
            names = _order(self.names + other.names)
            return self.lift(names), other.lift(names)
        return self, MultiPoly.const(other, self.names)

    # -- arithmetic ---------------------------------------------------------------
    def __add__(self, o):
        a, b = self._coerce(o)
        return MultiPoly(a.names, a.p + b.p)

    __radd__ = __add__

    def __sub__(self, o):
        a, b = self._coerce(o)
        return MultiPoly(a.names, a.p - b.p)

    def __rsub__(self, o):
        a, b = self._coerce(o)
        return MultiPoly(a.names, b.p - a.p)

    def __neg__(self):
        return MultiPoly(self.names, -self.p)

    def __mul__(self, o):
        a, b = self._coerce(o)
        return MultiPoly(a.names, a.p * b.p)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        return MultiPoly(self.names, self.p ** int(e))

    def __divmod__(self, o):
        a, b = self._coerce(o)
        q, r = divmod(a.p, b.p)
        return MultiPoly(a.names, q), MultiPoly(a.names, r)

    def exact_div(self, o) -> "MultiPoly":
        q, r = divmod(self, o)
        if not r.is_zero():
            raise ArithmeticError("division is not exact")
        return q

    def gcd(self, o) -> "MultiPoly":
        a, b = self._coerce(o)
        return MultiPoly(a.names, a.p.gcd(b.p))

    def __eq__(self, o):
        if not isinstance(o, MultiPoly):
            if isinstance(o, (int, Fraction)):
                o = MultiPoly.const(o, self.names)
            else:
                return NotImplemented
        a, b = self._coerce(o)
        return a.p == b.p

    def __hash__(self):
        return hash(tuple(sorted(self.trim().terms().items())))

    def is_zero(self) -> bool:
        return self.p == 0

    # -- structure --------------------------------------------------------------
    def variables(self) -> tuple:
        degs = self.p.degrees()
        return tuple(n for n, d in zip(self.names, degs) if d > 0)

    def trim(self) -> "MultiPoly":
        """Restrict to the variables that actually occur."""
        used = self.variables()
        if used == self.names:
            return self
        idx = [self.names.index(n) for n in used]
        d = {}
        for m, c in zip(self.p.monoms(), self.p.coeffs()):
            d[tuple(m[i] for i in idx)] = c
        return MultiPoly(used, _ctx(used).from_dict(d))

    def degree(self, var: str) -> int:
        if var not in self.names:
            return 0 if not self.is_zero() else -1
        if self.is_zero():
            return -1
        return self.p.degrees()[self.names.index(var)]

    def total_degree(self) -> int:
        return max((sum(m) for m in self.p.monoms()), default=-1)

    def nterms(self) -> int:
        return len(self.p.coeffs())

    def derivative(self, var: str) -> "MultiPoly":
        if var not in self.names:
            return MultiPoly(self.names)
        return MultiPoly(self.names, self.p.derivative(var))

    def coeffs_in(self, var: str) -> list["MultiPoly"]:
        """Coefficients with respect to ``var``, low degree first, in the remaining variables' ring."""
        if var not in self.names:
            return [self]
        i = self.names.index(var)
        d = self.degree(var)
        buckets = [dict() for _ in range(d + 1)]
        for m, c in zip(self.p.monoms(), self.p.coeffs()):
            e = list(m)
            k = e[i]
            e[i] = 0
            buckets[k][tuple(e)] = c
        ctx = _ctx(self.names)
        return [MultiPoly(self.names, ctx.from_dict(b)) for b in buckets]

    def subs(self, mapping: Mapping[str, object]) -> "MultiPoly":
        """Substitute polynomials (or numbers) for variables."""
        extra: list = []
        for val in mapping.values():
            if isinstance(val, MultiPoly):
                extra += list(val.names)
        names = _order(self.names + tuple(extra))
        base = self.lift(names)
        gens = []
        for n in names:
            if n in mapping:
                val = mapping[n]
                val = val.lift(names) if isinstance(val, MultiPoly) else MultiPoly.const(val, names)
                gens.append(val.p)
            else:
                gens.append(MultiPoly.var(n, names).p)
        out = MultiPoly(names, base.p.compose(*gens, ctx=_ctx(names)))
        keep = tuple(n for n in names if n not in mapping or n in extra)
        return out.lift_down(keep or names[:1])

    def lift_down(self, names) -> "MultiPoly":
        names = tuple(names)
        idx = [self.names.index(n) for n in names]
        d = {}
        for m, c in zip(self.p.monoms(), self.p.coeffs()):
            if any(m[j] for j in range(len(m)) if self.names[j] not in names):
                raise ValueError("cannot drop a variable that occurs")
            d[tuple(m[i] for i in idx)] = c
        return MultiPoly(names, _ctx(names).from_dict(d))

    def rename(self, mapping: Mapping[str, str]) -> "MultiPoly":
        new = tuple(mapping.get(n, n) for n in self.names)
        if len(set(new)) != len(new):
            raise ValueError("renaming merges variables")
        d = {}
        order = _order(new)
        idx = [new.index(n) for n in order]
        for m, c in zip(self.p.monoms(), self.p.coeffs()):
            d[tuple(m[i] for i in idx)] = c
        return MultiPoly(order, _ctx(order).from_dict(d))

    def factor(self) -> tuple[Fraction, list[tuple["MultiPoly", int]]]:
        c, fs = self.p.factor()
        return Fraction(str(c)), [(MultiPoly(self.names, g), m) for g, m in fs]

    def primitive(self) -> "MultiPoly":
        """Scale to integer coefficients with positive leading term and content 1."""
        if self.is_zero():
            return self
        cs = [Fraction(str(c)) for c in self.p.coeffs()]
        from math import gcd, lcm
        den = 1
        for c in cs:
            den = lcm(den, c.denominator)
        ints = [int(c * den) for c in cs]
        g = 0
        for i in ints:
            g = gcd(g, i)
        scale = Fraction(den, g)
        if ints[0] < 0:
            scale = -scale
        return self * scale

    def strip_monomials(self) -> "MultiPoly":
        """Remove monomial factors and repeated factors (squarefree, primitive)."""
        if self.is_zero():
            return self
        _, fs = self.factor()
        out = MultiPoly.const(1, self.names)
        for g, _ in fs:
            if g.nterms() > 1:
                out = out * g
        return out.primitive()

    def squarefree_part(self, var: str | None = None) -> "MultiPoly":
        """``p / gcd(p, dp/dvar)``, primitive."""
        if self.is_zero():
            return self
        if var is None:
            _, fs = self.factor()
            out = MultiPoly.const(1, self.names)
            for g, _ in fs:
                out = out * g
            return out.primitive()
        g = self.gcd(self.derivative(var))
        return self.exact_div(g).primitive()

    # -- evaluation ------------------------------------------------------------------
    def evaluate(self, values: Mapping[str, object]):
        """Numeric evaluation (mpmath or Python numbers); all variables must be bound."""
        idx = [values[n] if n in values else None for n in self.names]
        for n, v in zip(self.names, idx):
            if v is None and n in self.variables():
                raise KeyError(f"variable {n!r} not bound")
        total = 0
        pows: dict = {}
        for m, c in zip(self.p.monoms(), self.p.coeffs()):
            term = mpmath.mpf(int(c.p)) / int(c.q)
            for i, e in enumerate(m):
                if e:
                    key = (i, e)
                    if key not in pows:
                        pows[key] = idx[i] ** int(e)
                    term = term * pows[key]
            total += term
        return total

    def eval_series(self, bindings: Mapping[str, TruncatedSeries], ring: Ring, order: int) -> TruncatedSeries:
        """Evaluate with series for some variables; ``z`` may be free (it becomes the series variable),
        ``x`` is taken from the ring, ``u`` too unless bound."""
        powers: dict = {}

        def pw(name, e):
            key = (name, e)
            if key not in powers:
                if e == 1:
                    if name in bindings:
                        powers[key] = bindings[name]
                    elif name == "z":
                        powers[key] = TruncatedSeries.z(ring, order)
                    elif name == "x":
                        powers[key] = TruncatedSeries.const(ring, order, ring.x())
                    elif name == "u":
                        powers[key] = TruncatedSeries.const(ring, order, ring.u())
                    else:
                        raise KeyError(f"variable {name!r} not bound")
                elif name == "z":
                    powers[key] = TruncatedSeries.z(ring, order, e) if e <= order else TruncatedSeries.zero(ring, order)
                else:
                    powers[key] = pw(name, e - 1) * pw(name, 1)
            return powers[key]

        # group by the non-z part, so z-powers become shifts
        zi = self.names.index("z") if "z" in self.names else None
        total = TruncatedSeries.zero(ring, order)
        with ring.context():
            for m, c in zip(self.p.monoms(), self.p.coeffs()):
                m = [int(k) for k in m]
                zdeg = m[zi] if zi is not None else 0
                if zdeg > order:
                    continue
                term = TruncatedSeries.const(ring, order, Fraction(int(c.p), int(c.q)))
                for name, e in zip(self.names, m):
                    if e and name != "z":
                        term = term * pw(name, e)
                if zdeg:
                    term = term.shift_z(zdeg)
                total = total + term
        return total

    # -- text ----------------------------------------------------------------------------
    def to_text(self) -> str:
        """``c * z^a u^b t0^c x^d`` monomials, sorted by descending exponent vectors."""
        if self.is_zero():
            return "0"
        order = _order(self.names)
        p = self.lift(order)
        items = sorted(p.terms().items(), key=lambda kv: tuple(-e for e in kv[0]))
        out = []
        for e, c in items:
            mono = " ".join(n if k == 1 else f"{n}^{k}" for n, k in zip(order, e) if k)
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            body = f"{mag} * {mono}" if mono else f"{mag}"
            out.append((sign, body))
        s = ("-" if out[0][0] == "-" else "") + out[0][1]
        for sign, body in out[1:]:
            s += f" {sign} {body}"
        return s

    @classmethod
    def parse(cls, text: str) -> "MultiPoly":
        text = re.sub(r"#[^\n]*", "", text)
        text = text.replace("\n", " ").strip()
        if not text:
            raise ValueError("empty polynomial")
        toks = re.findall(r"[+-]|[^+-]+", text)
        terms = []
        sign = 1
        expect_term = True
        for t in toks:
            t = t.strip()
            if not t:
                continue
            if t in "+-":
                sign = sign * (-1 if t == "-" else 1) if expect_term else (-1 if t == "-" else 1)
                expect_term = True
                continue
            terms.append((sign, t))
            sign = 1
            expect_term = False
        parsed = []
        names = set()
        for sign, t in terms:
            coef = Fraction(sign)
            mono = {}
            for f in re.split(r"[\s*]+", t.strip()):
                if not f:
                    continue
                m = re.fullmatch(r"(\d+(?:/\d+)?)", f)
                if m:
                    coef *= Fraction(f)
                    continue
                m = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)(?:\^(\d+))?", f)
                if not m:
                    raise ValueError(f"cannot parse factor {f!r}")
                mono[m.group(1)] = mono.get(m.group(1), 0) + int(m.group(2) or 1)
                names.add(m.group(1))
            parsed.append((coef, mono))
        order = _order(names) or ("z",)
        d: dict = {}
        for coef, mono in parsed:
            e = tuple(mono.get(n, 0) for n in order)
            d[e] = d.get(e, 0) + coef
        return cls.from_terms(order, d)

    def __repr__(self):
        s = self.to_text()
        return f"MultiPoly({s[:120]}{'...' if len(s) > 120 else ''})"

    def __str__(self):
        return self.to_text()


# ---------------------------------------------------------------------------
# resultants
# ---------------------------------------------------------------------------

def _bareiss_det(M: list[list]):
    """Fraction-free determinant of a square matrix over the polynomial ring (flint mpolys)."""
    n = len(M)
    if n == 0:
        return None
    M = [row[:] for row in M]
    sign = 1
    prev = None
    for k in range(n - 1):
        if M[k][k] == 0:
            for r in range(k + 1, n):
                if M[r][k] != 0:
                    M[k], M[r] = M[r], M[k]
                    sign = -sign
                    break
            else:
                return M[k][k] * 0
        pivot = M[k][k]
        for i in range(k + 1, n):
            mik = M[i][k]
            for j in range(k + 1, n):
                num = M[i][j] * pivot - mik * M[k][j]
                M[i][j] = num if prev is None else _exact(num, prev)
            M[i][k] = pivot * 0
        prev = pivot
    return M[n - 1][n - 1] if sign > 0 else -M[n - 1][n - 1]


def _exact(a, b):
    q, r = divmod(a, b)
    if r != 0:
        raise ArithmeticError("Bareiss step is not exact")
    return q


def sylvester_matrix(p: MultiPoly, q: MultiPoly, var: str) -> list[list[MultiPoly]]:
    p, q = p._coerce(q)
    a = [c for c in reversed(p.coeffs_in(var))]
    b = [c for c in reversed(q.coeffs_in(var))]
    m, n = len(a) - 1, len(b) - 1
    size = m + n
    zero = MultiPoly(p.names)
    rows = []
    for i in range(n):
        rows.append([zero] * i + a + [zero] * (size - m - 1 - i))
    for i in range(m):
        rows.append([zero] * i + b + [zero] * (size - n - 1 - i))
    return rows


def resultant(p: MultiPoly, q: MultiPoly, var: str) -> MultiPoly:
    """``Res_var(p, q)``: Sylvester determinant (rows of ``p`` first), computed by Bareiss elimination."""
    p, q = p._coerce(q)
    dp, dq = p.degree(var), q.degree(var)
    if dp < 0 or dq < 0:
        return MultiPoly(p.names)
    if dp == 0:
        return q * 0 + p ** dq
    if dq == 0:
        return p * 0 + q ** dp
    M = sylvester_matrix(p, q, var)
    det = _bareiss_det([[c.p for c in row] for row in M])
    out = MultiPoly(p.names, det)
    return out


# ---------------------------------------------------------------------------
# polynomialization of a model
# ---------------------------------------------------------------------------

@dataclass
class Polynomialization:
    """``poly = u^k (RHS - T) * clearing``, reduced; ``clearing`` is the cleared denominator."""

    poly: MultiPoly
    clearing: MultiPoly
    model: DdeModel

    @property
    def monomial(self) -> bool:
        return self.clearing.nterms() == 1

    def at_x(self, value) -> MultiPoly:
        return self.poly.subs({"x": value})


class _RatFun:
    __slots__ = ("num", "den")

    def __init__(self, num: MultiPoly, den: MultiPoly):
        self.num, self.den = num, den

    def reduce(self):
        g = self.num.gcd(self.den)
        if g.nterms() == 1 and g.total_degree() == 0:
            return self
        return _RatFun(self.num.exact_div(g), self.den.exact_div(g))

    def __add__(self, o):
        if self.den == o.den:
            return _RatFun(self.num + o.num, self.den).reduce()
        return _RatFun(self.num * o.den + o.num * self.den, self.den * o.den).reduce()

    def __neg__(self):
        return _RatFun(-self.num, self.den)

    def __sub__(self, o):
        return self + (-o)

    def __mul__(self, o):
        return _RatFun(self.num * o.num, self.den * o.den).reduce()

    def inv(self):
        if self.num.is_zero():
            raise ZeroDivisionError("division by the zero rational function")
        return _RatFun(self.den, self.num)


def _names_for(k: int) -> tuple:
    return _order(("u", "T", "z", "x") + tuple(f"t{i}" for i in range(k)))


def _to_ratfun(e: RationalExpr, env: dict, names) -> _RatFun:
    one = MultiPoly.const(1, names)
    if isinstance(e, Num):
        return _RatFun(MultiPoly.const(e.value, names), one)
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Add):
        return _to_ratfun(e.left, env, names) + _to_ratfun(e.right, env, names)
    if isinstance(e, Sub):
        return _to_ratfun(e.left, env, names) - _to_ratfun(e.right, env, names)
    if isinstance(e, Mul):
        return _to_ratfun(e.left, env, names) * _to_ratfun(e.right, env, names)
    if isinstance(e, Div):
        return _to_ratfun(e.left, env, names) * _to_ratfun(e.right, env, names).inv()
    if isinstance(e, Neg):
        return -_to_ratfun(e.operand, env, names)
    if isinstance(e, Pow):
        b = _to_ratfun(e.base, env, names)
        if e.exponent < 0:
            b = b.inv()
        out = _RatFun(one, one)
        for _ in range(abs(e.exponent)):
            out = out * b
        return out
    raise TypeError(e)


def from_model(m: DdeModel, strict: bool = False) -> Polynomialization:
    """``P(z,u,T,t0,...,t_{k-1},x)``: the equation times ``u^k``, cleared of denominators.

    ``yj`` becomes ``(T - t0 - u t1 - ... - u^{j-1} t_{j-1}) / u^j``.  With
    ``strict`` a non-monomial clearing factor raises :class:`DenominatorNotMonomial`.
    """
    k = m.k
    names = _names_for(k)
    one = MultiPoly.const(1, names)
    u = MultiPoly.var("u", names)
    T = MultiPoly.var("T", names)
    env = {"z": _RatFun(MultiPoly.var("z", names), one),
           "u": _RatFun(u, one),
           "x": _RatFun(MultiPoly.var("x", names), one)}
    for j in range(k + 1):
        num = T
        for i in range(j):
            num = num - MultiPoly.var(f"t{i}", names) * u ** i
        env[f"y{j}"] = _RatFun(num, u ** j)
    rhs = _to_ratfun(m.rhs(), env, names)
    eq = (rhs - _RatFun(T, one)) * _RatFun(u ** k, one)
    if strict and eq.den.nterms() != 1:
        raise DenominatorNotMonomial(f"clearing needs the factor {eq.den.to_text()}")
    # normalise the sign so the clearing factor has positive leading coefficient
    den = eq.den
    lead = Fraction(str(den.p.coeffs()[0]))
    return Polynomialization((eq.num * (1 / lead)), den * (1 / lead), m)


# ---------------------------------------------------------------------------
# elimination
# ---------------------------------------------------------------------------

@dataclass
class Annihilator:
    target: str
    poly: MultiPoly
    provenance: list[str] = field(default_factory=list)
    candidates: list[MultiPoly] = field(default_factory=list)

    def degree(self) -> int:
        return self.poly.degree(self.target)

    def to_text(self) -> str:
        return self.poly.to_text()


def _clean(p: MultiPoly, log: list, label: str) -> MultiPoly:
    out = p.strip_monomials()
    log.append(f"{label}: {p.nterms()} terms -> {out.nterms()} after removing monomial and repeated factors")
    return out


def _divide_diagonal(h: MultiPoly, a: str, b: str) -> tuple[MultiPoly, int]:
    diff = MultiPoly.var(a, h.names) - MultiPoly.var(b, h.names)
    m = 0
    while True:
        q, r = divmod(h, diff)
        if not r.is_zero():
            return h, m
        h, m = q, m + 1


def eliminate(system: Sequence[MultiPoly], keep: Iterable[str], branches: int = 1,
              branch_vars: Sequence[str] = ("u", "T")) -> Annihilator:
    """Eliminate every variable not in ``keep``.

    ``branches = 1``: successive resultants, one variable at a time (the
    first polynomial containing the variable against each other one).

    ``branches = 2``: the system is imposed at two distinct points
    ``(u1, T1) != (u2, T2)`` sharing every other unknown; this is the
    critical system of an order-2 equation.  The diagonal ``u1 = u2`` is
    divided out after eliminating the shared unknowns.
    """
    keep = set(keep)
    if branches == 2:
        return _eliminate_two_branch(list(system), keep, tuple(branch_vars))
    if branches != 1:
        raise ValueError("only one or two branches are supported")
    polys = [p.strip_monomials() if not p.is_zero() else p for p in system]
    polys = [p for p in polys if not p.is_zero()]
    log = []
    allv = _order(set().union(*(set(p.variables()) for p in polys))) if polys else ()
    targets = [v for v in allv if v not in keep]
    for var in targets:
        with_v = [p for p in polys if var in p.variables()]
        without = [p for p in polys if var not in p.variables()]
        if not with_v:
            continue
        if len(with_v) == 1:
            polys = without
            log.append(f"{var}: occurs in one polynomial only, dropped")
            continue
        base = with_v[0]
        new = []
        for i, other in enumerate(with_v[1:], 1):
            r = resultant(base, other, var)
            log.append(f"Res_{var}(p0, p{i}) -> {r.nterms()} terms")
            if not r.is_zero():
                new.append(r.strip_monomials())
        if not new and not without:
            raise EliminationCollapse(f"all resultants in {var} vanish identically", pair=(base, with_v[1]))
        polys = without + [p for p in new if p.nterms() > 0]
    rel = [p for p in polys if p.variables()]
    if not rel:
        raise EliminationCollapse("elimination left no relation")
    target = sorted(keep - {"z", "x"}, key=_rank)
    tname = target[0] if target else rel[0].variables()[0]
    poly = rel[0]
    return Annihilator(tname, poly, log, [g for g, _ in poly.factor()[1] if g.nterms() > 1])


def _eliminate_two_branch(system, keep, bv) -> Annihilator:
    if len(system) != 3:
        raise ValueError("two-branch elimination expects [P, P_u, P_T]")
    ub, Tb = bv
    P, Pu, PT = system
    shared = [n for n in _order(set(P.variables()) | set(Pu.variables())) if n not in (ub, Tb, "z", "x")]
    if len(shared) != 2:
        raise ValueError(f"expected two shared unknowns besides {ub}, {Tb}; found {shared}")
    s0, s1 = shared
    log: list[str] = []
    E1 = resultant(P, PT, Tb)
    E2 = resultant(Pu, PT, Tb)
    log.append(f"E1 = Res_{Tb}(P, P_{Tb}) [{E1.nterms()} terms]; E2 = Res_{Tb}(P_{ub}, P_{Tb}) [{E2.nterms()} terms]")
    if E1.is_zero() or E2.is_zero():
        raise EliminationCollapse(f"resultant in {Tb} vanishes", pair=(P, PT))
    G = resultant(E1, E2, s1)
    K = resultant(E1, E2, s0)
    if G.is_zero() or K.is_zero():
        raise EliminationCollapse("E1 and E2 share a component", pair=(E1, E2))
    G = _clean(G, log, f"G = Res_{s1}(E1, E2)")
    K = _clean(K, log, f"K = Res_{s0}(E1, E2)")
    other = "v"
    Gv, Kv = G.rename({ub: other}), K.rename({ub: other})
    H, mh = _divide_diagonal(resultant(G, Gv, s0), ub, other)
    Hp, mk = _divide_diagonal(resultant(K, Kv, s1), ub, other)
    log.append(f"H = Res_{s0}(G({ub}), G({other})) / ({ub}-{other})^{mh}; "
               f"H' = Res_{s1}(K({ub}), K({other})) / ({ub}-{other})^{mk}")
    H = _clean(H, log, "H")
    Hp = _clean(Hp, log, "H'")
    U = resultant(H, Hp, other)
    if U.is_zero():
        raise EliminationCollapse("H and H' share a component", pair=(H, Hp))
    Uc = _clean(U, log, f"U = Res_{other}(H, H')")
    ufactors = [g.primitive() for g, _ in Uc.factor()[1] if g.nterms() > 1 and ub in g.variables()]
    log.append(f"U factors in {ub}: degrees {[g.degree(ub) for g in ufactors]}")
    if ub in keep:
        return Annihilator(ub, Uc, log, ufactors)
    target = s0 if s0 in keep else s1
    if target != s0:
        raise ValueError(f"keep must contain {ub} or {s0}")
    W = MultiPoly.const(1, Uc.names)
    cands = []
    for g in ufactors:
        r = resultant(G, g, ub)
        log.append(f"Res_{ub}(G, U-factor of degree {g.degree(ub)}) -> {r.nterms()} terms")
        rc = r.strip_monomials()
        for h, _ in rc.factor()[1]:
            if h.nterms() > 1 and target in h.variables():
                cands.append(h.primitive())
        W = W * rc
    return Annihilator(target, W.strip_monomials(), log, cands)


def eliminate_critical(m: DdeModel) -> tuple[Annihilator, Annihilator]:
    """u- and t0-annihilators of the order-2 critical system ``P = P_u = P_T = 0`` at two branches."""
    if m.k != 2:
        raise ValueError("critical elimination is implemented for order 2")
    P = from_model(m).poly
    system = [P, P.derivative("u"), P.derivative("T")]
    ua = eliminate(system, {"u", "z", "x"}, branches=2)
    ta = eliminate(system, {"t0", "z", "x"}, branches=2)
    return ua, ta


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def verify_annihilator(a: Annihilator | MultiPoly, s: TruncatedSeries, target: str | None = None) -> int:
    """Order of vanishing of ``a(s, z, x)``; ``s.order + 1`` means zero through the computed order."""
    poly = a.poly if isinstance(a, Annihilator) else a
    target = target or (a.target if isinstance(a, Annihilator) else None)
    extra = set(poly.variables()) - {target, "z", "x"}
    if extra:
        raise ValueError(f"annihilator has variables besides the target, z and x: {sorted(extra)}")
    ring = s.ring
    val = poly.eval_series({target: s}, ring, s.order)
    if ring.backend == "exact":
        return val.valuation()
    for n, c in enumerate(val.coeffs):
        for v in c.terms().values():
            if not v.contains(0):
                return n
    return s.order + 1


def verify_annihilator_float(poly: MultiPoly, points: Iterable[Mapping[str, object]], scale=True) -> float:
    """Largest (relative) residual of ``poly`` at numeric points."""
    worst = mpmath.mpf(0)
    for pt in points:
        val = abs(poly.evaluate(pt))
        if scale:
            mag = mpmath.mpf(0)
            for mon, c in zip(poly.p.monoms(), poly.p.coeffs()):
                t = abs(mpmath.mpf(int(c.p)) / int(c.q))
                for n, e in zip(poly.names, mon):
                    if e:
                        t *= abs(mpmath.mpf(pt[n])) ** int(e)
                mag = max(mag, t)
            val = val / mag if mag else val
        worst = max(worst, val)
    return worst


def select_factor(a: Annihilator, s: TruncatedSeries) -> tuple[MultiPoly | None, list[tuple[MultiPoly, int]]]:
    """Pick the candidate factor with the highest vanishing order on ``s``."""
    scored = [(g, verify_annihilator(g, s, a.target)) for g in a.candidates]
    best = max(scored, key=lambda t: t[1], default=(None, -1))
    return best[0], scored


def lift_series_solution(eqs: Sequence[MultiPoly], unknowns: Sequence[str], start: Sequence,
                         ring: Ring, order: int, known: Mapping[str, TruncatedSeries] | None = None
                         ) -> dict[str, TruncatedSeries]:
    """Power-series solution of ``eqs = 0`` in ``z`` lifting a simple root ``start`` at ``z = 0``.

    Iterates ``w <- w - J0^{-1} E(w)`` with the constant Jacobian at ``z = 0``;
    each sweep gains at least one correct coefficient.
    """
    import sympy as sp

    known = dict(known or {})
    zero_pt = {n: v for n, v in zip(unknowns, start)}
    zero_pt["z"] = 0
    for n, s_ in known.items():
        zero_pt[n] = to_fraction(s_.coeffs[0].constant())
    J = sp.Matrix([[sp.Rational(str(_eval_exact(e.derivative(w), zero_pt))) for w in unknowns] for e in eqs])
    if J.det() == 0:
        raise ArithmeticError("singular Jacobian at z = 0")
    Jinv = J.inv()
    cur = {n: TruncatedSeries.const(ring, order, to_fraction(v)) for n, v in zip(unknowns, start)}
    for _ in range(order + 1):
        b = {**known, **cur}
        res = [e.eval_series(b, ring, order) for e in eqs]
        if all(r.is_zero() for r in res):
            break
        new = {}
        for i, n in enumerate(unknowns):
            acc = cur[n]
            for j in range(len(eqs)):
                c = Jinv[i, j]
                if c != 0:
                    acc = acc - res[j].scale(Fraction(int(c.p), int(c.q)))
            new[n] = acc
        cur = new
    return cur


def _eval_exact(p: MultiPoly, pt: Mapping[str, object]) -> Fraction:
    total = Fraction(0)
    for m, c in zip(p.p.monoms(), p.p.coeffs()):
        t = Fraction(str(c))
        for n, e in zip(p.names, m):
            if e:
                t *= to_fraction(pt[n]) ** int(e)
        total += t
    return total


def unperturbed_branch(m: DdeModel, order: int) -> dict[str, TruncatedSeries]:
    """Series ``u(z), T(z)`` of the critical point of the equation at the critical ``x``.

    At the critical ``x`` the polynomial factors as ``u^a P1``; the branch solves
    ``P1_u = P1_T = 0`` lifted from the root at ``z = 0``, and ``t0`` follows from ``P1 = 0``.
    """
    P = from_model(m).poly.subs({"x": m.critical_x})
    P1 = P
    u = MultiPoly.var("u", P.names)
    while True:
        q, r = divmod(P1, u)
        if not r.is_zero():
            break
        P1 = q
    ring = Ring(0, XMode.numeric(0), backend="exact")
    eqs = [P1.derivative("u"), P1.derivative("T")]
    # root at z = 0 of the derivative system
    import sympy as sp
    zs = {n: sp.Symbol(n) for n in P1.names}
    e0 = [sp.sympify(str(e.subs({"z": 0}).to_text()).replace("^", "**"), locals=zs) for e in eqs]
    sols = sp.solve(e0, [zs["u"], zs["T"]], dict=True)
    sols = [s_ for s_ in sols if all(v.is_rational for v in s_.values())]
    if not sols:
        raise ArithmeticError("no rational critical point at z = 0")
    start = [Fraction(str(sols[0][zs["u"]])), Fraction(str(sols[0][zs["T"]]))]
    # the other shared unknown t0 enters only P1; solve P1 for t0 afterwards
    if any("t0" in e.variables() for e in eqs):
        raise ArithmeticError("derivative system depends on t0")
    cur = lift_series_solution(eqs, ["u", "T"], start, ring, order)
    # t0 from P1 = 0: P1 is linear in t0
    cs = P1.coeffs_in("t0")
    if len(cs) != 2:
        raise ArithmeticError("P1 is not linear in t0")
    a0 = cs[0].eval_series(cur, ring, order + 1)
    a1 = cs[1].eval_series(cur, ring, order + 1)
    v = a1.valuation()
    t0 = None
    if v <= order:
        num = TruncatedSeries(ring, order + 1 - v, (-a0).coeffs[v:])
        den = TruncatedSeries(ring, order + 1 - v, a1.coeffs[v:])
        if not all(c.is_zero() for c in (-a0).coeffs[:v]):
            raise ArithmeticError("t0 is not a power series on this branch")
        t0 = (num / den).truncate(order - v)
    out = dict(cur)
    if t0 is not None:
        out["t0"] = t0
    return out


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

def load_fixture(name: str) -> MultiPoly:
    text = resources.files("singpert").joinpath("data", f"{name}.txt").read_text()
    return MultiPoly.parse(text)


def compare_with_fixture(own: MultiPoly, fixture: MultiPoly) -> dict:
    """Relation between an own annihilator (or factor) and a printed polynomial."""
    own, fixture = own._coerce(fixture)
    q, r = divmod(own, fixture)
    divides = r.is_zero()
    unit = divides and q.nterms() == 1 and q.total_degree() == 0
    diff = (own.primitive() - fixture.primitive())
    return {
        "equal_up_to_unit": unit,
        "fixture_divides_own": divides,
        "cofactor": q.to_text() if divides else None,
        "difference": diff.to_text() if not diff.is_zero() else "0",
    }
