"""Truncated power series in ``z`` with polynomial coefficients in ``(u, x)``.

A series is stored densely in ``z``: ``coeffs[n]`` is the coefficient of
``z**n``, itself a :class:`CoeffPoly`, i.e. a polynomial in the catalytic
variable ``u`` and the marking variable ``x``.  Coefficient polynomials are
kept as a tuple of univariate ``u``-polynomials indexed by the power of ``x``
(or of ``x - x0`` in jet mode), which maps every product onto fast flint
kernels.

Two backends share the same code path:

``exact``
    ``flint.fmpq_poly`` slots, bit-exact rationals.
``arb``
    ``flint.arb_poly`` slots, real balls at a configurable working precision.

The ``u``-degree is capped (``Ring.ucap``) because solutions of catalytic
equations can be genuine power series in ``u`` (e.g. ``1/(1-u)`` already at
``z**1`` for near-triangulations).  Truncation in ``u`` is a ring
homomorphism ``Q[u] -> Q[u]/(u**(ucap+1))``, so everything except the
discrete derivative is exact modulo the cap.
"""
from __future__ import annotations

import contextlib
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import flint

__all__ = [
    "NonInvertibleSeries",
    "XMode",
    "Ring",
    "CoeffPoly",
    "TruncatedSeries",
    "LaurentSeries",
    "series_arith",
    "discrete_delta",
    "eval_rational_expr",
    "series_to_json",
    "series_from_json",
    "to_fraction",
]


class NonInvertibleSeries(ArithmeticError):
    """Raised when dividing by a series whose constant term is not a unit."""

    def __init__(self, message, expr=None):
        super().__init__(message)
        self.expr = expr


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, (flint.fmpq, flint.fmpz)):
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    raise TypeError(f"cannot convert {value!r} to a rational")


def _fmpq(value) -> flint.fmpq:
    f = to_fraction(value)
    return flint.fmpq(f.numerator, f.denominator)


@dataclass(frozen=True)
class XMode:
    """How the marking variable ``x`` is represented in coefficients.

    ``symbolic``: exact polynomial in ``x`` (slot ``i`` holds ``x**i``).
    ``numeric``: ``x`` bound to ``value`` (single slot).
    ``jet``: truncated Taylor expansion in ``x - value`` up to ``order``.
    """

    kind: str = "symbolic"
    value: Fraction | None = None
    order: int = 0

    def __post_init__(self):
        if self.kind not in ("symbolic", "numeric", "jet"):
            raise ValueError(f"unknown x mode {self.kind!r}")
        if self.kind != "symbolic" and self.value is None:
            raise ValueError(f"x mode {self.kind!r} needs a value")
        if self.value is not None and not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", to_fraction(self.value))

    @classmethod
    def symbolic(cls):
        return cls("symbolic")

    @classmethod
    def numeric(cls, value):
        return cls("numeric", to_fraction(value))

    @classmethod
    def jet(cls, value, order):
        return cls("jet", to_fraction(value), int(order))

    def describe(self) -> str:
        if self.kind == "symbolic":
            return "symbolic"
        if self.kind == "numeric":
            return f"numeric({self.value})"
        return f"jet({self.value},{self.order})"

    @classmethod
    def parse(cls, text: str) -> "XMode":
        text = text.strip()
        if text == "symbolic":
            return cls.symbolic()
        if text.startswith("numeric(") and text.endswith(")"):
            return cls.numeric(text[8:-1])
        if text.startswith("jet(") and text.endswith(")"):
            v, o = text[4:-1].split(",")
            return cls.jet(v, int(o))
        return cls.numeric(text)


class Ring:
    """Coefficient ring: ``u``-truncated polynomials in ``u`` and ``x``.

    ``xcap`` bounds the number of ``x`` slots (``xcap + 1``).  In symbolic
    mode the caller passes the series order, since the ``x``-degree of the
    ``z**n`` coefficient of a solution never exceeds ``n``.
    """

    def __init__(self, ucap: int, xmode: XMode | None = None, xcap: int | None = None,
                 backend: str = "exact", prec: int = 256):
        if backend not in ("exact", "arb"):
            raise ValueError(f"unknown backend {backend!r}")
        self.ucap = int(ucap)
        self.xmode = xmode if xmode is not None else XMode.symbolic()
        if self.xmode.kind == "numeric":
            self.xcap = 0
        elif self.xmode.kind == "jet":
            self.xcap = self.xmode.order
        else:
            self.xcap = int(xcap) if xcap is not None else self.ucap
        self.backend = backend
        self.prec = int(prec)
        self._poly = flint.fmpq_poly if backend == "exact" else flint.arb_poly

    def __repr__(self):
        return (f"Ring(ucap={self.ucap}, x={self.xmode.describe()}, xcap={self.xcap}, "
                f"backend={self.backend!r}, prec={self.prec})")

    def __eq__(self, other):
        return (isinstance(other, Ring) and self.ucap == other.ucap and self.xmode == other.xmode
                and self.xcap == other.xcap and self.backend == other.backend
                and (self.backend == "exact" or self.prec == other.prec))

    def __hash__(self):
        return hash((self.ucap, self.xmode, self.xcap, self.backend))

    def with_caps(self, ucap=None, xcap=None) -> "Ring":
        return Ring(self.ucap if ucap is None else ucap, self.xmode,
                    self.xcap if xcap is None else xcap, self.backend, self.prec)

    @contextlib.contextmanager
    def context(self):
        """Working precision for ball arithmetic (a no-op for exact rings)."""
        if self.backend == "arb":
            with flint.ctx.workprec(self.prec):
                yield
        else:
            yield

    # -- scalars -----------------------------------------------------------
    def scalar(self, value):
        if self.backend == "exact":
            return _fmpq(value)
        if isinstance(value, flint.arb):
            return value
        f = to_fraction(value)
        with flint.ctx.workprec(self.prec):
            return flint.arb(f.numerator) / f.denominator

    def upoly(self, coeffs: Sequence) -> object:
        return self._poly([self.scalar(c) for c in coeffs])

    # -- canonical elements --------------------------------------------------
    def zero(self) -> "CoeffPoly":
        return CoeffPoly(self, ())

    def const(self, value) -> "CoeffPoly":
        c = self.scalar(value)
        return CoeffPoly(self, (self._poly([c]),))

    def one(self) -> "CoeffPoly":
        return self.const(1)

    def u(self, power: int = 1) -> "CoeffPoly":
        if power > self.ucap:
            return self.zero()
        return CoeffPoly(self, (self._poly([0] * power + [1]),))

    def x(self) -> "CoeffPoly":
        kind = self.xmode.kind
        if kind == "numeric":
            return self.const(self.xmode.value)
        one = self._poly([1])
        base = self._poly([self.scalar(self.xmode.value)]) if kind == "jet" else self._poly([])
        if self.xcap < 1:
            return CoeffPoly(self, (base,))
        return CoeffPoly(self, (base, one))

    def from_terms(self, terms: Mapping[tuple[int, int], object]) -> "CoeffPoly":
        """Build from ``{(deg_u, deg_x): value}``; only valid in symbolic mode for ``deg_x > 0``."""
        width = 0
        for (du, dx), _ in terms.items():
            if du < 0 or dx < 0:
                raise ValueError("negative exponent in coefficient polynomial")
            width = max(width, dx + 1)
        if width > 1 and self.xmode.kind != "symbolic":
            raise ValueError("x-dependent terms need a symbolic x ring")
        cols = [[0] * (self.ucap + 1) for _ in range(min(width, self.xcap + 1))]
        for (du, dx), v in terms.items():
            if du <= self.ucap and dx <= self.xcap:
                cols[dx][du] = v
        return CoeffPoly(self, tuple(self.upoly(c) for c in cols))._trim()


class CoeffPoly:
    """Polynomial in ``u`` (capped) and ``x`` (slot per ``x`` power)."""

    __slots__ = ("ring", "slots")

    def __init__(self, ring: Ring, slots: tuple):
        self.ring = ring
        self.slots = slots

    def _trim(self) -> "CoeffPoly":
        s = self.slots
        k = len(s)
        while k and s[k - 1].length() == 0:
            k -= 1
        if k != len(s):
            return CoeffPoly(self.ring, s[:k])
        return self

    def is_zero(self) -> bool:
        return all(p.length() == 0 for p in self.slots)

    def __add__(self, other: "CoeffPoly") -> "CoeffPoly":
        a, b = self.slots, other.slots
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, p in enumerate(b):
            out[i] = out[i] + p
        return CoeffPoly(self.ring, tuple(out))._trim()

    def __sub__(self, other: "CoeffPoly") -> "CoeffPoly":
        return self + (-other)

    def __neg__(self) -> "CoeffPoly":
        return CoeffPoly(self.ring, tuple(-p for p in self.slots))

    def scale(self, c) -> "CoeffPoly":
        c = self.ring.scalar(c)
        return CoeffPoly(self.ring, tuple(p * c for p in self.slots))._trim()

    def __mul__(self, other: "CoeffPoly") -> "CoeffPoly":
        return self.mul_trunc(other, self.ring.ucap, self.ring.xcap)

    def mul_trunc(self, other: "CoeffPoly", ucap: int, xcap: int) -> "CoeffPoly":
        """Product keeping ``u``-degrees ``<= ucap`` and ``x`` slots ``<= xcap``."""
        a, b = self.slots, other.slots
        if not a or not b or ucap < 0:
            return CoeffPoly(self.ring, ())
        ring = self.ring
        n = ucap + 1
        width = min(len(a) + len(b) - 1, xcap + 1)
        exact = ring.backend == "exact"
        if width == 1:
            p = a[0].mul_low(b[0], n) if exact else (a[0] * b[0]).truncate(n)
            return CoeffPoly(ring, (p,))._trim()
        out = [None] * width
        for i, pa in enumerate(a):
            if i >= width:
                break
            if pa.length() == 0:
                continue
            for j, pb in enumerate(b):
                k = i + j
                if k >= width:
                    break
                if pb.length() == 0:
                    continue
                prod = pa.mul_low(pb, n) if exact else (pa * pb).truncate(n)
                out[k] = prod if out[k] is None else out[k] + prod
        zero = ring._poly([])
        return CoeffPoly(ring, tuple(zero if p is None else p for p in out))._trim()

    def truncate(self, ucap: int, xcap: int | None = None) -> "CoeffPoly":
        """Drop ``u``-degrees above ``ucap`` (and ``x`` slots above ``xcap``)."""
        slots = self.slots if xcap is None else self.slots[: xcap + 1]
        if ucap < 0:
            return CoeffPoly(self.ring, ())
        n = ucap + 1
        if all(p.length() <= n for p in slots) and len(slots) == len(self.slots):
            return self
        return CoeffPoly(self.ring, tuple(p.truncate(n) for p in slots))._trim()

    def shift_u(self, k: int) -> "CoeffPoly":
        """``k > 0`` multiplies by ``u**k``; ``k < 0`` drops the low coefficients (discrete derivative)."""
        if k == 0:
            return self
        n = self.ring.ucap + 1
        if k > 0:
            return CoeffPoly(self.ring, tuple(p.left_shift(k).truncate(n) for p in self.slots))._trim()
        return CoeffPoly(self.ring, tuple(p.right_shift(-k) for p in self.slots))._trim()

    def at_u0(self) -> "CoeffPoly":
        """Constant part in ``u`` (an ``x``-polynomial)."""
        return CoeffPoly(self.ring, tuple(p.truncate(1) for p in self.slots))._trim()

    def u_coeff(self, j: int) -> "CoeffPoly":
        return self.shift_u(-j).at_u0() if j else self.at_u0()

    def constant(self):
        """Scalar coefficient of ``u**0 x**0`` (``x - x0`` in jet mode)."""
        if not self.slots or self.slots[0].length() == 0:
            return self.ring.scalar(0)
        return self.slots[0].coeffs()[0]

    def inverse(self) -> "CoeffPoly":
        """Inverse as a power series in ``u`` and ``x``, truncated at the caps."""
        c0 = self.constant()
        if c0 == 0 or (self.ring.backend == "arb" and c0.contains(0)):
            raise NonInvertibleSeries("coefficient polynomial has no unit constant term")
        ring = self.ring
        n = ring.ucap + 1
        inv0 = _useries_inverse(self.slots[0], n, ring)
        out = [inv0]
        for k in range(1, ring.xcap + 1):
            acc = None
            for i in range(1, min(k, len(self.slots) - 1) + 1):
                if self.slots[i].length() == 0:
                    continue
                term = _mul_low(self.slots[i], out[k - i], n, ring)
                acc = term if acc is None else acc + term
            if acc is None:
                if len(self.slots) <= 1:
                    break
                out.append(ring._poly([]))
                continue
            out.append(-_mul_low(acc, inv0, n, ring))
        return CoeffPoly(ring, tuple(out))._trim()

    def terms(self) -> dict[tuple[int, int], object]:
        out = {}
        for dx, p in enumerate(self.slots):
            for du, c in enumerate(p.coeffs()):
                if _nonzero(c):
                    out[(du, dx)] = c
        return out

    def u_degree(self) -> int:
        return max((p.degree() for p in self.slots), default=-1)

    def x_degree(self) -> int:
        return len(self._trim().slots) - 1

    def evaluate_u(self, uval):
        """Evaluate at a numeric ``u``; returns a list over ``x`` slots."""
        out = []
        for p in self.slots:
            acc = 0
            for c in reversed(p.coeffs()):
                acc = acc * uval + c
            out.append(acc)
        return out

    def __eq__(self, other):
        if not isinstance(other, CoeffPoly):
            return NotImplemented
        a, b = self._trim().slots, other._trim().slots
        return len(a) == len(b) and all(p == q for p, q in zip(a, b))

    def __repr__(self):
        parts = []
        for (du, dx), c in sorted(self.terms().items()):
            mono = "".join(f"*u^{du}" if du > 1 else ("*u" if du == 1 else "") for _ in [0])
            mono += f"*x^{dx}" if dx > 1 else ("*x" if dx == 1 else "")
            parts.append(f"{c}{mono}")
        return " + ".join(parts) if parts else "0"


def _nonzero(c) -> bool:
    if isinstance(c, flint.arb):
        return not (c.is_exact() and c.mid() == 0)
    return c != 0


def _mul_low(a, b, n, ring):
    if ring.backend == "exact":
        return a.mul_low(b, n)
    return (a * b).truncate(n)


def _useries_inverse(p, n, ring):
    """Inverse of a univariate ``u``-polynomial as a series mod ``u**n`` (Newton iteration)."""
    coeffs = p.coeffs()
    c0 = coeffs[0]
    inv = ring._poly([1 / c0]) if ring.backend == "arb" else ring._poly([flint.fmpq(1) / c0])
    prec = 1
    two = ring._poly([2])
    while prec < n:
        prec = min(2 * prec, n)
        inv = _mul_low(inv, two - _mul_low(p.truncate(prec), inv, prec, ring), prec, ring)
    return inv.truncate(n)


class TruncatedSeries:
    """Series in ``z`` known modulo ``z**(order+1)``."""

    __slots__ = ("ring", "order", "coeffs")

    def __init__(self, ring: Ring, order: int, coeffs: Sequence[CoeffPoly] | None = None):
        self.ring = ring
        self.order = int(order)
        cs = list(coeffs) if coeffs is not None else []
        if len(cs) > self.order + 1:
            cs = cs[: self.order + 1]
        while len(cs) < self.order + 1:
            cs.append(ring.zero())
        self.coeffs = cs

    # -- constructors ----------------------------------------------------------
    @classmethod
    def zero(cls, ring, order):
        return cls(ring, order)

    @classmethod
    def const(cls, ring, order, c: CoeffPoly | object):
        c = c if isinstance(c, CoeffPoly) else ring.const(c)
        return cls(ring, order, [c])

    @classmethod
    def z(cls, ring, order, power: int = 1):
        cs = [ring.zero()] * (power + 1)
        cs[power] = ring.one()
        return cls(ring, order, cs)

    @classmethod
    def from_terms(cls, ring, order, terms: Mapping[tuple[int, int, int], object]):
        """``{(deg_z, deg_u, deg_x): value}``."""
        buckets: dict[int, dict] = {}
        for (dz, du, dx), v in terms.items():
            if dz <= order:
                buckets.setdefault(dz, {})[(du, dx)] = v
        return cls(ring, order, [ring.from_terms(buckets.get(n, {})) for n in range(order + 1)])

    def copy(self):
        return TruncatedSeries(self.ring, self.order, list(self.coeffs))

    # -- arithmetic --------------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, TruncatedSeries):
            raise TypeError("expected a TruncatedSeries")
        if self.ring.backend != other.ring.backend:
            raise ValueError("backend mismatch")

    def __add__(self, other):
        if not isinstance(other, TruncatedSeries):
            other = TruncatedSeries.const(self.ring, self.order, other)
        self._check(other)
        n = min(self.order, other.order)
        return TruncatedSeries(self.ring, n, [self.coeffs[i] + other.coeffs[i] for i in range(n + 1)])

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(self.ring, self.order, [-c for c in self.coeffs])

    def __sub__(self, other):
        if not isinstance(other, TruncatedSeries):
            other = TruncatedSeries.const(self.ring, self.order, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            return self.scale(other)
        self._check(other)
        n = min(self.order, other.order)
        a, b = self.coeffs, other.coeffs
        nz_a = [i for i in range(n + 1) if not a[i].is_zero()]
        nz_b = [j for j in range(n + 1) if not b[j].is_zero()]
        out = [self.ring.zero() for _ in range(n + 1)]
        with self.ring.context():
            for i in nz_a:
                for j in nz_b:
                    if i + j > n:
                        break
                    out[i + j] = out[i + j] + a[i] * b[j]
        return TruncatedSeries(self.ring, n, out)

    def __rmul__(self, other):
        return self.scale(other)

    def scale(self, c):
        if isinstance(c, CoeffPoly):
            return TruncatedSeries(self.ring, self.order, [x * c for x in self.coeffs])
        return TruncatedSeries(self.ring, self.order, [x.scale(c) for x in self.coeffs])

    def inverse(self):
        a = self.coeffs
        try:
            inv0 = a[0].inverse()
        except NonInvertibleSeries:
            raise NonInvertibleSeries("series has no invertible constant term") from None
        out = [inv0]
        with self.ring.context():
            for n in range(1, self.order + 1):
                acc = self.ring.zero()
                for i in range(1, n + 1):
                    if not a[i].is_zero():
                        acc = acc + a[i] * out[n - i]
                out.append(-(acc * inv0))
        return TruncatedSeries(self.ring, self.order, out)

    def __truediv__(self, other):
        if not isinstance(other, TruncatedSeries):
            return self.scale(Fraction(1) / to_fraction(other))
        self._check(other)
        n = min(self.order, other.order)
        b = other.coeffs
        try:
            inv0 = b[0].inverse()
        except NonInvertibleSeries:
            raise NonInvertibleSeries("division by a series with zero unit part") from None
        out = []
        with self.ring.context():
            for k in range(n + 1):
                acc = self.coeffs[k]
                for i in range(1, k + 1):
                    if not b[i].is_zero():
                        acc = acc - b[i] * out[k - i]
                out.append(acc * inv0)
        return TruncatedSeries(self.ring, n, out)

    def __pow__(self, e: int):
        if e < 0:
            return self.inverse() ** (-e)
        result = TruncatedSeries.const(self.ring, self.order, 1)
        base = self
        while e:
            if e & 1:
                result = result * base
            e >>= 1
            if e:
                base = base * base
        return result

    def delta(self, k: int = 1):
        return discrete_delta(self, k)

    def mul_u(self, k: int = 1):
        return TruncatedSeries(self.ring, self.order, [c.shift_u(k) for c in self.coeffs])

    def shift_z(self, k: int = 1):
        """Multiply by ``z**k``."""
        return TruncatedSeries(self.ring, self.order, [self.ring.zero()] * k + self.coeffs[: self.order + 1 - k])

    def truncate(self, order: int):
        return TruncatedSeries(self.ring, min(order, self.order), self.coeffs[: order + 1])

    def at_u0(self):
        return TruncatedSeries(self.ring, self.order, [c.at_u0() for c in self.coeffs])

    def u_coeff(self, j: int):
        return TruncatedSeries(self.ring, self.order, [c.u_coeff(j) for c in self.coeffs])

    def valuation(self) -> int:
        """Index of the first nonzero coefficient (``order + 1`` if none)."""
        for i, c in enumerate(self.coeffs):
            if not c.is_zero():
                return i
        return self.order + 1

    def is_zero(self) -> bool:
        return self.valuation() > self.order

    def coefficient(self, n: int, j: int | None = None, k: int | None = None):
        c = self.coeffs[n]
        if j is None:
            return c
        terms = c.terms()
        if k is None:
            k = 0
        return terms.get((j, k), self.ring.scalar(0))

    def terms(self) -> dict[tuple[int, int, int], object]:
        out = {}
        for n, c in enumerate(self.coeffs):
            for (du, dx), v in c.terms().items():
                out[(n, du, dx)] = v
        return out

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        n = min(self.order, other.order)
        return all(self.coeffs[i] == other.coeffs[i] for i in range(n + 1))

    def __repr__(self):
        head = " + ".join(f"({c})*z^{n}" for n, c in enumerate(self.coeffs[:6]) if not c.is_zero())
        return f"TruncatedSeries[{self.ring.backend}, N={self.order}]({head} + ...)"


def series_arith(a: TruncatedSeries, b: TruncatedSeries, op: str) -> TruncatedSeries:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown op {op!r}")


def discrete_delta(a: TruncatedSeries, k: int = 1) -> TruncatedSeries:
    """``sum_{i>=k} a_i(z) u**(i-k)``: drop the first ``k`` coefficients in ``u`` and shift down."""
    if k < 0:
        raise ValueError("order of the discrete derivative must be non-negative")
    if k == 0:
        return a
    return TruncatedSeries(a.ring, a.order, [c.shift_u(-k) for c in a.coeffs])


def eval_rational_expr(expr, bindings: Mapping[str, TruncatedSeries], ring: Ring | None = None,
                       order: int | None = None) -> TruncatedSeries:
    """Evaluate a :class:`~singpert.model.RationalExpr` in the truncated-series ring.

    ``bindings`` maps variable names (``y0``, ``y1``, ...) to series; ``z``,
    ``u`` and ``x`` are supplied from the ring unless bound explicitly.
    """
    from .model import Add, Div, Mul, Neg, Num, Pow, Sub, Var

    if ring is None or order is None:
        some = next(iter(bindings.values()))
        ring = ring or some.ring
        order = some.order if order is None else order
    cache: dict = {}

    def ev(e):
        key = id(e)
        if key in cache:
            return cache[key][1]
        if isinstance(e, Num):
            r = TruncatedSeries.const(ring, order, e.value)
        elif isinstance(e, Var):
            if e.name in bindings:
                r = bindings[e.name]
            elif e.name == "z":
                r = TruncatedSeries.z(ring, order)
            elif e.name == "u":
                r = TruncatedSeries.const(ring, order, ring.u())
            elif e.name == "x":
                r = TruncatedSeries.const(ring, order, ring.x())
            else:
                raise KeyError(f"unbound variable {e.name!r}")
        elif isinstance(e, Add):
            r = ev(e.left) + ev(e.right)
        elif isinstance(e, Sub):
            r = ev(e.left) - ev(e.right)
        elif isinstance(e, Mul):
            r = ev(e.left) * ev(e.right)
        elif isinstance(e, Neg):
            r = -ev(e.operand)
        elif isinstance(e, Div):
            num, den = ev(e.left), ev(e.right)
            try:
                r = num / den
            except NonInvertibleSeries as exc:
                raise NonInvertibleSeries(f"denominator {e.right} is not invertible", expr=e.right) from exc
        elif isinstance(e, Pow):
            base = ev(e.base)
            try:
                r = base ** e.exponent
            except NonInvertibleSeries as exc:
                raise NonInvertibleSeries(f"{e.base} is not invertible", expr=e.base) from exc
        else:
            raise TypeError(f"not an expression node: {e!r}")
        cache[key] = (e, r)
        return r

    with ring.context():
        return ev(expr)


# ---------------------------------------------------------------------------
# Laurent series in s = z**(1/3)
# ---------------------------------------------------------------------------

class LaurentSeries:
    """``s**s_shift * u**u_shift * body`` where ``body`` is a series in ``s``.

    Fractional powers of ``z`` are handled by the global substitution
    ``z = s**3``; a series in ``z`` enters through :meth:`from_z_series`,
    and leaves through :meth:`to_z_series` once every ``s``-exponent is a
    multiple of three.  ``order`` is the last known absolute ``s``-exponent.
    """

    __slots__ = ("body", "s_shift", "u_shift")

    def __init__(self, body: TruncatedSeries, s_shift: int = 0, u_shift: int = 0):
        self.body = body
        self.s_shift = s_shift
        self.u_shift = u_shift

    @property
    def ring(self):
        return self.body.ring

    @property
    def order(self) -> int:
        return self.body.order + self.s_shift

    @classmethod
    def from_z_series(cls, a: TruncatedSeries, s_order: int | None = None):
        s_order = 3 * a.order + 2 if s_order is None else s_order
        cs = [a.ring.zero() for _ in range(s_order + 1)]
        for n, c in enumerate(a.coeffs):
            if 3 * n <= s_order:
                cs[3 * n] = c
        return cls(TruncatedSeries(a.ring, s_order, cs))

    @classmethod
    def monomial(cls, ring, s_order: int, s_exp: int, u_exp: int, coeff=1):
        body = TruncatedSeries.const(ring, s_order - s_exp, ring.const(coeff))
        return cls(body, s_exp, u_exp)

    def _aligned(self, other):
        s = min(self.s_shift, other.s_shift)
        uu = min(self.u_shift, other.u_shift)
        order = min(self.order, other.order)
        return self._rebase(s, uu, order), other._rebase(s, uu, order), s, uu

    def _rebase(self, s, uu, order):
        b = self.body
        ds, du = self.s_shift - s, self.u_shift - uu
        if du:
            b = TruncatedSeries(b.ring, b.order, [c.shift_u(du) for c in b.coeffs])
        cs = [b.ring.zero()] * ds + b.coeffs
        return TruncatedSeries(b.ring, order - s, cs)

    def __add__(self, other):
        a, b, s, uu = self._aligned(other)
        return LaurentSeries(a + b, s, uu)

    def __sub__(self, other):
        a, b, s, uu = self._aligned(other)
        return LaurentSeries(a - b, s, uu)

    def __neg__(self):
        return LaurentSeries(-self.body, self.s_shift, self.u_shift)

    def __mul__(self, other):
        if not isinstance(other, LaurentSeries):
            return LaurentSeries(self.body * other, self.s_shift, self.u_shift)
        s = self.s_shift + other.s_shift
        order = min(self.order + other.s_shift, other.order + self.s_shift)
        a = self.body.truncate(order - s)
        b = other.body.truncate(order - s)
        return LaurentSeries(a * b, s, self.u_shift + other.u_shift)

    def scale(self, c):
        return LaurentSeries(self.body.scale(c), self.s_shift, self.u_shift)

    def times_monomial(self, s_exp: int = 0, u_exp: int = 0):
        return LaurentSeries(self.body, self.s_shift + s_exp, self.u_shift + u_exp)

    def terms(self) -> dict[tuple[int, int, int], object]:
        """``{(s_exp, u_exp, x_slot): value}`` with absolute exponents."""
        out = {}
        for (n, du, dx), v in self.body.terms().items():
            out[(n + self.s_shift, du + self.u_shift, dx)] = v
        return out

    def project_u(self, min_u: int) -> "LaurentSeries":
        """Keep only terms with absolute ``u``-exponent ``>= min_u``."""
        drop = min_u - self.u_shift
        if drop <= 0:
            return self
        ring = self.ring
        cs = []
        for c in self.body.coeffs:
            kept = c.shift_u(-drop).shift_u(drop) if drop <= ring.ucap else ring.zero()
            cs.append(kept)
        return LaurentSeries(TruncatedSeries(ring, self.body.order, cs), self.s_shift, self.u_shift)

    def to_z_series(self, z_order: int | None = None) -> TruncatedSeries:
        """Return the equivalent series in ``z``; every exponent must be integral and non-negative."""
        if self.u_shift < 0:
            for (se, ue, _), v in self.terms().items():
                if ue < 0 and v != 0:
                    raise ValueError("negative u-exponent survives in Laurent series")
        ring = self.ring
        out: dict[int, CoeffPoly] = {}
        for n, c in enumerate(self.body.coeffs):
            if c.is_zero():
                continue
            e = n + self.s_shift
            if e % 3:
                raise FractionalExponent(f"term with z-exponent {e}/3")
            if e < 0:
                raise ValueError("negative z-exponent survives in Laurent series")
            c = c.shift_u(self.u_shift) if self.u_shift >= 0 else c.shift_u(self.u_shift)
            out[e // 3] = out.get(e // 3, ring.zero()) + c
        top = self.order // 3 if z_order is None else z_order
        return TruncatedSeries(ring, top, [out.get(n, ring.zero()) for n in range(top + 1)])


class FractionalExponent(ValueError):
    """A ``z``-exponent that is not an integer survived an assembly step."""


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def _scalar_to_str(ring: Ring, c) -> str:
    if ring.backend == "exact":
        f = to_fraction(c)
        return f"{f.numerator}/{f.denominator}"
    digits = int(ring.prec * 0.30103) + 3
    return c.mid().str(digits, radius=False)


def series_to_json(s: TruncatedSeries, header: Mapping | None = None) -> dict:
    ring = s.ring
    coeffs = []
    for c in s.coeffs:
        coeffs.append([[du, dx, _scalar_to_str(ring, v)] for (du, dx), v in sorted(c.terms().items())])
    doc = {
        "order": s.order,
        "backend": ring.backend,
        "ucap": ring.ucap,
        "x": ring.xmode.describe(),
        "xcap": ring.xcap,
        "coeffs": coeffs,
    }
    if ring.backend == "arb":
        doc["precision_bits"] = ring.prec
    if header:
        doc = {"header": dict(header), **doc}
    return doc


def series_from_json(doc: Mapping | str) -> TruncatedSeries:
    if isinstance(doc, str):
        doc = json.loads(doc)
    ring = Ring(doc.get("ucap", 0), XMode.parse(doc.get("x", "symbolic")), doc.get("xcap"),
                doc.get("backend", "exact"), doc.get("precision_bits", 256))
    if doc.get("ucap") is None:
        top = max((du for row in doc["coeffs"] for du, _, _ in row), default=0)
        ring = ring.with_caps(ucap=top)
    terms = {}
    for n, row in enumerate(doc["coeffs"]):
        for du, dx, v in row:
            terms[(n, du, dx)] = Fraction(v) if ring.backend == "exact" else _arb_from_str(v)
    if ring.backend == "exact":
        return TruncatedSeries.from_terms(ring, doc["order"], terms)
    with ring.context():
        return TruncatedSeries.from_terms(ring, doc["order"], terms)


def _arb_from_str(text: str):
    return flint.arb(text)
