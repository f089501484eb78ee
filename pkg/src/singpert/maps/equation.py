"""Functional equations for near-triangulations with a marked pattern.

Counting convention (Tutte): ``u`` marks root valency minus 3 and ``z``
marks (interior edges - valency + 3)/3, i.e. the number of interior
vertices.  The unmarked equation is ``T = 1 + z ΔT + z T^2/(1 - u T)``.

Symbolic work is done in sympy with ``y_k`` standing for ``Δ^k T`` and
``s = z^(1/3)``; coefficients ``t_i = [u^i] T`` produced by the ``u``-degree
projection are rewritten through ``t_i = y_i - u y_{i+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import sympy as sp

from ..model import DdeModel, from_sympy, parse_model, to_sympy
from ..polysys import MultiPoly
from ..series import TruncatedSeries, discrete_delta
from .rooted import RootedMap

__all__ = [
    "PatternSpec", "FractionalExponentResidue", "MultifanSeries", "multifan_series", "pattern_term",
    "build_pattern_equation", "diamond_model", "tutte_model", "glue_exponent", "DIAMOND_TEXT",
    "models_equal", "displayed_v4_model", "multifan_symbolic", "pattern_poly", "pattern_term_series",
    "superedge_series", "multifan_core",
]

u, s, w, x, z = sp.symbols("u s w x z")


def _y(k: int) -> sp.Symbol:
    return sp.Symbol(f"y{k}")


def _t(k: int) -> sp.Symbol:
    return sp.Symbol(f"t{k}")


class FractionalExponentResidue(ValueError):
    def __init__(self, message, terms=None):
        super().__init__(message)
        self.terms = terms


@dataclass(frozen=True)
class PatternSpec:
    """Pattern data: interior edges ``e``, root valency ``v`` and the multiplier ``r``.

    ``r`` is the number of distinct rotations of the pattern, i.e. ``v``
    divided by the number of rotations that map it onto itself.  With
    occurrences counted as embeddings up to those rotations, this is the
    number of ways a given occurrence can sit on the root edge.
    """
    e: int
    v: int
    r: int = 1
    explicit_map: RootedMap | None = None

    def __post_init__(self):
        if self.v < 3:
            raise ValueError("root face valency must be at least 3")
        if self.r < 1:
            raise ValueError("r must be positive")
        if (self.e - self.v) % 3:
            raise ValueError("e - v must be divisible by 3 for a near-triangulation")
        if self.explicit_map is not None:
            pm = self.explicit_map
            if pm.root_valency != self.v or pm.interior_edges != self.e:
                raise ValueError("explicit map does not match (e, v)")

    @classmethod
    def from_map(cls, p: RootedMap, r: int | None = None) -> "PatternSpec":
        from .patterns import rotational_symmetries
        if r is None:
            r = p.root_valency // rotational_symmetries(p)
        return cls(p.interior_edges, p.root_valency, r, p)


def glue_exponent(v1: int, i1: int, v2: int, i2: int) -> tuple[int, Fraction]:
    """``(u, z)`` exponents gained when gluing two near-triangulations along a boundary edge.

    Returns the extra ``u`` power (always 1) and the ``z`` exponent of the
    glued map minus the sum of the parts' exponents (always 0).
    """
    v, i = v1 + v2 - 2, i1 + i2 + 1
    zexp = lambda vv, ii: Fraction(ii - vv + 3, 3)
    return (v - 3) - (v1 - 3) - (v2 - 3), zexp(v, i) - zexp(v1, i1) - zexp(v2, i2)


# ---------------------------------------------------------------------------
# symbolic construction
# ---------------------------------------------------------------------------

def _wmul(a: dict, b: dict, cap: int) -> dict:
    out: dict = {}
    for i, ai in a.items():
        for j, bj in b.items():
            if i + j <= cap:
                out[i + j] = out[i + j] + ai * bj if i + j in out else ai * bj
    return out


def _wadd(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out[k] + v if k in out else v
    return out


class _RF:
    """``num / (1 - u y0)^p`` with ``num`` a MultiPoly."""

    __slots__ = ("num", "p")

    def __init__(self, num: MultiPoly, p: int = 0):
        self.num, self.p = num, p

    def _at(self, p):
        return self.num * _D() ** (p - self.p) if p > self.p else self.num

    def __add__(self, o):
        p = max(self.p, o.p)
        return _RF(self._at(p) + o._at(p), p)

    def __sub__(self, o):
        p = max(self.p, o.p)
        return _RF(self._at(p) - o._at(p), p)

    def __mul__(self, o):
        if not isinstance(o, _RF):
            o = _RF(o if isinstance(o, MultiPoly) else MultiPoly.const(o, _NAMES0))
        return _RF(self.num * o.num, self.p + o.p)

    def is_zero(self):
        return self.num.is_zero()


_NAMES0 = ("u",)


def _v(name: str) -> MultiPoly:
    return MultiPoly.var(name)


def _D() -> MultiPoly:
    return 1 - _v("u") * _v("y0")


def multifan_polys(cap: int) -> dict:
    """``[w^k] F`` for ``k <= cap`` with ``F = A/(1 - u A/(1-uT)) - wT``, as ``num/(1-u y0)^p``.

    ``A = wT + sum_{k>=0} w^(k+2) u^k Δ^k T``: every piece incident to the
    pattern is weighted as if it were the only one.
    """
    u_ = _v("u")
    T = _RF(_v("y0"))
    A = {1: T, 2: T}
    for k in range(1, cap - 1):
        A[k + 2] = _RF(u_ ** k * _v(f"y{k}"))
    F = _chains(A, A, _RF(u_, 1), cap)
    F[1] = F[1] - T
    return {k: c for k, c in F.items() if not c.is_zero()}


def _chains(end: dict, mid: dict, glue, cap: int) -> dict:
    # a lone piece, or end (glue mid)* glue end
    out = dict(end)
    chain = {k: c * glue for k, c in end.items()}
    step = {k: c * glue for k, c in mid.items()}
    while chain:
        out = _wadd(out, _wmul(chain, end, cap))
        chain = _wmul(chain, step, cap - 1)
    return out


def _t_poly(i: int) -> MultiPoly:
    # [u^i] T = Δ^i T - u Δ^(i+1) T
    return _v(f"y{i}") - _v("u") * _v(f"y{i + 1}")


def _compose(coeffs: dict, series: dict, cap: int) -> dict:
    """``sum_k coeffs[k] series^k`` truncated at ``w^cap``; ``series`` has no constant term."""
    out: dict = {}
    power = {0: _RF(MultiPoly.const(1, _NAMES0))}
    for k in range(1, max(coeffs, default=0) + 1):
        power = _wmul(power, series, cap)
        if k in coeffs:
            out = _wadd(out, {d: coeffs[k] * c for d, c in power.items()})
    return out


def superedge_series(cap: int, scale: MultiPoly | None = None) -> dict:
    """``Ω(w) = s w + u sum_{K>=2} t_{K-2} Ω^K`` up to ``w^cap`` (``t_j = [u^j]T``).

    A run of boundary edges of the pattern may be cut off by a single edge
    between two of its vertices; the region behind it is a chordless piece on
    the closing edge whose other sides are again plain edges or such closing
    edges.  ``Ω`` marks one side of a piece: a plain edge or a closed-off run.
    """
    sw = scale if scale is not None else _v("s")
    om = {1: _RF(sw)}
    for _ in range(cap):
        nxt = {1: _RF(sw)}
        powers = _compose({K: _RF(_v("u") * _t_poly(K - 2)) for K in range(2, cap + 1)}, om, cap)
        om = _wadd(nxt, powers)
    return {k: c for k, c in om.items() if not c.is_zero()}


def multifan_core(cap: int) -> dict:
    """Multifan pieces after the closed-off runs are removed, as a series in the side marker ``ω``.

    A lone piece with ``K >= 2`` sides and an outer edge is counted by
    ``u^(K-2) Δ^(K-2) T``.  In a sequence of two or more pieces every piece
    with ``m`` pattern sides also carries a glue edge on each side that is not
    the end of the run, and the end pieces reach the outer face, so each one
    has valency at least ``m + 2`` and is counted by ``u^(m-1) Δ^(m-1) T``.
    """
    u_ = _v("u")
    lone = {K: _RF(u_ ** (K - 2) * _v(f"y{K - 2}")) for K in range(2, cap + 1)}
    piece = {m: _RF(u_ ** (m - 1) * _v(f"y{m - 1}")) for m in range(1, cap + 1)}
    out = _chains(piece, piece, _RF(u_, 1), cap)
    for m in piece:
        out[m] = out[m] - piece[m]
    out = _wadd(out, lone)
    return {k: c for k, c in out.items() if not c.is_zero()}


def _from_poly(p: MultiPoly, extra: dict | None = None) -> sp.Expr:
    syms = {n: sp.Symbol(n) for n in p.names}
    syms.update(extra or {})
    out = sp.Integer(0)
    for mon, c in p.terms().items():
        t = sp.Rational(c.numerator, c.denominator)
        for n, e in zip(p.names, mon):
            if e:
                t *= syms[n] ** int(e)
        out += t
    return out


def multifan_symbolic(cap: int) -> dict:
    """``[w^k] F`` as sympy expressions in ``u`` and ``y_k``."""
    D = 1 - u * _y(0)
    return {k: sp.cancel(_from_poly(c.num) / D ** c.p) for k, c in multifan_polys(cap).items()}


def _truncate_u(p: MultiPoly, L: int) -> MultiPoly:
    if "u" not in p.names:
        return p
    i = p.names.index("u")
    return MultiPoly.from_terms(p.names, {m: c for m, c in p.terms().items() if m[i] <= L})


def _project_u(num: MultiPoly, pw: int, min_u: int) -> MultiPoly:
    """Numerator of ``[u^{>= min_u}](num / D^pw)`` over ``D^pw``, divided by ``u^min_u``.

    ``y_k`` stands for the series ``sum_i t_{k+i} u^i``; the low part is
    rewritten with ``t_i = y_i - u y_{i+1}``.
    """
    L = min_u - 1
    ys = sorted(int(n[1:]) for n in num.variables() if n.startswith("y")) or [0]
    ser = {f"y{k}": sum((_v(f"t{k + i}") * _v("u") ** i for i in range(L + 1)), MultiPoly.const(0, _NAMES0))
           for k in set(ys) | {0}}
    low_num = _truncate_u(num.subs({k: v for k, v in ser.items() if k in num.names}), L)
    # 1/D^pw as a truncated series in u
    uY0 = _v("u") * ser["y0"]
    inv = MultiPoly.const(1, _NAMES0)
    term = MultiPoly.const(1, _NAMES0)
    for _ in range(L):
        term = _truncate_u(term * uY0, L)
        inv = inv + term
    invp = MultiPoly.const(1, _NAMES0)
    for _ in range(pw):
        invp = _truncate_u(invp * inv, L)
    low = _truncate_u(low_num * invp, L)
    tnames = sorted((n for n in low.variables() if n.startswith("t")), key=lambda n: int(n[1:]))
    back = {n: _v(f"y{int(n[1:])}") - _v("u") * _v(f"y{int(n[1:]) + 1}") for n in tnames}
    low_y = low.subs(back) if back else low
    rem = num - low_y * _D() ** pw
    q, r = divmod(rem, _v("u") ** min_u)
    if not r.is_zero():
        raise ArithmeticError("projection remainder is not divisible by the u power")
    return q


def pattern_poly(p: PatternSpec, method: str = "closed") -> tuple[MultiPoly, int, int]:
    """``(num, pw, shift)`` with the pattern term (without ``x - 1``) equal to
    ``r s^shift num / (1 - u y0)^pw`` where ``s = z^(1/3)``.

    ``method="closed"`` uses the decomposition with closed-off runs
    (:func:`superedge_series`, :func:`multifan_core`); ``method="literal"``
    uses :func:`multifan_polys` as it stands.
    """
    if method not in ("closed", "literal"):
        raise ValueError("method must be 'closed' or 'literal'")
    v = p.v
    W = v - 1
    s3 = _v("s") ** 3
    # w -> s^2 w keeps all s exponents non-negative; [w^W] picks up s^(2W)
    if method == "literal":
        F = multifan_polys(W)
        G = {k: _RF(c.num * _v("s") ** (3 * k - 3) * _v("u") ** 3, c.p) for k, c in F.items()}
    else:
        om = superedge_series(W, s3)
        G = {}
        for k, c in _compose(multifan_core(W), om, W).items():
            q, r = divmod(c.num, s3)
            if not r.is_zero():
                raise ArithmeticError("multifan term without a factor z")
            G[k] = _RF(q * _v("u") ** 3, c.p)
    X = _wadd({1: _RF(_v("u") ** 2)}, G)
    total: dict = {}
    power = {0: _RF(MultiPoly.const(1, _NAMES0))}
    for _ in range(W):
        power = _wmul(power, X, W)
        total = _wadd(total, power)
    C = total[W]
    q = _project_u(C.num, C.p, v + 1)
    # r z^((e+v-2)/3) u^(2-v) (z/u^3) u^(v+1) q / s^(2W)
    shift = (p.e + v - 2) + 3 - 2 * W
    return q * p.r, C.p, shift


def pattern_term(p: PatternSpec) -> sp.Expr:
    """``r z^((e+v-2)/3) u^(2-v) N_{v-1}`` (without the factor ``x - 1``) in ``s = z^(1/3)``."""
    num, pw, shift = pattern_poly(p)
    return _from_poly(num) * s ** shift / (1 - u * _y(0)) ** pw


def _to_z(num: MultiPoly, pw: int, shift: int) -> sp.Expr:
    i = num.names.index("s") if "s" in num.names else None
    bad = []
    out = sp.Integer(0)
    for mon, c in num.terms().items():
        se = (int(mon[i]) if i is not None else 0) + shift
        if se % 3:
            bad.append((mon, c))
            continue
        t = sp.Rational(c.numerator, c.denominator) * z ** (se // 3)
        for n, e in zip(num.names, mon):
            if e and n != "s":
                t *= sp.Symbol(n) ** int(e)
        out += t
    if bad:
        raise FractionalExponentResidue("non-integral power of z in the pattern term", bad)
    return out / (1 - u * _y(0)) ** pw


def tutte_model() -> DdeModel:
    return parse_model("order 1; shift x_minus_1; Q = 1 + z*y1 + z*y0^2/(1-u*y0); R = 0;")


def build_pattern_equation(p: PatternSpec, method: str = "closed") -> DdeModel:
    """Model ``T = 1 + zΔT + zT^2/(1-uT) + (x-1) z R`` for the pattern ``p``."""
    if p.v < 4:
        raise ValueError("patterns with root valency 3 are not supported")
    num, pw, shift = pattern_poly(p, method)
    R = sp.factor(sp.cancel(_to_z(num, pw, shift) / z))
    if sp.fraction(R)[1].has(z):
        raise FractionalExponentResidue("pattern term has a negative power of z")
    ys = sorted(int(str(q)[1:]) for q in R.free_symbols if str(q).startswith("y"))
    k = max(ys) if ys else 1
    tm = tutte_model()
    return DdeModel(max(k, 1), tm.Q, from_sympy(R), "x_minus_1", name=f"pattern_e{p.e}_v{p.v}_r{p.r}")


# hard-coded model for the diamond pattern (28 interior edges, root valency 4)
DIAMOND_TEXT = """\
# diamond pattern: 28 interior edges, root face valency 4
order 2;
shift x_minus_1;
Q = 1 + z*y1 + z*y0^2/(1-u*y0);
R = z^8*u + 2*z^9*(y0 + u*y0^2/(1-u*y0)) + 2*z^10*y0*y1/(1-u*y0) + z^10*y0^3/(1-u*y0)^2 + z^10*y2;
"""


def displayed_v4_model(e: int, r: int = 1) -> DdeModel:
    """The hand-expanded valency-4 equation, ``(x-1) z^((e+2)/3) u^-2 F_3``, for any ``e``."""
    if (e + 2) % 3:
        raise FractionalExponentResidue("e + 2 must be divisible by 3")
    a = (e + 2) // 3
    T, D1, D2 = _y(0), _y(1), _y(2)
    F3 = (u ** 3 / z + 2 * u ** 2 * (T + u * T ** 2 / (1 - u * T)) + 2 * z * u ** 2 * T * D1 / (1 - u * T)
          + z * u ** 2 * T ** 3 / (1 - u * T) ** 2 + z * u ** 2 * D2)
    R = sp.factor(sp.cancel(r * z ** a / u ** 2 * F3 / z))
    return DdeModel(2, tutte_model().Q, from_sympy(R), "x_minus_1", name=f"displayed_v4_e{e}")


def diamond_model() -> DdeModel:
    return parse_model(DIAMOND_TEXT, name="diamond")


def models_equal(a: DdeModel, b: DdeModel) -> dict:
    """Structural comparison after normalization (common denominator, expanded numerator)."""
    out = {"order": a.k == b.k, "shift": a.shift == b.shift}
    for part in ("Q", "R"):
        ea, eb = to_sympy(getattr(a, part)), to_sympy(getattr(b, part))
        na, da = sp.fraction(sp.cancel(sp.together(ea)))
        nb, db = sp.fraction(sp.cancel(sp.together(eb)))
        diff = sp.expand(na * db - nb * da)
        out[part] = diff == 0
        if diff != 0:
            out[part + "_difference"] = str(sp.factor(sp.cancel((ea - eb))))
    out["equal"] = all(out[k] for k in ("order", "shift", "Q", "R"))
    return out


# ---------------------------------------------------------------------------
# series-level multifan generating function
# ---------------------------------------------------------------------------

@dataclass
class MultifanSeries:
    coeffs: dict          # w-degree -> TruncatedSeries
    w_cap: int

    def __getitem__(self, k: int) -> TruncatedSeries:
        return self.coeffs[k]


def _series_chains(end: dict, mid: dict, glue, cap: int) -> dict:
    out = dict(end)
    chain = {k: c * glue for k, c in end.items()}
    step = {k: c * glue for k, c in mid.items()}
    while chain:
        out = _wadd(out, _wmul(chain, end, cap))
        chain = _wmul(chain, step, cap - 1)
    return out


def multifan_series(T: TruncatedSeries, w_cap: int) -> MultifanSeries:
    """Multifan components ``u^3 z^-1 F(z w)`` up to ``w^w_cap``, computed on a solved ``T``.

    Independent of the symbolic route: closed-off runs, pieces and gluing are
    expanded directly in the truncated-series ring.
    """
    ring, order = T.ring, T.order
    one = TruncatedSeries.const(ring, order, 1)
    D = {k: discrete_delta(T, k) for k in range(w_cap + 1)}
    t = {k: T.u_coeff(k) for k in range(w_cap)}
    zk = lambda k: TruncatedSeries.z(ring, order, k) if k <= order else TruncatedSeries.zero(ring, order)
    # omega = w + u sum_K t_{K-2} z^(K-1) omega^K
    om = {1: one}
    for _ in range(w_cap):
        nxt = {1: one}
        power = {0: one}
        for K in range(1, w_cap + 1):
            power = _wmul(power, om, w_cap)
            if K >= 2:
                nxt = _wadd(nxt, {d: (t[K - 2] * zk(K - 1)).mul_u(1) * c for d, c in power.items()})
        om = nxt
    lone = {K: D[K - 2].mul_u(K - 2) for K in range(2, w_cap + 1)}
    piece = {m: D[m - 1].mul_u(m - 1) for m in range(1, w_cap + 1)}
    glue = (one - T.mul_u(1)).inverse().mul_u(1)
    core = _series_chains(piece, piece, glue, w_cap)
    for m in piece:
        core[m] = core[m] - piece[m]
    core = _wadd(core, lone)
    out: dict = {}
    power = {0: one}
    for m in range(1, w_cap + 1):
        power = _wmul(power, om, w_cap)
        if m in core:
            out = _wadd(out, {d: (core[m] * zk(m - 1)).mul_u(3) * c for d, c in power.items()})
    zero = TruncatedSeries.zero(ring, order)
    return MultifanSeries({k: out.get(k, zero) for k in range(1, w_cap + 1)}, w_cap)


def pattern_term_series(p: PatternSpec, T: TruncatedSeries) -> TruncatedSeries:
    """The pattern term (without ``x - 1``) evaluated on ``T`` through :func:`multifan_series`."""
    W = p.v - 1
    mf = multifan_series(T, W)
    ring, order = T.ring, T.order
    one = TruncatedSeries.const(ring, order, 1)
    X = {k: c for k, c in mf.coeffs.items()}
    X[1] = X[1] + one.mul_u(2)
    total: dict = {}
    power = {0: one}
    for _ in range(W):
        power = _wmul(power, X, W)
        total = _wadd(total, power)
    shift = p.e - p.v + 3
    if shift % 3:
        raise FractionalExponentResidue("non-integral power of z in the pattern term")
    return total[W].mul_u(-(p.v + 1)).shift_z(shift // 3).scale(p.r)
