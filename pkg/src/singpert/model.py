"""Perturbed catalytic equations: expression trees, a small text DSL, hypothesis checks.

A model describes

    F = Q(z, u, y0, y1) + S(x) * z * R(z, u, x, y0, ..., yk)

where ``yj`` stands for the ``j``-th discrete derivative of ``F`` with
respect to ``u`` and ``S(x)`` is ``x - 1`` (shift ``x_minus_1``) or ``x``
(shift ``x_plain``).  ``Q`` is written out in full, including its own powers
of ``z`` and the ``z``-free base term; ``R`` is stored without the leading
``z``, which the solver applies.  Well-foundedness then only asks that ``Q``
does not depend on any ``yj`` at ``z = 0``.

DSL example::

    order 2;
    shift x_plain;
    Q = 1 + z^2*u*y0^2 + z*y1;
    R = y2;
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import networkx as nx
import sympy as sp

__all__ = [
    "RationalExpr", "Num", "Var", "Add", "Sub", "Mul", "Div", "Neg", "Pow",
    "ModelError", "ModelSyntaxError", "UnknownVariable", "OrderMismatch", "NotAffine",
    "DdeModel", "AssumptionReport", "Check", "DependencyReport",
    "parse_expr", "print_expr", "parse_model", "print_model",
    "to_sympy", "from_sympy", "check_assumptions", "dependency_graph",
    "example2_model",
]


# ---------------------------------------------------------------------------
# expression trees
# ---------------------------------------------------------------------------

class RationalExpr:
    """Base class for immutable expression nodes."""

    __slots__ = ()

    def __add__(self, o):
        return Add(self, _lift(o))

    def __radd__(self, o):
        return Add(_lift(o), self)

    def __sub__(self, o):
        return Sub(self, _lift(o))

    def __rsub__(self, o):
        return Sub(_lift(o), self)

    def __mul__(self, o):
        return Mul(self, _lift(o))

    def __rmul__(self, o):
        return Mul(_lift(o), self)

    def __truediv__(self, o):
        return Div(self, _lift(o))

    def __rtruediv__(self, o):
        return Div(_lift(o), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, e):
        return Pow(self, int(e))

    def variables(self) -> set[str]:
        out: set[str] = set()
        stack = [self]
        while stack:
            e = stack.pop()
            if isinstance(e, Var):
                out.add(e.name)
            stack.extend(e.children())
        return out

    def children(self) -> tuple:
        return ()

    def __str__(self):
        return print_expr(self)


def _lift(o) -> RationalExpr:
    if isinstance(o, RationalExpr):
        return o
    return Num(Fraction(o))


@dataclass(frozen=True, eq=True, repr=False)
class Num(RationalExpr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))

    def __repr__(self):
        return f"Num({self.value})"


@dataclass(frozen=True, eq=True, repr=False)
class Var(RationalExpr):
    name: str

    def __repr__(self):
        return f"Var({self.name})"


@dataclass(frozen=True, eq=True, repr=False)
class _Bin(RationalExpr):
    left: RationalExpr
    right: RationalExpr

    def children(self):
        return (self.left, self.right)

    def __repr__(self):
        return f"{type(self).__name__}({self.left!r}, {self.right!r})"


class Add(_Bin):
    pass


class Sub(_Bin):
    pass


class Mul(_Bin):
    pass


class Div(_Bin):
    pass


@dataclass(frozen=True, eq=True, repr=False)
class Neg(RationalExpr):
    operand: RationalExpr

    def children(self):
        return (self.operand,)

    def __repr__(self):
        return f"Neg({self.operand!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Pow(RationalExpr):
    base: RationalExpr
    exponent: int

    def children(self):
        return (self.base,)

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exponent})"


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------

class ModelError(ValueError):
    pass


class ModelSyntaxError(ModelError):
    def __init__(self, message, line=None, column=None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class UnknownVariable(ModelSyntaxError):
    pass


class OrderMismatch(ModelError):
    pass


class NotAffine(ModelError):
    pass


# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^();=])
""", re.VERBOSE)

_VAR_RE = re.compile(r"^(z|u|x|y(0|[1-9][0-9]*))$")


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, col0 = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line, pos - col0 + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            col0 = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, m.start() - col0 + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - col0 + 1))
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok], allowed: set[str] | None = None):
        self.toks = toks
        self.i = 0
        self.allowed = allowed

    @property
    def tok(self):
        return self.toks[self.i]

    def advance(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.tok
        if t.text != text:
            found = t.text or "end of input"
            raise ModelSyntaxError(f"expected {text!r}, found {found!r}", t.line, t.col)
        return self.advance()

    def expr(self):
        left = self.term()
        while self.tok.text in ("+", "-"):
            op = self.advance().text
            right = self.term()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def term(self):
        left = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.advance().text
            right = self.unary()
            if op == "*":
                left = Mul(left, right)
            elif isinstance(left, Num) and isinstance(right, Num):
                if right.value == 0:
                    t = self.toks[self.i - 1]
                    raise ModelSyntaxError("division by zero literal", t.line, t.col)
                left = Num(left.value / right.value)
            else:
                left = Div(left, right)
        return left

    def unary(self):
        if self.tok.text == "-":
            self.advance()
            literal = self.tok.kind == "num"
            operand = self.unary()
            if literal and isinstance(operand, Num):
                return Num(-operand.value)
            return Neg(operand)
        if self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.text == "^":
            self.advance()
            sign = 1
            paren = False
            if self.tok.text == "(":
                self.advance()
                paren = True
            if self.tok.text == "-":
                self.advance()
                sign = -1
            t = self.tok
            if t.kind != "num":
                raise ModelSyntaxError("exponent must be an integer literal", t.line, t.col)
            self.advance()
            if paren:
                self.expect(")")
            return Pow(base, sign * int(t.text))
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(Fraction(int(t.text)))
        if t.kind == "name":
            self.advance()
            if not _VAR_RE.match(t.text) or (self.allowed is not None and t.text not in self.allowed):
                raise UnknownVariable(f"unknown variable {t.text!r}", t.line, t.col)
            return Var(t.text)
        if t.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        found = t.text or "end of input"
        raise ModelSyntaxError(f"unexpected token {found!r}", t.line, t.col)


def parse_expr(text: str) -> RationalExpr:
    p = _Parser(_tokenize(text))
    e = p.expr()
    if p.tok.kind != "eof":
        raise ModelSyntaxError(f"unexpected token {p.tok.text!r}", p.tok.line, p.tok.col)
    return e


# ---------------------------------------------------------------------------
# printer
# ---------------------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e) -> int:
    if isinstance(e, Num):
        return 5
    if isinstance(e, Var):
        return 5
    return _PREC[type(e)]


def print_expr(e: RationalExpr) -> str:
    """Canonical text; ``parse_expr(print_expr(e)) == e`` for parser-produced trees."""
    if isinstance(e, Num):
        v = e.value
        if v.denominator == 1 and v >= 0:
            return str(v.numerator)
        return f"({v.numerator}/{v.denominator})" if v.denominator != 1 else f"({v.numerator})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, (Add, Sub, Mul, Div)):
        p = _prec(e)
        op = {Add: " + ", Sub: " - ", Mul: "*", Div: "/"}[type(e)]
        ls = print_expr(e.left)
        if _prec(e.left) < p:
            ls = f"({ls})"
        rs = print_expr(e.right)
        if _prec(e.right) <= p:
            rs = f"({rs})"
        return ls + op + rs
    if isinstance(e, Neg):
        inner = print_expr(e.operand)
        if isinstance(e.operand, Num) or _prec(e.operand) < 3:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        bs = print_expr(e.base)
        if _prec(e.base) < 5 or (isinstance(e.base, Num) and not bs.startswith("(")
                                 and e.base.value < 0):
            bs = f"({bs})"
        return f"{bs}^{e.exponent}"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# sympy bridge
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _sym(name: str) -> sp.Symbol:
    return sp.Symbol(name)


def to_sympy(e: RationalExpr) -> sp.Expr:
    if isinstance(e, Num):
        return sp.Rational(e.value.numerator, e.value.denominator)
    if isinstance(e, Var):
        return _sym(e.name)
    if isinstance(e, Add):
        return to_sympy(e.left) + to_sympy(e.right)
    if isinstance(e, Sub):
        return to_sympy(e.left) - to_sympy(e.right)
    if isinstance(e, Mul):
        return to_sympy(e.left) * to_sympy(e.right)
    if isinstance(e, Div):
        return to_sympy(e.left) / to_sympy(e.right)
    if isinstance(e, Neg):
        return -to_sympy(e.operand)
    if isinstance(e, Pow):
        return to_sympy(e.base) ** e.exponent
    raise TypeError(f"not an expression: {e!r}")


def _balanced(items: list, op) -> RationalExpr:
    if len(items) == 1:
        return items[0]
    h = (len(items) + 1) // 2
    return op(_balanced(items[:h], op), _balanced(items[h:], op))


def from_sympy(expr: sp.Expr) -> RationalExpr:
    """Convert a rational sympy expression; terms and factors keep sympy's canonical order."""
    expr = sp.sympify(expr)
    if expr.is_Rational:
        return Num(Fraction(int(expr.p), int(expr.q)))
    if expr.is_Symbol:
        if not _VAR_RE.match(expr.name):
            raise UnknownVariable(f"unknown variable {expr.name!r}")
        return Var(expr.name)
    if expr.is_Add:
        terms = list(expr.as_ordered_terms())
        if len(terms) <= 8:
            out = from_sympy(terms[0])
            for t in terms[1:]:
                c, rest = t.as_coeff_Mul()
                if c < 0:
                    out = Sub(out, from_sympy(-t))
                else:
                    out = Add(out, from_sympy(t))
            return out
        # long sums: balanced trees keep the depth logarithmic
        pos = [from_sympy(t) for t in terms if t.as_coeff_Mul()[0] >= 0]
        neg = [from_sympy(-t) for t in terms if t.as_coeff_Mul()[0] < 0]
        if not pos:
            return Neg(_balanced(neg, Add))
        return Sub(_balanced(pos, Add), _balanced(neg, Add)) if neg else _balanced(pos, Add)
    if expr.is_Mul:
        c, rest = expr.as_coeff_Mul()
        if c < 0:
            inner = from_sympy(-expr)
            return Neg(inner) if not isinstance(inner, Num) else Num(-inner.value)
        num, den = [], []
        for f in rest.as_ordered_factors():
            b, ex = f.as_base_exp()
            if ex.is_Integer and ex < 0:
                den.append(b ** (-ex))
            else:
                num.append(f)
        out = None
        if c != 1 or not num:
            out = from_sympy(c)
        for f in num:
            fe = from_sympy(f)
            out = fe if out is None else Mul(out, fe)
        for f in den:
            out = Div(out, from_sympy(f))
        return out
    if expr.is_Pow:
        b, ex = expr.as_base_exp()
        if not ex.is_Integer:
            raise ModelError(f"non-integer exponent in {expr}")
        if ex < 0:
            return Div(Num(Fraction(1)), from_sympy(b ** (-ex)))
        return Pow(from_sympy(b), int(ex))
    raise ModelError(f"cannot convert {expr} to a rational expression")


def _y_indices(e: RationalExpr) -> set[int]:
    return {int(v[1:]) for v in e.variables() if v.startswith("y")}


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

SHIFTS = ("x_minus_1", "x_plain")


@dataclass(frozen=True)
class DdeModel:
    """``F = Q + S(x) z R`` with ``S = x - 1`` or ``x``; ``k`` is the order of the perturbation."""

    k: int
    Q: RationalExpr
    R: RationalExpr
    shift: str = "x_minus_1"
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.shift not in SHIFTS:
            raise ModelError(f"unknown shift {self.shift!r}")
        if self.k < 1:
            raise ModelError("order must be at least 1")
        bad = [j for j in _y_indices(self.Q) if j >= 2]
        if bad:
            raise ModelError(f"Q may only use y0 and y1, found y{max(bad)}")
        if "x" in self.Q.variables():
            raise ModelError("Q must not depend on x")
        hi = _y_indices(self.R)
        if hi and max(hi) > self.k:
            raise OrderMismatch(f"R uses y{max(hi)} but the declared order is {self.k}")

    @property
    def critical_x(self) -> Fraction:
        """Value of ``x`` at which the perturbation vanishes."""
        return Fraction(1) if self.shift == "x_minus_1" else Fraction(0)

    @property
    def combinatorial_x(self) -> Fraction:
        """Value of ``x`` at which the total counts are recovered (``x = 1`` in both conventions)."""
        return Fraction(1)

    def shift_expr(self) -> RationalExpr:
        return Sub(Var("x"), Num(Fraction(1))) if self.shift == "x_minus_1" else Var("x")

    def shift_value(self, x):
        return x - 1 if self.shift == "x_minus_1" else x

    def rhs(self) -> RationalExpr:
        """Full right-hand side ``Q + S z R``."""
        return Add(self.Q, Mul(Mul(self.shift_expr(), Var("z")), self.R))

    def to_text(self) -> str:
        return print_model(self)

    def digest(self) -> str:
        return hashlib.sha256(print_model(self).encode()).hexdigest()[:16]

    def with_R(self, R: RationalExpr) -> "DdeModel":
        return DdeModel(self.k, self.Q, R, self.shift, self.name)


def print_model(m: DdeModel) -> str:
    return (f"order {m.k};\nshift {m.shift};\nQ = {print_expr(m.Q)};\n"
            f"R = {print_expr(m.R)};\n")


def parse_model(text: str, name: str | None = None) -> DdeModel:
    """Parse the model DSL.  Statements end with ``;``; ``#`` starts a comment."""
    toks = _tokenize(text)
    p = _Parser(toks)
    order = shift = Q = R = None
    order_tok = None
    seen = set()
    while p.tok.kind != "eof":
        if p.tok.text == ";":
            p.advance()
            continue
        t = p.advance()
        if t.kind != "name":
            raise ModelSyntaxError(f"expected a statement, found {t.text!r}", t.line, t.col)
        if t.text in seen:
            raise ModelSyntaxError(f"duplicate statement {t.text!r}", t.line, t.col)
        seen.add(t.text)
        if t.text == "order":
            n = p.advance()
            if n.kind != "num":
                raise ModelSyntaxError("order needs an integer", n.line, n.col)
            order, order_tok = int(n.text), n
        elif t.text == "shift":
            s = p.advance()
            if s.text not in SHIFTS:
                raise ModelSyntaxError(f"shift must be one of {', '.join(SHIFTS)}", s.line, s.col)
            shift = s.text
        elif t.text in ("Q", "R"):
            p.expect("=")
            start = p.tok
            e = p.expr()
            if t.text == "Q":
                bad = sorted(v for v in e.variables() if v == "x" or (v.startswith("y") and int(v[1:]) >= 2))
                if bad:
                    raise UnknownVariable(f"variable {bad[0]!r} is not allowed in Q", start.line, start.col)
                Q = e
            else:
                R = e
        else:
            raise ModelSyntaxError(f"unknown statement {t.text!r}", t.line, t.col)
        if p.tok.kind != "eof":
            p.expect(";")
    if Q is None or R is None:
        t = p.tok
        raise ModelSyntaxError("model needs both Q and R", t.line, t.col)
    hi = _y_indices(R)
    inferred = max(hi) if hi else None
    if order is None:
        if inferred is None:
            raise OrderMismatch("cannot infer the order: R does not use any yj")
        order = inferred
    elif inferred is not None and inferred != order:
        raise OrderMismatch(f"declared order {order} but R uses up to y{inferred}"
                            f" (line {order_tok.line})")
    if inferred is not None:
        yk = _sym(f"y{inferred}")
        second = sp.diff(to_sympy(R), yk, 2)
        if sp.simplify(second) != 0:
            raise NotAffine(f"R is not affine in y{inferred}")
    return DdeModel(order, Q, R, shift or "x_minus_1", name)


def example2_model() -> DdeModel:
    """``T = 1 + z^2 u T^2 + z ΔT + z x Δ^2 T``."""
    return parse_model(
        "order 2;\nshift x_plain;\nQ = 1 + z^2*u*y0^2 + z*y1;\nR = y2;\n", name="example2")


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    status: str  # pass | fail | indeterminate
    explanation: str
    witness: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "pass"


@dataclass
class AssumptionReport:
    checks: list[Check]

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_pass(self) -> bool:
        return all(c.status == "pass" for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.status == "fail"]

    def as_dict(self) -> dict:
        return {c.name: {"status": c.status, "explanation": c.explanation, "witness": c.witness}
                for c in self.checks}

    def __str__(self):
        return "\n".join(f"{c.status:>13}  {c.name}: {c.explanation}" for c in self.checks)


def _nonzero(expr) -> tuple[bool, str]:
    s = sp.simplify(sp.together(expr))
    return s != 0, str(s)


def _nonneg_taylor(expr, syms, degree) -> tuple[str, str]:
    """Check non-negativity of the Taylor coefficients of ``expr`` up to total degree ``degree``."""
    t = sp.Symbol("_t")
    scaled = expr.subs({s: t * s for s in syms}, simultaneous=True)
    ser = sp.series(scaled, t, 0, degree + 1).removeO()
    poly = sp.Poly(sp.expand(ser), t, *syms)
    for monom, c in poly.terms():
        if c < 0:
            mono = "*".join(f"{s}^{e}" for s, e in zip(syms, monom[1:]) if e)
            return "fail", f"{c}*{mono or 1}"
    return "pass", f"checked to total degree {degree}"


def check_assumptions(m: DdeModel, taylor_degree: int = 6) -> AssumptionReport:
    """Flag each hypothesis of the central limit theorem for ``m``.

    ``Q`` is tested as written (including its ``z`` factors), as an
    expression: "not identically zero".
    """
    z, u, y0, y1 = (_sym(n) for n in ("z", "u", "y0", "y1"))
    Q = to_sympy(m.Q)
    R = to_sympy(m.R)
    checks: list[Check] = []

    Q0 = Q.subs({z: 0})
    dep = sorted(str(s) for s in Q0.free_symbols if str(s).startswith("y"))
    checks.append(Check("well_founded",
                        "fail" if dep else "pass",
                        "Q at z=0 is free of y0, y1" if not dep else "Q at z=0 depends on " + ", ".join(dep),
                        str(sp.simplify(Q0))))

    try:
        val = sp.simplify(Q.subs({u: 0, y0: 0, y1: 0}))
        ok = val != 0
        checks.append(Check("Q(z,0,0,0) != 0", "pass" if ok else "fail",
                            "base term present" if ok else "vanishes identically", str(val)))
    except (ZeroDivisionError, ValueError) as exc:
        checks.append(Check("Q(z,0,0,0) != 0", "indeterminate", f"evaluation failed: {exc}"))

    for label, expr, why in (
        ("Q_u(z,u,y0,0) != 0", sp.diff(Q, u).subs({y1: 0}), "u-dependence at y1=0"),
        ("Q_y1 != 0", sp.diff(Q, y1), "dependence on the first discrete derivative"),
    ):
        ok, w = _nonzero(expr)
        checks.append(Check(label, "pass" if ok else "fail", why + (" present" if ok else " missing"), w))

    ok1, w1 = _nonzero(sp.diff(Q, y0, 2))
    ok2, w2 = _nonzero(sp.diff(Q, u, y0))
    checks.append(Check("Q_y0y0 != 0 or Q_uy0 != 0", "pass" if (ok1 or ok2) else "fail",
                        f"Q_y0y0 {'nonzero' if ok1 else 'zero'}, Q_uy0 {'nonzero' if ok2 else 'zero'}",
                        f"Q_y0y0={w1}; Q_uy0={w2}"))

    yk = _sym(f"y{m.k}")
    second = sp.simplify(sp.diff(R, yk, 2))
    checks.append(Check(f"R affine in y{m.k}", "pass" if second == 0 else "fail",
                        "second derivative vanishes" if second == 0 else "second derivative nonzero",
                        str(second)))
    lin = sp.simplify(sp.diff(R, yk))
    checks.append(Check(f"R_y{m.k} != 0", "pass" if lin != 0 else "fail",
                        "perturbation reaches the top derivative" if lin != 0 else "R does not use the top derivative",
                        str(lin)))

    syms = [s for s in (z, u, y0, y1) if s in Q.free_symbols]
    try:
        status, w = _nonneg_taylor(Q, syms, taylor_degree)
        checks.append(Check("Q non-negative coefficients", status,
                            "Taylor coefficients of Q at the origin", w))
    except (ValueError, sp.PolynomialError, ZeroDivisionError) as exc:
        checks.append(Check("Q non-negative coefficients", "indeterminate", f"expansion failed: {exc}"))

    dg = dependency_graph(m, 3 * m.k + 6)
    checks.append(Check("dependency graph strongly connected",
                        "pass" if dg.strongly_connected else "fail",
                        f"truncated at index {dg.bound}; edges to larger indices ignored",
                        f"{dg.graph.number_of_edges()} edges, {len(dg.components)} components"))
    checks.append(Check("solution non-negative", "indeterminate",
                        "only checked empirically on computed truncations (solver tests)"))
    return AssumptionReport(checks)


# ---------------------------------------------------------------------------
# dependency graph
# ---------------------------------------------------------------------------

@dataclass
class DependencyReport:
    graph: nx.DiGraph
    bound: int
    strongly_connected: bool
    components: list

    def __str__(self):
        verdict = "strongly connected" if self.strongly_connected else "not strongly connected"
        return (f"dependency graph on 0..{self.bound}: {verdict} "
                f"({self.graph.number_of_edges()} edges); truncated: edges to indices > {self.bound} ignored")


class _UTrunc:
    """Polynomial in ``u`` truncated at degree ``cap`` with sympy coefficients."""

    __slots__ = ("c", "cap")

    def __init__(self, c, cap):
        self.c = list(c)[: cap + 1] + [sp.Integer(0)] * max(0, cap + 1 - len(c))
        self.cap = cap

    def __add__(self, o):
        return _UTrunc([a + b for a, b in zip(self.c, o.c)], self.cap)

    def __sub__(self, o):
        return _UTrunc([a - b for a, b in zip(self.c, o.c)], self.cap)

    def __neg__(self):
        return _UTrunc([-a for a in self.c], self.cap)

    def __mul__(self, o):
        out = [sp.Integer(0)] * (self.cap + 1)
        for i, a in enumerate(self.c):
            if a == 0:
                continue
            for j in range(self.cap + 1 - i):
                if o.c[j] != 0:
                    out[i + j] += a * o.c[j]
        return _UTrunc([sp.expand(v) for v in out], self.cap)

    def inverse(self):
        a0 = self.c[0]
        if a0 == 0:
            raise ZeroDivisionError("u-series without constant term")
        inv = [1 / a0]
        for n in range(1, self.cap + 1):
            acc = sum((self.c[i] * inv[n - i] for i in range(1, n + 1)), sp.Integer(0))
            inv.append(sp.expand(-acc / a0))
        return _UTrunc(inv, self.cap)


def _eval_utrunc(e: RationalExpr, env: dict, cap: int) -> _UTrunc:
    if isinstance(e, Num):
        return _UTrunc([sp.Rational(e.value.numerator, e.value.denominator)], cap)
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Add):
        return _eval_utrunc(e.left, env, cap) + _eval_utrunc(e.right, env, cap)
    if isinstance(e, Sub):
        return _eval_utrunc(e.left, env, cap) - _eval_utrunc(e.right, env, cap)
    if isinstance(e, Mul):
        return _eval_utrunc(e.left, env, cap) * _eval_utrunc(e.right, env, cap)
    if isinstance(e, Div):
        return _eval_utrunc(e.left, env, cap) * _eval_utrunc(e.right, env, cap).inverse()
    if isinstance(e, Neg):
        return -_eval_utrunc(e.operand, env, cap)
    if isinstance(e, Pow):
        b = _eval_utrunc(e.base, env, cap)
        if e.exponent < 0:
            b = b.inverse()
        out = _UTrunc([sp.Integer(1)], cap)
        for _ in range(abs(e.exponent)):
            out = out * b
        return out
    raise TypeError(e)


def dependency_graph(m: DdeModel, index_bound: int | None = None) -> DependencyReport:
    """Dependency graph of the coefficient system ``f_i = [u^i] RHS`` at the critical ``x``.

    At the critical ``x`` the perturbation vanishes, so only ``Q`` matters.
    Vertices are ``0..index_bound``; an edge ``i -> j`` means the equation for
    ``f_i`` involves ``f_j``.  The true graph is infinite, so the verdict only
    concerns the truncation.
    """
    B = 3 * m.k + 6 if index_bound is None else int(index_bound)
    top = B + 2
    fs = [sp.Symbol(f"f{j}") for j in range(top + 1)]
    z = _sym("z")
    env = {
        "z": _UTrunc([z], B),
        "u": _UTrunc([sp.Integer(0), sp.Integer(1)], B),
        "x": _UTrunc([sp.Rational(m.critical_x.numerator, m.critical_x.denominator)], B),
        "y0": _UTrunc(fs[: B + 1], B),
        "y1": _UTrunc(fs[1: B + 2], B),
    }
    rhs = _eval_utrunc(m.Q, env, B)
    g = nx.DiGraph()
    g.add_nodes_from(range(B + 1))
    for i, coeff in enumerate(rhs.c):
        for s in sp.expand(coeff).free_symbols:
            name = str(s)
            if name.startswith("f"):
                j = int(name[1:])
                if j <= B:
                    g.add_edge(i, j)
    comps = [sorted(c) for c in nx.strongly_connected_components(g)]
    return DependencyReport(g, B, len(comps) == 1, comps)
