"""Coefficient asymptotics and limit-law statistics.

Coefficients may be ``Fraction``, ``int``, ``float``, ``mpmath`` numbers or
``flint.arb`` balls; everything is reduced to logarithms before fitting so
that values far beyond the double range are fine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import flint
import mpmath
import numpy as np

from .model import DdeModel, Num
from .solver import SeriesSolution, ZeroDenominator, factorial_moments_from_jet, x_distribution

__all__ = [
    "Inconclusive", "DegenerateVariance", "SingularFit", "CltStats",
    "detect_period", "growth_rate", "fit_exponent", "clt_from_z0", "empirical_moments",
    "moment_table",
]


class Inconclusive(ArithmeticError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateVariance(ArithmeticError):
    pass


def _is_zero(c) -> bool:
    if isinstance(c, flint.arb):
        # a ball containing 0 carries no usable sign or magnitude
        return bool(c.contains(0))
    return c == 0


def _log(c) -> float:
    """Natural logarithm of ``|c|``."""
    if isinstance(c, Fraction):
        c = abs(c)
        return math.log(c.numerator) - math.log(c.denominator)
    if isinstance(c, int):
        return math.log(abs(c))
    if isinstance(c, flint.arb):
        return float(abs(c).log().mid())
    if isinstance(c, (flint.fmpq, flint.fmpz)):
        return _log(Fraction(str(c)))
    return float(mpmath.log(abs(mpmath.mpf(c))))


def detect_period(coeffs: Sequence, tail: int | None = None) -> tuple[int, set]:
    """Period ``d`` and residue set ``J`` of the support of ``coeffs``.

    Only the tail (last half by default) is inspected so that sporadic early
    zeros do not matter.  The support must be exactly the residues ``J`` mod
    ``d`` on the tail, otherwise :class:`Inconclusive` is raised.
    """
    if len(coeffs) < 50:
        raise Inconclusive("need at least 50 coefficients")
    tail = tail or len(coeffs) // 2
    start = len(coeffs) - tail
    support = [n for n in range(start, len(coeffs)) if not _is_zero(coeffs[n])]
    if len(support) < 2:
        raise Inconclusive("support of the tail is too small", {"support": support})
    d = 0
    for a, b in zip(support, support[1:]):
        d = math.gcd(d, b - a)
    J = {n % d for n in support}
    holes = [n for n in range(start, len(coeffs)) if n % d in J and _is_zero(coeffs[n])]
    if holes:
        raise Inconclusive("support is not eventually periodic", {"d": d, "holes": holes[:10]})
    return d, J


def growth_rate(coeffs: Sequence, d: int = 1, j: int | None = None, window: tuple[int, int] | None = None) -> float:
    """Estimate ``1/z0`` from ratios ``(a_n/a_{n-d})^(1/d)``, extrapolated linearly in ``1/n``."""
    lo, hi = window or (len(coeffs) // 2, len(coeffs) - 1)
    ns, rs = [], []
    for n in range(max(lo, d), hi + 1):
        if j is not None and n % d != j:
            continue
        if _is_zero(coeffs[n]) or _is_zero(coeffs[n - d]):
            continue
        ns.append(n)
        rs.append(math.exp((_log(coeffs[n]) - _log(coeffs[n - d])) / d))
    if len(ns) < 3:
        raise Inconclusive("not enough nonzero ratios")
    A = np.vstack([np.ones(len(ns)), 1.0 / np.array(ns, dtype=float)]).T
    coef, *_ = np.linalg.lstsq(A, np.array(rs), rcond=None)
    return float(coef[0])


@dataclass
class SingularFit:
    rho_inv: float
    exponent: float
    stderr: float
    period_d: int
    residues_J: set
    residue: int
    window: tuple
    r2: float
    drift: float
    constant: float = float("nan")

    def as_dict(self):
        return {"rho_inv": self.rho_inv, "exponent": self.exponent, "stderr": self.stderr,
                "period_d": self.period_d, "residues_J": sorted(self.residues_J), "residue": self.residue,
                "window": list(self.window), "r2": self.r2, "drift": self.drift, "constant": self.constant}


def _regress(ns, ys):
    x = np.log(np.asarray(ns, dtype=float))
    y = np.asarray(ys, dtype=float)
    A = np.vstack([np.ones_like(x), x]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2)) or 1.0
    dof = max(len(x) - 2, 1)
    s2 = ss_res / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(coef[1]), float(math.sqrt(cov[1, 1])), 1 - ss_res / ss_tot


def fit_exponent(coeffs: Sequence, rho_inv_hint: float | None = None, window: tuple[int, int] | None = None,
                 residue: int | None = None, drift_tol: float = 0.1, min_points: int = 20) -> SingularFit:
    """Fit ``a_n ~ c n^alpha rho_inv^n`` on one residue class.

    ``window`` defaults to the last 60% of the coefficients.  The exponent is
    fitted on the whole window and on its two halves; a difference between the
    halves above ``drift_tol`` means the assumed growth rate (or period) is
    wrong and raises :class:`Inconclusive`.
    """
    N = len(coeffs) - 1
    lo, hi = window or (int(0.4 * N), N)
    d, J = detect_period(coeffs)
    if residue is None:
        residue = max(J, key=lambda j: (sum(1 for n in range(lo, hi + 1) if n % d == j), -j))
    if rho_inv_hint is None:
        rho_inv_hint = growth_rate(coeffs, d, residue, (lo, hi))
    lr = math.log(rho_inv_hint)
    ns = [n for n in range(max(lo, 1), hi + 1) if n % d == residue and not _is_zero(coeffs[n])]
    if len(ns) < min_points:
        raise Inconclusive(f"only {len(ns)} coefficients in the window", {"window": (lo, hi)})
    ys = [_log(coeffs[n]) - n * lr for n in ns]
    c, alpha, se, r2 = _regress(ns, ys)
    half = len(ns) // 2
    _, a1, _, _ = _regress(ns[:half], ys[:half])
    _, a2, _, _ = _regress(ns[half:], ys[half:])
    drift = abs(a2 - a1)
    fit = SingularFit(rho_inv_hint, alpha, se, d, J, residue, (lo, hi), r2, drift, c)
    if drift > drift_tol:
        raise Inconclusive(f"exponent drifts across the window ({a1:.3f} vs {a2:.3f})", fit.as_dict())
    return fit


# ---------------------------------------------------------------------------
# limit law
# ---------------------------------------------------------------------------

@dataclass
class CltStats:
    mu: object
    sigma2: object
    source: str
    n_used: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self):
        f = lambda v: float(v) if v is not None else None
        return {"mu": f(self.mu), "sigma2": f(self.sigma2), "source": self.source, "n_used": self.n_used,
                "diagnostics": {k: (float(v) if isinstance(v, (mpmath.mpf, Fraction)) else v)
                                for k, v in self.diagnostics.items()}}


def clt_from_z0(m: DdeModel, h: float = 1e-3, prec: int = 256, tol: float = 1e-12) -> CltStats:
    """``mu = -z0'/z0`` and ``sigma2 = mu^2 + mu - z0''/z0`` at the combinatorial x."""
    from .critical import z0_derivatives

    if isinstance(m.R, Num) and m.R.value == 0:
        return CltStats(mpmath.mpf(0), mpmath.mpf(0), "z0_derivatives", diagnostics={"note": "z0 does not depend on x"})
    d = z0_derivatives(m, m.combinatorial_x, h, prec)
    with mpmath.workprec(prec):
        z0, zp, zpp = d["z0"], d["z0p"], d["z0pp"]
        mu = -zp / z0
        s2 = mu * mu + mu - zpp / z0
    diag = {"z0": z0, "z0p": zp, "z0pp": zpp, "rel_err_z0p": d["rel_err_z0p"], "rel_err_z0pp": d["rel_err_z0pp"]}
    if s2 < -tol:
        raise DegenerateVariance(f"negative variance constant {mpmath.nstr(s2, 5)}")
    return CltStats(mu, s2, "z0_derivatives", diagnostics=diag)


def _raw_from_factorial(f: Sequence) -> list:
    # E X^j from E (X)_j via Stirling numbers of the second kind
    out = [f[0]]
    for j in range(1, len(f)):
        out.append(sum(_stirling2(j, i) * f[i] for i in range(1, j + 1)))
    return out


def _stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


def empirical_moments(s: SeriesSolution, n: int) -> dict:
    """Mean, variance, standardized skewness and excess kurtosis of ``X_n``.

    Uses the exact law when ``x`` is symbolic, and factorial moments when the
    solution is a jet at ``x = 1`` (skewness needs order 3, kurtosis order 4).
    """
    xm = s.ring.xmode
    if xm.kind == "symbolic":
        p = x_distribution(s, n)
        raw = [sum((Fraction(k) ** j * pk for k, pk in enumerate(p)), Fraction(0)) for j in range(5)]
    elif xm.kind == "jet":
        f = factorial_moments_from_jet(s, n)
        if s.ring.backend == "exact":
            f = [Fraction(str(v)) if not isinstance(v, Fraction) else v for v in f]
        else:
            f = [mpmath.mpf(v.mid().str(radius=False)) if isinstance(v, flint.arb) else v for v in f]
        raw = _raw_from_factorial(f)
    else:
        raise ValueError("moments need symbolic x or a jet at x = 1")
    mean = raw[1]
    var = raw[2] - mean ** 2 if len(raw) > 2 else None
    out = {"n": n, "mean": mean, "variance": var, "skewness": None, "kurtosis": None}
    if var is not None and var > 0:
        sd = math.sqrt(float(var))
        if len(raw) > 3:
            m3 = raw[3] - 3 * mean * raw[2] + 2 * mean ** 3
            out["skewness"] = float(m3) / sd ** 3
        if len(raw) > 4:
            m4 = raw[4] - 4 * mean * raw[3] + 6 * mean ** 2 * raw[2] - 3 * mean ** 4
            out["kurtosis"] = float(m4) / sd ** 4 - 3
    return out


def moment_table(s: SeriesSolution, ns: Sequence[int]) -> list[dict]:
    rows = []
    for n in ns:
        try:
            rows.append(empirical_moments(s, n))
        except ZeroDenominator:
            continue
    return rows
