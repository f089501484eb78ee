"""Command line front end.

Every JSON output carries a header with the run configuration, its hash and
the versions of the numeric libraries involved.  Errors are reported as a
JSON object on stderr with exit status 2.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import mpmath

from . import __version__

DEFAULT_PREC = 256
BUILTIN_MODELS = ("example2", "diamond")


def _default_prec() -> int:
    raw = os.environ.get("SINGPERT_PRECISION")
    if not raw:
        return DEFAULT_PREC
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"SINGPERT_PRECISION must be an integer, got {raw!r}")


def load_model(spec: str):
    from .model import example2_model, parse_model

    if spec == "example2":
        return example2_model()
    if spec == "diamond":
        from .maps.equation import diamond_model
        return diamond_model()
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"no builtin model or file named {spec!r} (builtins: {', '.join(BUILTIN_MODELS)})")
    return parse_model(path.read_text(), name=path.stem)


def versions() -> dict:
    import flint
    import numpy
    import scipy
    import sympy

    return {"singpert": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "sympy": sympy.__version__, "mpmath": mpmath.__version__, "python-flint": flint.__version__}


def _config(args) -> dict:
    skip = {"func", "output", "csv", "derivatives"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def header(args) -> dict:
    cfg = _config(args)
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return {"config": cfg, "config_hash": hashlib.sha256(blob).hexdigest()[:16], "versions": versions()}


def _num(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator)
    if isinstance(v, mpmath.mpf):
        return float(v)
    return v


def _emit(args, payload) -> None:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=1, default=_num) + "\n"
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _write_csv(path, fields, rows) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k) for k in fields})
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args):
    from .solver import residual_order, solve_dde

    m = load_model(args.model)
    s = solve_dde(m, args.order, args.x, backend=args.backend, prec=args.precision_bits)
    doc = s.to_json()
    doc["header"] = {**doc["header"], **header(args)}
    if args.backend == "exact":
        doc["header"]["residual_order"] = residual_order(s)
    _emit(args, doc)


def cmd_distribution(args):
    from .asympt import empirical_moments
    from .solver import solve_dde, x_distribution

    m = load_model(args.model)
    s = solve_dde(m, args.n, "symbolic")
    p = x_distribution(s, args.n)
    mom = empirical_moments(s, args.n)
    _emit(args, {"header": header(args), "n": args.n, "probabilities": p,
                 "mean": mom["mean"], "variance": mom["variance"]})


def cmd_eliminate(args):
    from .polysys import compare_with_fixture, eliminate_critical, load_fixture

    m = load_model(args.model)
    ua, ta = eliminate_critical(m)
    out = {"header": header(args)}
    for a in (ua, ta):
        entry = {"polynomial": a.to_text(), "degree": a.degree(), "provenance": a.provenance,
                 "factors": [g.to_text() for g in a.candidates]}
        if m.name == "example2":
            fx = load_fixture(f"example2_{a.target}_annihilator")
            entry["fixture"] = compare_with_fixture(a.poly, fx)
        out[a.target] = entry
    _emit(args, out)


def cmd_verify(args):
    from .polysys import MultiPoly, verify_annihilator
    from .solver import solve_dde

    m = load_model(args.model)
    poly = MultiPoly.parse(Path(args.poly).read_text())
    s = solve_dde(m, args.order, "symbolic")
    series = {"t0": s.t0}
    if args.target not in series:
        raise ValueError("only t0 annihilators can be checked against the solved series")
    order = verify_annihilator(poly, series[args.target], args.target)
    verdict = "PASS" if order >= args.order + 1 else "FAIL"
    _emit(args, {"header": header(args), "target": args.target, "residual_order": order, "verdict": verdict})
    return 0 if verdict == "PASS" else 1


def _path(m, x_end: float, steps: int) -> list:
    xc = float(m.critical_x)
    return [xc + (x_end - xc) * i / steps for i in range(steps + 1)]


def cmd_critical(args):
    from .critical import continue_z0, z0_derivatives

    m = load_model(args.model)
    with mpmath.workprec(args.precision_bits):
        pts = continue_z0(m, _path(m, args.x_end, args.steps), prec=args.precision_bits)
    _write_csv(args.output, ["x", "z0", "u1", "u2", "t0", "t1", "detJ", "residual"], [p.as_row() for p in pts])
    if args.h is not None and args.derivatives:
        d = z0_derivatives(m, h=args.h, prec=args.precision_bits)
        keys = ("x", "z0", "z0p", "z0pp", "fd_z0p", "fd_z0pp", "rel_err_z0p", "rel_err_z0pp")
        Path(args.derivatives).write_text(json.dumps(
            {"header": header(args), **{k: mpmath.nstr(d[k], 20) for k in keys}}, indent=1) + "\n")


def cmd_continue(args):
    from .critical import continue_z0

    m = load_model(args.model)
    xs = [float(v) for v in args.x_path.split(",")] if args.x_path else _path(m, args.x_end, args.steps)
    pts = continue_z0(m, xs, prec=args.precision_bits)
    _emit(args, {"header": header(args), "points": [p.as_row() for p in pts]})


def cmd_clt(args):
    from .asympt import clt_from_z0, moment_table
    from .solver import solve_dde

    m = load_model(args.model)
    st = clt_from_z0(m, h=args.h, prec=args.precision_bits)
    _emit(args, {"header": header(args), **st.as_dict()})
    if args.csv:
        ns = [int(v) for v in args.ns.split(",")]
        s = solve_dde(m, max(ns), "symbolic")
        rows = [{"n": r["n"], "mean": float(r["mean"]), "var": float(r["variance"]), "skew": r["skewness"]}
                for r in moment_table(s, ns)]
        _write_csv(args.csv, ["n", "mean", "var", "skew"], rows)


def cmd_oracle(args):
    from .maps import RootedMap, count_pattern_occurrences, enumerate_near_triangulations
    from .maps.equation import PatternSpec, build_pattern_equation, tutte_model
    from .solver import solve_dde

    cat = enumerate_near_triangulations(args.max_edges)
    I = args.max_edges
    N = I // 3
    report = {"header": header(args), "maps": len(cat), "duplicates": cat.duplicates}
    if args.pattern:
        p = RootedMap.from_json(Path(args.pattern).read_text())
        p.validate_near_triangulation()
        spec = PatternSpec.from_map(p)
        mdl = build_pattern_equation(spec)
        dist: dict = {}
        for mp in cat.all_maps():
            k = count_pattern_occurrences(p, mp)
            cell = dist.setdefault(mp.weight(), {})
            cell[k] = cell.get(k, 0) + 1
        report["pattern"] = {"e": spec.e, "v": spec.v, "r": spec.r}
    else:
        mdl = tutte_model()
        dist = {w: {0: c} for w, c in cat.counts().items()}
    mismatches = []
    if args.compare == "solve":
        s = solve_dde(mdl, N, "symbolic", ucap=mdl.k * N + I + 1)
        for (j, n), cell in sorted(dist.items()):
            for k in range(0, max(cell) + 2):
                got = s.coefficient(n, j, k)
                want = cell.get(k, 0)
                if got != want:
                    mismatches.append({"j": j, "n": n, "k": k, "solver": str(got), "oracle": want})
        report["verdict"] = "MATCH" if not mismatches else "MISMATCH"
        report["mismatches"] = mismatches
    report["cells"] = {f"{j},{n}": {str(k): c for k, c in sorted(cell.items())} for (j, n), cell in sorted(dist.items())}
    print(report.get("verdict", "ENUMERATED"), file=sys.stderr)
    _emit(args, report)
    return 0 if not mismatches else 1


def cmd_pattern_equation(args):
    from .maps import RootedMap
    from .maps.equation import PatternSpec, build_pattern_equation

    if args.pattern:
        p = RootedMap.from_json(Path(args.pattern).read_text())
        spec = PatternSpec.from_map(p, args.r)
    else:
        if args.e is None or args.v is None:
            raise ValueError("give --pattern or both --e and --v")
        spec = PatternSpec(args.e, args.v, args.r or 1)
    m = build_pattern_equation(spec, method=args.method)
    h = header(args)
    _emit(args, f"# config_hash {h['config_hash']} singpert {__version__}\n# {m.name}\n{m.to_text()}")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="singpert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    prec = _default_prec()

    def add(name, func, model=True):
        p = sub.add_parser(name)
        if model:
            p.add_argument("--model", default="example2", help="builtin name or model file")
        p.add_argument("--precision-bits", type=int, default=prec)
        p.add_argument("-o", "--output")
        p.set_defaults(func=func)
        return p

    p = add("solve", cmd_solve)
    p.add_argument("--order", type=int, default=10)
    p.add_argument("--x", default="symbolic", help="symbolic, a number, or jet(value,order)")
    p.add_argument("--backend", choices=("exact", "arb"), default="exact")

    p = add("distribution", cmd_distribution)
    p.add_argument("--n", type=int, required=True)

    add("eliminate", cmd_eliminate)

    p = add("verify", cmd_verify)
    p.add_argument("--poly", required=True, help="polynomial text file")
    p.add_argument("--target", default="t0")
    p.add_argument("--order", type=int, default=30)

    p = add("critical", cmd_critical)
    p.add_argument("--x-end", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--h", type=float, default=None, help="step for z0 derivatives")
    p.add_argument("--derivatives", help="JSON file for z0 derivatives (needs --h)")

    p = add("continue", cmd_continue)
    p.add_argument("--x-path", help="comma separated x values starting at the critical x")
    p.add_argument("--x-end", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=20)

    p = add("clt", cmd_clt)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--csv", help="moment table output")
    p.add_argument("--ns", default="50,100,150,200")

    p = add("oracle", cmd_oracle, model=False)
    p.add_argument("--max-edges", type=int, default=6)
    p.add_argument("--pattern", help="pattern map JSON")
    p.add_argument("--compare", choices=("none", "solve"), default="none")

    p = add("pattern-equation", cmd_pattern_equation, model=False)
    p.add_argument("--pattern", help="pattern map JSON")
    p.add_argument("--e", type=int)
    p.add_argument("--v", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--method", choices=("closed", "literal"), default="closed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = args.func(args)
    except Exception as exc:  # reported as structured JSON
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        return 2
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
