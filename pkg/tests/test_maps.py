import json
from fractions import Fraction

import pytest
import sympy as sp

from singpert.maps import (InvalidMap, RootedMap, brute_force_near_triangulations, count_embeddings,
                           count_pattern_occurrences, enumerate_near_triangulations, occurrence_distribution,
                           rotational_symmetries, self_intersections, triangle, wheel)
from singpert.maps.equation import (FractionalExponentResidue, PatternSpec, build_pattern_equation, diamond_model,
                                    displayed_v4_model, glue_exponent, models_equal, multifan_series,
                                    pattern_poly, pattern_term_series, tutte_model)
from singpert.model import check_assumptions, to_sympy
from singpert.series import TruncatedSeries, XMode, discrete_delta, eval_rational_expr
from singpert.solver import solve_dde


@pytest.fixture(scope="module")
def catalog():
    return enumerate_near_triangulations(10)


# -- oracle -------------------------------------------------------------------------

def test_single_triangle():
    cat = enumerate_near_triangulations(0)
    assert cat.counts() == {(0, 0): 1}


def test_catalog_invariants(catalog):
    assert catalog.duplicates == 0
    for m in catalog.all_maps():
        m.validate_near_triangulation()
        assert m.n_vertices - m.n_edges + m.n_faces == 2
        assert m.is_simple() and not m.chords()


def test_generators_agree():
    assert brute_force_near_triangulations(10).counts() == enumerate_near_triangulations(10).counts()


def test_counts_match_solver(catalog):
    tm = tutte_model()
    s = solve_dde(tm, 3, XMode.numeric(1), ucap=tm.k * 3 + 11)
    for (j, n), c in catalog.counts().items():
        assert s.coefficient(n, j) == c


def test_map_json_round_trip():
    w = wheel(5)
    back = RootedMap.from_json(json.dumps(w.to_json()))
    assert back.canonical == w.canonical
    bad = w.to_json()
    bad["alpha"][0], bad["alpha"][1] = bad["alpha"][1], bad["alpha"][0]
    with pytest.raises(InvalidMap):
        RootedMap.from_json(bad)


def test_occurrence_basics(catalog):
    w = wheel(5)
    assert count_pattern_occurrences(w, w) == 1
    assert count_pattern_occurrences(wheel(7), triangle()) == 0
    for m in list(catalog.all_maps())[:40]:
        assert count_embeddings(w, m) == rotational_symmetries(w) * count_pattern_occurrences(w, m)
        assert count_pattern_occurrences(w, m, "raw") == count_embeddings(w, m)


def test_small_wheel_self_intersects(catalog):
    maps = list(catalog.all_maps())
    assert any(self_intersections(wheel(4), m) for m in maps)
    assert not any(self_intersections(wheel(7), m) for m in maps)


def test_wheel7_distribution(catalog):
    p = wheel(7)
    maps = list(catalog.all_maps())
    dist = occurrence_distribution(p, maps)
    mdl = build_pattern_equation(PatternSpec.from_map(p))
    s = solve_dde(mdl, 3, "symbolic", ucap=mdl.k * 3 + 11)
    for (j, n), cell in dist.items():
        for k in range(max(cell) + 2):
            assert s.coefficient(n, j, k) == cell.get(k, 0)


def test_total_occurrences_identity_for_small_patterns(catalog):
    # mean counts are linear in occurrences, so they match even when occurrences overlap
    maps = list(catalog.all_maps())
    for p in (wheel(4), wheel(5)):
        mdl = build_pattern_equation(PatternSpec.from_map(p))
        s = solve_dde(mdl, 3, "symbolic", ucap=mdl.k * 3 + 11)
        totals = {}
        for m in maps:
            totals[m.weight()] = totals.get(m.weight(), 0) + count_pattern_occurrences(p, m)
        for (j, n), t in totals.items():
            assert sum(k * s.coefficient(n, j, k) for k in range(1, 12)) == t


# -- equations -----------------------------------------------------------------------

def test_glue_exponent():
    for v1, i1, v2, i2 in ((3, 0, 3, 0), (4, 1, 5, 8), (6, 9, 3, 3)):
        assert glue_exponent(v1, i1, v2, i2) == (1, Fraction(0))


def test_pattern_spec_validation():
    with pytest.raises(ValueError):
        PatternSpec(5, 4)
    with pytest.raises(ValueError):
        PatternSpec(4, 2)


def test_fractional_pieces_assemble_to_integer_exponents():
    p = PatternSpec(5, 5, 1)
    assert (p.e + p.v - 2) % 3 != 0
    num, pw, shift = pattern_poly(p)
    assert shift % 3 == 0
    m = build_pattern_equation(p)
    R = to_sympy(m.R)
    for term in sp.Add.make_args(sp.expand(sp.fraction(sp.cancel(R))[0])):
        assert sp.degree(term, sp.Symbol("z")) == int(sp.degree(term, sp.Symbol("z")))
    with pytest.raises(FractionalExponentResidue):
        displayed_v4_model(27)


@pytest.mark.parametrize("e,v", [(4, 4), (7, 7), (8, 5)])
def test_pattern_models_preserve_totals(e, v):
    m = build_pattern_equation(PatternSpec(e, v, 1))
    N = 6
    a = solve_dde(m, N, XMode.numeric(1), ucap=40)
    b = solve_dde(tutte_model(), N, XMode.numeric(1), ucap=40)
    assert a.t0 == b.t0


@pytest.mark.parametrize("e,v", [(4, 4), (5, 5)])
def test_pattern_solution_integral(e, v):
    m = build_pattern_equation(PatternSpec(e, v, 1))
    s = solve_dde(m, 5, "symbolic", ucap=30)
    for n, c in enumerate(s.F.coeffs):
        for (j, _), val in c.terms().items():
            if j <= s.exact_ucap(n):
                assert Fraction(str(val)).denominator == 1


def test_pattern_solution_non_negative_without_overlaps():
    # overlapping occurrences turn the x = 0 evaluation into an alternating sum, so only
    # patterns that cannot overlap with themselves are expected to stay non-negative
    m = build_pattern_equation(PatternSpec.from_map(wheel(7)))
    s = solve_dde(m, 6, "symbolic", ucap=40)
    for n, c in enumerate(s.F.coeffs):
        for (j, _), val in c.terms().items():
            if j <= s.exact_ucap(n):
                assert val >= 0
    m4 = build_pattern_equation(PatternSpec(4, 4, 1))
    s4 = solve_dde(m4, 3, "symbolic", ucap=30)
    assert s4.coefficient(3, 0, 0) < 0


def test_series_and_symbolic_routes_agree():
    N, UC = 5, 30
    T = solve_dde(tutte_model(), N, "symbolic", ucap=UC).F
    for e, v in ((4, 4), (5, 5), (7, 7)):
        p = PatternSpec(e, v, 1)
        a = pattern_term_series(p, T)
        m = build_pattern_equation(p)
        b = eval_rational_expr(m.R, {f"y{k}": discrete_delta(T, k) for k in range(m.k + 1)}).shift_z(1)
        for n in range(N + 1):
            for j in range(5):
                for k in range(2):
                    assert a.coefficient(n, j, k) == b.coefficient(n, j, k)


def test_multifan_series_basics():
    T = solve_dde(tutte_model(), 4, "symbolic", ucap=20).F
    F = multifan_series(T, 4)
    assert F[1].is_zero()
    assert not F[2].is_zero()
    ring = T.ring
    Z = multifan_series(TruncatedSeries.zero(ring, 4), 4)
    assert all(Z[k].is_zero() for k in Z.coeffs)


def test_diamond_fixture_properties():
    d = diamond_model()
    assert models_equal(d, displayed_v4_model(28))["equal"]
    assert check_assumptions(d).failures() == []
    a = solve_dde(d, 8, XMode.numeric(1), ucap=30)
    b = solve_dde(tutte_model(), 8, XMode.numeric(1), ucap=30)
    assert a.F == b.F


def test_literal_and_closed_builders_agree_for_valency_four():
    for e in (4, 7, 28):
        a = build_pattern_equation(PatternSpec(e, 4, 1), method="closed")
        b = build_pattern_equation(PatternSpec(e, 4, 1), method="literal")
        assert models_equal(a, b)["equal"]


def test_literal_builder_overcounts_wheel7(catalog):
    # the closed decomposition is the one that matches the oracle; the literal form adds maps
    maps = list(enumerate_near_triangulations(12).all_maps())
    p = wheel(7)
    dist = occurrence_distribution(p, maps)
    mdl = build_pattern_equation(PatternSpec.from_map(p), method="literal")
    s = solve_dde(mdl, 4, "symbolic", ucap=mdl.k * 4 + 13)
    bad = [(j, n, k) for (j, n), cell in dist.items() for k in range(max(cell) + 2)
           if s.coefficient(n, j, k) != cell.get(k, 0)]
    assert bad
