import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from singpert.maps.equation import DIAMOND_TEXT, diamond_model
from singpert.model import (DdeModel, ModelSyntaxError, NotAffine, OrderMismatch, UnknownVariable, check_assumptions,
                            dependency_graph, example2_model, parse_expr, parse_model, print_expr, print_model, to_sympy)


def test_parse_example_model():
    m = parse_model("order 2; shift x_plain; Q = 1 + z*u*y0^2*z + z*y1; R = y2;")
    ref = example2_model()
    assert sp.expand(to_sympy(m.Q) - to_sympy(ref.Q)) == 0 and m.R == ref.R
    assert m.k == 2 and m.critical_x == 0


def test_print_parse_round_trip():
    m = example2_model()
    assert parse_model(print_model(m)) == m
    d = diamond_model()
    assert parse_model(d.to_text()) == d


def test_order_inferred_and_checked():
    m = parse_model("Q = 1 + z*y1; R = y3;")
    assert m.k == 3
    with pytest.raises(OrderMismatch):
        parse_model("order 2; Q = 1 + z*y1; R = y3;")


def test_not_affine_rejected():
    with pytest.raises(NotAffine):
        parse_model("order 2; shift x_plain; Q = 1 + z*y1; R = y2 + y2^2;")


def test_syntax_errors_carry_position():
    with pytest.raises(ModelSyntaxError) as err:
        parse_model("order 2;\nQ = 1 + * z;\nR = y2;")
    assert err.value.line == 2
    with pytest.raises(UnknownVariable):
        parse_model("order 2; Q = 1 + z*y2; R = y2;")
    with pytest.raises(ModelSyntaxError):
        parse_expr("1 + w")


def test_comments_and_rationals():
    m = parse_model("# header\norder 2; # order\nQ = 1/2 + z*y1*3/4; R = y2;")
    assert print_expr(m.Q).count("/") >= 1


def test_assumptions_example_and_diamond():
    for m in (example2_model(), diamond_model()):
        rep = check_assumptions(m)
        assert rep.failures() == []
        assert rep["R affine in y2"].ok
        assert rep["solution non-negative"].status == "indeterminate"


def test_assumptions_constructed_violation():
    m = parse_model("order 2; shift x_plain; Q = 1 + z*y1; R = y2;")
    rep = check_assumptions(m)
    assert rep["Q_y0y0 != 0 or Q_uy0 != 0"].status == "fail"


def test_dependency_graph():
    assert dependency_graph(example2_model(), 10).strongly_connected
    assert dependency_graph(diamond_model(), 12).strongly_connected
    decoupled = parse_model("order 2; Q = 1 + z*u*y1; R = y2;")
    rep = dependency_graph(decoupled, 8)
    assert not rep.strongly_connected
    assert "truncated" in str(rep)


def test_dependency_graph_consistency_across_bounds():
    small = dependency_graph(example2_model(), 8).graph
    big = dependency_graph(example2_model(), 12).graph
    assert set(small.edges()) <= set(big.edges())


exprs = st.recursive(
    st.sampled_from(["z", "u", "y0", "y1", "y2", "1", "2/3"]),
    lambda inner: st.one_of(
        st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(inner, st.integers(1, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        inner.map(lambda e: f"{e}/(1 - u*y0)"),
    ),
    max_leaves=8,
)


@settings(max_examples=60, deadline=None)
@given(exprs)
def test_generated_models_round_trip(text):
    e = parse_expr(text)
    assert parse_expr(print_expr(e)) == e
    m = DdeModel(2, parse_expr("1 + z*y1 + z*y0^2"), parse_expr(f"y2 + {print_expr(e).replace('y2', 'y1')}"))
    assert parse_model(print_model(m)) == m


def test_diamond_text_is_parseable():
    assert parse_model(DIAMOND_TEXT).k == 2
