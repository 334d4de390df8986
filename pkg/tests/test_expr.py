import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahred import calculus as C
from kahred import expr as E
from kahred.calculus import Point
from kahred.errors import DomainError, ParseError, UnknownSymbol, ValidationError
from kahred.potential import InvariantPotential, fubini_study

CONSTS = ("c", "kappa")

leaves = st.one_of(
    st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(E.Num),
    st.sampled_from([E.Const(c) for c in CONSTS]),
    st.builds(E.Var, st.sampled_from(["s", "t"]), st.integers(1, 3)),
    st.builds(E.WAtom, st.sampled_from(["abs2", "re", "im"]), st.integers(1, 2)),
)


def _extend(children):
    return st.one_of(
        st.builds(E.Neg, children),
        st.builds(E.BinOp, st.sampled_from(["+", "-", "*", "/"]), children, children),
        st.builds(E.Pow, children, st.integers(-3, 4)),
        st.builds(E.Call, st.sampled_from(["log", "exp"]), children),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(trees)
def test_print_parse_round_trip(e):
    assert E.parse_expr(E.to_text(e), CONSTS) == e


def test_fs_chart_text():
    e = E.parse_expr("log(1 + t1 + abs2(w1))")
    assert e == E.log(E.Num(1.0) + E.t(1) + E.abs2(1))
    assert e == fubini_study(1, 1).body


def test_declared_constant():
    e = E.parse_expr("t1 + t2 - c * log(t1)", ["c"])
    v = E.evaluate(e, [0.0, math.log(2.0)], [], [], {"c": 3.0})
    assert abs(v - 3.0) < 1e-15


def test_precedence():
    # pow > unary minus > * / > + -
    env = dict(s=[2.0], x=[], y=[])
    assert E.evaluate(E.parse_expr("-s1^2"), **env) == -4.0
    assert E.evaluate(E.parse_expr("1 - s1 * 3 / 2"), **env) == -2.0
    assert E.evaluate(E.parse_expr("2 - 3 - 4"), **env) == -5.0
    assert E.evaluate(E.parse_expr("8 / 4 / 2"), **env) == 1.0
    assert E.evaluate(E.parse_expr("pow(s1 + 1, -1)"), **env) == 1 / 3


@pytest.mark.parametrize("text,pos", [("log(1 + ", 8), ("1 +* 2", 3), ("exp(s1", 6), ("2 $ 3", 2)])
def test_parse_errors_carry_position(text, pos):
    with pytest.raises(ParseError) as info:
        E.parse_expr(text)
    assert info.value.position == pos


def test_end_of_input_message():
    with pytest.raises(ParseError, match="end of input"):
        E.parse_expr("log(1 + ")


@pytest.mark.parametrize("text", ["q + 1", "w1 + 1", "sin(s1)"])
def test_unknown_symbols(text):
    with pytest.raises(UnknownSymbol):
        E.parse_expr(text)


def test_non_integer_exponent():
    with pytest.raises(ParseError):
        E.parse_expr("s1 ^ 1.5")


def test_dimension_check():
    with pytest.raises(ValidationError):
        InvariantPotential(1, 0, E.parse_expr("t1 + t2"))
    with pytest.raises(ValidationError):
        InvariantPotential(1, 1, E.parse_expr("t1 + abs2(w2)"))


def test_guarded_evaluation():
    with pytest.raises(DomainError):
        E.evaluate(E.parse_expr("log(s1)"), [-1.0], [], [])
    with pytest.raises(DomainError):
        E.evaluate(E.parse_expr("1 / (s1 - s1)"), [0.5], [], [])


def test_w_atoms():
    e = E.parse_expr("abs2(w1) + 2 * re(w2) - im(w2)")
    assert E.evaluate(e, [], [3.0, 1.0], [4.0, 5.0]) == 25.0 + 2.0 - 5.0


def test_substitute_and_shift():
    e = E.parse_expr("t1 * abs2(w1)")
    sub = E.substitute_s(e, {1: E.s(1) - E.log(E.Num(2.0))})
    assert abs(E.evaluate(sub, [0.0], [1.0], [0.0]) - 0.5) < 1e-15
    sh = E.shift_indices(e, 2, 1)
    assert E.symbols(sh) == {("t", 3), ("w", 2)}


def test_jet_evaluation_matches_python():
    e = E.parse_expr("log(1 + t1 + abs2(w1)) * pow(s1, 2) - exp(re(w1)) / (2 + im(w1))")
    pot = InvariantPotential(1, 1, e)
    p = Point((0.3,), (0.2, -0.7))
    j = C.eval_jet2(pot, p)
    s, x, y = 0.3, 0.2, -0.7
    ref = math.log(1 + math.exp(s) + x * x + y * y) * s * s - math.exp(x) / (2 + y)
    assert abs(j.value - ref) < 1e-15
    np.testing.assert_allclose(j.grad, C.fd_jet2(pot, p).grad, atol=1e-8)
