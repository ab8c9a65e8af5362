import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degenlab.errors import EvalDomain, ParseError
from degenlab.expr import evaluate, parse_expression


def ev(src, x):
    return evaluate(parse_expression(src, len(x)), np.asarray(x, dtype=float))


def test_examples():
    assert ev("x1^2 + x2^2", [3, 4]) == pytest.approx(25)
    assert ev("(1 - x1^2 - x2^2 - x3^2)^3", [0, 0, 0]) == pytest.approx(1)
    assert ev("min(abs(x1), exp(x2))", [-2, 0]) == pytest.approx(1)


def test_precedence_and_associativity():
    assert ev("2^3^2", [0]) == pytest.approx(512)
    assert ev("-2^2", [0]) == pytest.approx(-4)
    assert ev("2^-1", [0]) == pytest.approx(0.5)
    assert ev("1 - 2 - 3", [0]) == pytest.approx(-4)
    assert ev("8 / 4 / 2", [0]) == pytest.approx(1)
    assert ev("pow(x1, 2) + max(1, 2, 3)", [3]) == pytest.approx(12)


def test_vectorised():
    e = parse_expression("x1 * x2", 2)
    out = evaluate(e, np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.allclose(out, [2, 12])


def test_domain_errors():
    with pytest.raises(EvalDomain):
        ev("sqrt(x1)", [-1])
    with pytest.raises(EvalDomain):
        ev("log(x1)", [0])
    with pytest.raises(EvalDomain):
        ev("1 / x1", [0])
    with pytest.raises(EvalDomain):
        ev("x1 ^ 0.5", [-1])


@pytest.mark.parametrize("src,offset", [("x1 +", 4), ("x1 $ 2", 3), ("(x1", 3), ("x4", 0),
                                        ("foo(1)", 0), ("", 0), ("é + x1", 0), ("x1 + é", 5)])
def test_parse_errors_report_byte_offset(src, offset):
    with pytest.raises(ParseError) as info:
        parse_expression(src, 3)
    assert info.value.offset == offset
    assert info.value.expected


def test_arity_errors():
    with pytest.raises(ParseError):
        parse_expression("pow(x1)", 1)
    with pytest.raises(ParseError):
        parse_expression("min(x1)", 1)


_atoms = st.sampled_from(["x1", "x2", "x3", "1.5", "2", "0.25"])


def _exprs():
    return st.recursive(
        _atoms,
        lambda sub: st.one_of(
            st.tuples(sub, st.sampled_from(["+", "-", "*"]), sub).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
            sub.map(lambda s: f"-{s}"),
            sub.map(lambda s: f"abs({s})"),
            st.tuples(sub, sub).map(lambda t: f"min({t[0]}, {t[1]})"),
            sub.map(lambda s: f"({s})^2"),
        ),
        max_leaves=12,
    )


@settings(max_examples=200, deadline=None)
@given(_exprs())
def test_pretty_roundtrip(src):
    e = parse_expression(src, 3)
    again = parse_expression(e.to_source(), 3)
    assert again.ast == e.ast
    pts = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(evaluate(e, pts), evaluate(again, pts))
