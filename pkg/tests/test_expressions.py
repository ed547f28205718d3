"""The arithmetic expression language used by problem files."""

import numpy as np
import pytest

from tsvar import ExpressionError
from tsvar.expressions import compile_expression, lagrangian_variables


def ev(src, **values):
    return float(compile_expression(src, tuple(values) or ("t",))(**values))


@pytest.mark.parametrize(
    "src,want",
    [
        ("2 + 3*4", 14.0),
        ("(2 + 3)*4", 20.0),
        ("2^3^2", 512.0),  # right associative
        ("2**3**2", 512.0),
        ("-2^2", -4.0),  # unary minus binds looser than power
        ("(-2)^2", 4.0),
        ("2^-3", 0.125),
        ("2*3^2", 18.0),
        ("-2*-3", 6.0),
        ("7/2", 3.5),
        ("1 - 2 - 3", -4.0),  # left associative chain
        ("12/4/3", 1.0),
        ("1e-3", 1e-3),
        ("2.5E2", 250.0),
        (".5 + 1.", 1.5),
    ],
)
def test_arithmetic(src, want):
    assert ev(src) == want


def test_constants():
    assert ev("pi") == np.pi
    assert ev("e") == np.e
    assert abs(ev("2*pi") - 2 * np.pi) <= 1e-15


@pytest.mark.parametrize(
    "src,want",
    [
        ("exp(1)", np.e),
        ("log(e)", 1.0),
        ("sqrt(4)", 2.0),
        ("sin(0)", 0.0),
        ("cos(0)", 1.0),
        ("tan(pi/4)", 1.0),
        ("exp(log(5))", 5.0),
    ],
)
def test_functions(src, want):
    assert abs(ev(src) - want) <= 1e-12


def test_broadcasts_over_arrays():
    e = compile_expression("t^2 + 1")
    t = np.array([0.0, 1.0, 2.0, -3.0])
    assert np.array_equal(e(t=t), t**2 + 1)
    two = compile_expression("u1*v1 - t", ("t", "u1", "v1"))
    got = two(t=np.zeros(3), u1=np.arange(3.0), v1=np.full(3, 2.0))
    assert np.array_equal(got, [0.0, 2.0, 4.0])


def test_expression_metadata():
    e = compile_expression("sqrt(1 + v1^2)", ("t", "u1", "v1"))
    assert e.source == "sqrt(1 + v1^2)"
    assert e.variables == ("t", "u1", "v1")


def test_lagrangian_variable_names():
    assert lagrangian_variables(1) == ("t", "u1", "v1")
    assert lagrangian_variables(2) == ("t", "u1", "u2", "v1", "v2")


@pytest.mark.parametrize(
    "src",
    [
        "q + 1",  # unknown variable
        "foo(3)",  # unknown function
        "2) + 1",  # trailing input
        "2 +",  # dangling operator
        "sin(1",  # missing closing paren
        "2 @ 3",  # cannot tokenize
        "",
        "   ",
        "()",
    ],
)
def test_rejects_malformed_input(src):
    with pytest.raises(ExpressionError):
        compile_expression(src)


def test_missing_variable_at_call_time():
    e = compile_expression("t + u1", ("t", "u1"))
    with pytest.raises(ExpressionError, match="u1"):
        e(t=1.0)


def test_unreferenced_variables_are_optional():
    e = compile_expression("t + 1", ("t", "u1"))
    assert float(e(t=2.0)) == 3.0
