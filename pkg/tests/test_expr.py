import math
import struct

import numpy as np
import pytest

from ellcert.errors import (
    ExprDomainError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownIdentifierError,
)
from ellcert.expr import (
    eval_array,
    eval_constant,
    eval_expr,
    free_vars,
    parse_expr,
    substitute,
    to_string,
)


def test_parse_gradient_linear_combination():
    e = parse_expr("(1 - 2)*s - s^3 + 0.5*gnorm", dim=1)
    assert free_vars(e) == {"s", "gnorm"}


def test_parse_out_of_range_variable():
    with pytest.raises(UnknownIdentifierError) as err:
        parse_expr("abs(s)*x3", dim=2)
    assert err.value.name == "x3"


def test_parse_sign_min():
    e = parse_expr("sign(s)*min(s^2, 1)", dim=1)
    assert eval_expr(e, {"s": -0.5}) == -0.25
    assert eval_expr(e, {"s": 3.0}) == 1.0


def test_eval_square():
    e = parse_expr("s^2", dim=1)
    assert eval_expr(e, {"s": 3.0}) == 9.0


def test_eval_pospart():
    e = parse_expr("pospart(s)", dim=1)
    assert eval_expr(e, {"s": -2.0}) == 0.0
    assert eval_expr(e, {"s": 2.5}) == 2.5


def test_eval_sign_zero():
    e = parse_expr("sign(s)", dim=1)
    assert eval_expr(e, {"s": 0.0}) == 0.0


def test_syntax_error_position():
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("s + ", dim=1)
    assert err.value.position == 4
    with pytest.raises(ExprSyntaxError):
        parse_expr("min(s)", dim=1)  # wrong arity
    with pytest.raises(ExprSyntaxError):
        parse_expr("s 1", dim=1)


def test_unknown_function():
    with pytest.raises(UnknownIdentifierError):
        parse_expr("tanh(s)", dim=1)


def test_unbound_variable():
    e = parse_expr("s + gnorm", dim=1)
    with pytest.raises(UnboundVariableError):
        eval_expr(e, {"s": 1.0})


def test_division_by_zero_is_reported():
    e = parse_expr("1/s", dim=1)
    with pytest.raises(ExprDomainError):
        eval_expr(e, {"s": 0.0})


def test_sqrt_of_negative_is_reported():
    e = parse_expr("sqrt(s)", dim=1)
    with pytest.raises(ExprDomainError):
        eval_expr(e, {"s": -1.0})
    assert eval_expr(e, {"s": 4.0}) == 2.0


def test_power_rules():
    e = parse_expr("s^3", dim=1)
    assert eval_expr(e, {"s": -2.0}) == -8.0
    frac = parse_expr("s^0.5", dim=1)
    assert frac and eval_expr(frac, {"s": 4.0}) == 2.0
    with pytest.raises(ExprDomainError):
        eval_expr(frac, {"s": -4.0})


ROUND_TRIP_CASES = [
    "(1 - 2)*s - s^3 + 0.5*gnorm",
    "sign(s)*min(s^2, 1)",
    "-s^2",
    "s^-2",
    "2^3^2",
    "a - (b - c)",
    "a / (b / c)",
    "a / b / c",
    "-(s + 1)",
    "pospart(s - 0.25) * exp(-x1)",
    "max(abs(xi1), gnorm) + sin(x1)*cos(x1)",
    "1e-06 + 2.5e3*s",
    "(s + 1)^(x1 + 1)",
    "-(-s)",
]


@pytest.mark.parametrize("text", ROUND_TRIP_CASES)
def test_round_trip(text):
    e = parse_expr(text, dim=1, constants=("a", "b", "c"))
    assert parse_expr(to_string(e), dim=1, constants=("a", "b", "c")) == e


def test_round_trip_after_substitution():
    e = parse_expr("(lambda1 - eps)*s + Lmax*gnorm", dim=1,
                   constants=("lambda1", "eps", "Lmax"))
    bound = substitute(e, {"lambda1": 2.5, "eps": 3.5, "Lmax": 0.75})
    assert free_vars(bound) == {"s", "gnorm"}
    # negative values are wrapped so printing still round-trips
    assert parse_expr(to_string(bound), dim=1) == bound
    assert eval_expr(bound, {"s": 2.0, "gnorm": 4.0}) == (2.5 - 3.5) * 2.0 + 0.75 * 4.0


def test_eval_is_bit_deterministic():
    e = parse_expr("sin(s)*exp(x1) - cos(gnorm)/(s + 2)", dim=1)
    env = {"s": 0.7310585786300049, "x1": 0.25, "gnorm": 1.4142135623730951}
    a = eval_expr(e, env)
    b = eval_expr(e, env)
    assert struct.pack("<d", a) == struct.pack("<d", b)


def test_eval_array_broadcasts():
    e = parse_expr("s^2 + x1", dim=1)
    s = np.linspace(-2, 2, 5)
    x = np.full(5, 0.5)
    out = eval_array(e, {"s": s, "x1": x})
    assert np.array_equal(out, s**2 + 0.5)


# ten hand-checked points per built-in, 1e-15 tolerance
_BUILTIN_POINTS = {
    "abs": [(v, abs(v)) for v in (-3.5, -1.0, -0.25, -1e-8, 0.0, 1e-8, 0.5, 1.0, 2.25, 7.5)],
    "sign": [(v, math.copysign(1.0, v) if v != 0 else 0.0)
             for v in (-9.0, -2.5, -1.0, -1e-12, 0.0, 1e-12, 0.5, 1.0, 3.0, 8.5)],
    "exp": [(v, math.exp(v)) for v in (-3.0, -2.0, -1.0, -0.5, 0.0, 0.25, 0.5, 1.0, 2.0, 3.0)],
    "sin": [(v, math.sin(v)) for v in (-3.0, -1.5, -1.0, -0.5, 0.0, 0.25, 0.5, 1.0, 2.0, 3.0)],
    "cos": [(v, math.cos(v)) for v in (-3.0, -1.5, -1.0, -0.5, 0.0, 0.25, 0.5, 1.0, 2.0, 3.0)],
    "sqrt": [(v, math.sqrt(v)) for v in (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 6.25, 9.0, 16.0, 100.0)],
    "pospart": [(v, max(v, 0.0)) for v in (-5.0, -1.0, -0.25, -1e-9, 0.0, 1e-9, 0.1, 1.0, 2.5, 9.0)],
}


@pytest.mark.parametrize("fn", sorted(_BUILTIN_POINTS))
def test_builtin_tables(fn):
    e = parse_expr(f"{fn}(s)", dim=1)
    for v, expected in _BUILTIN_POINTS[fn]:
        assert eval_expr(e, {"s": v}) == pytest.approx(expected, abs=1e-15)


def test_two_arg_builtin_tables():
    emin = parse_expr("min(s, gnorm)", dim=1)
    emax = parse_expr("max(s, gnorm)", dim=1)
    pairs = [(-1.0, 1.0), (0.0, 0.0), (2.0, 2.0), (3.5, -3.5), (1e-9, -1e-9),
             (7.0, 5.0), (-2.0, -4.0), (0.5, 0.25), (-0.1, 0.1), (9.0, 10.0)]
    for a, b in pairs:
        env = {"s": a, "gnorm": b}
        assert eval_expr(emin, env) == min(a, b)
        assert eval_expr(emax, env) == max(a, b)


def test_eval_constant():
    assert eval_constant("0.5*lambda1", {"lambda1": 8.0}) == 4.0
    assert eval_constant("0.3*Lmax", {"Lmax": 2.0, "lambda1": 1.0}) == 0.6
    with pytest.raises(UnknownIdentifierError):
        eval_constant("0.3*L", {"Lmax": 2.0})
