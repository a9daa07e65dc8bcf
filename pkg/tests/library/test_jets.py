import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from library.errors import DomainError, JetOrderError
from library.jets import Jet, check_order, jet_solve, multi_indices, n_coefficients


def xy(order: int, x: float, y: float) -> tuple[Jet, Jet]:
    return Jet.variable(2, order, 0, x), Jet.variable(2, order, 1, y)


# ============== Test multi-index bookkeeping ==============
def test_multi_indices_graded_order():
    assert multi_indices(2, 2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


@pytest.mark.parametrize("dim,order", [(1, 0), (1, 4), (2, 3), (3, 2), (4, 4)])
def test_n_coefficients_matches_indices(dim: int, order: int):
    assert len(multi_indices(dim, order)) == n_coefficients(dim, order)


@pytest.mark.parametrize("order", [-1, 5, 1.5])
def test_check_order_rejects(order):
    with pytest.raises(JetOrderError):
        check_order(order)


def test_jet_rejects_wrong_length():
    with pytest.raises(ValueError):
        Jet(2, 1, [1.0, 2.0])


# ============== Test the class Jet ==============
def test_product_matches_polynomial():
    x, y = xy(3, 0.5, -1.0)
    f = x * x * y + 3.0 * y
    # f = x^2 y + 3y
    assert f.value == pytest.approx(0.25 * -1.0 - 3.0)
    assert f.derivative((1, 0)) == pytest.approx(2 * 0.5 * -1.0)
    assert f.derivative((0, 1)) == pytest.approx(0.25 + 3.0)
    assert f.derivative((2, 1)) == pytest.approx(2.0)
    assert f.derivative((3, 0)) == pytest.approx(0.0)


def test_hessian_of_quadratic():
    x, y = xy(2, 1.0, 2.0)
    f = x * x + 3.0 * x * y - y * y
    np.testing.assert_allclose(f.hessian(), [[2.0, 3.0], [3.0, -2.0]])
    np.testing.assert_allclose(f.gradient(), [2.0 + 6.0, 3.0 - 4.0])


@pytest.mark.parametrize(
    "method,function,derivative",
    [
        ("sin", math.sin, math.cos),
        ("cos", math.cos, lambda c: -math.sin(c)),
        ("exp", math.exp, math.exp),
        ("log", math.log, lambda c: 1.0 / c),
        ("sqrt", math.sqrt, lambda c: 0.5 / math.sqrt(c)),
        ("atan", math.atan, lambda c: 1.0 / (1.0 + c * c)),
        ("tan", math.tan, lambda c: 1.0 / math.cos(c) ** 2),
    ],
)
def test_elementary_functions(method: str, function, derivative):
    c = 0.7
    jet = getattr(Jet.variable(1, 3, 0, c), method)()
    assert jet.value == pytest.approx(function(c))
    assert jet.derivative((1,)) == pytest.approx(derivative(c))


def test_third_derivative_of_sin_product():
    x, y = xy(4, 0.3, 0.8)
    f = (x * y).sin()
    # d^3/dx^3 sin(xy) = -y^3 cos(xy)
    assert f.derivative((3, 0)) == pytest.approx(-(0.8**3) * math.cos(0.24))


def test_rational_power():
    x = Jet.variable(1, 2, 0, 4.0)
    f = x ** Fraction(3, 2)
    assert f.value == pytest.approx(8.0)
    assert f.derivative((1,)) == pytest.approx(1.5 * 2.0)
    assert f.derivative((2,)) == pytest.approx(0.75 / 2.0)


def test_negative_integer_power():
    x = Jet.variable(1, 2, 0, 2.0)
    f = x**-2
    assert f.value == pytest.approx(0.25)
    assert f.derivative((1,)) == pytest.approx(-2.0 / 8.0)


@pytest.mark.parametrize(
    "make",
    [
        lambda x: x.log(),
        lambda x: x.sqrt(),
        lambda x: x.reciprocal(),
    ],
)
def test_domain_errors_at_zero(make):
    with pytest.raises(DomainError):
        make(Jet.variable(1, 1, 0, 0.0))


def test_fractional_power_of_negative_raises():
    with pytest.raises(DomainError):
        Jet.variable(1, 1, 0, -1.0) ** Fraction(1, 2)


def test_division_by_zero_scalar():
    with pytest.raises(DomainError):
        Jet.variable(1, 1, 0, 1.0) / 0


def test_incompatible_jets():
    with pytest.raises(ValueError):
        Jet.variable(1, 1, 0, 1.0) + Jet.variable(2, 1, 0, 1.0)


def test_partial_lowers_order():
    x, y = xy(3, 1.0, 2.0)
    f = x * x * y
    d = f.partial(0)
    assert d.order == 2
    assert d.value == pytest.approx(2 * 1.0 * 2.0)
    assert d.derivative((0, 1)) == pytest.approx(2.0)
    with pytest.raises(JetOrderError):
        Jet.constant(1, 0, 1.0).partial(0)


def test_truncate_is_prefix():
    x, y = xy(3, 0.2, 0.4)
    f = (x + y).exp()
    g = f.truncate(1)
    assert g.order == 1
    np.testing.assert_allclose(g.coeffs, f.coeffs[:3])
    with pytest.raises(JetOrderError):
        g.truncate(2)


def test_restrict_keeps_variables():
    x, y = xy(2, 1.0, 2.0)
    f = x * y
    g = f.restrict([1])
    assert g.dim == 1
    assert g.derivative((1,)) == pytest.approx(1.0)


def test_compose_chain_rule():
    # f(u) = u^2 at u0 = 3, u(s) = 3 + 2 s  ->  d/ds f = 2 u u' = 12
    u = Jet.variable(1, 2, 0, 3.0)
    f = u * u
    inner = [Jet(1, 2, [3.0, 2.0, 0.0])]
    h = f.compose(inner)
    assert h.value == pytest.approx(9.0)
    assert h.derivative((1,)) == pytest.approx(12.0)
    assert h.derivative((2,)) == pytest.approx(8.0)


def test_gradient_needs_order():
    with pytest.raises(JetOrderError):
        Jet.constant(2, 0, 1.0).gradient()
    with pytest.raises(JetOrderError):
        Jet.constant(2, 1, 1.0).hessian()


# ============== Test def jet_solve ==============
def test_jet_solve_matches_numpy_and_derivative():
    s = Jet.variable(1, 1, 0, 0.5)
    one = Jet.constant(1, 1, 1.0)
    matrix = [[2.0 * one, s], [s, 3.0 * one]]
    rhs = [one, s]
    x = jet_solve(matrix, rhs)

    a = np.array([[2.0, 0.5], [0.5, 3.0]])
    b = np.array([1.0, 0.5])
    np.testing.assert_allclose([j.value for j in x], np.linalg.solve(a, b))

    # d/ds of A^-1 b = A^-1 (b' - A' x)
    da = np.array([[0.0, 1.0], [1.0, 0.0]])
    db = np.array([0.0, 1.0])
    expected = np.linalg.solve(a, db - da @ np.linalg.solve(a, b))
    np.testing.assert_allclose([j.derivative((1,)) for j in x], expected)


def test_jet_solve_singular():
    zero = Jet.constant(1, 1, 0.0)
    with pytest.raises(DomainError):
        jet_solve([[zero, zero], [zero, zero]], [zero, zero])


# ============== property tests ==============
values = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(a=values, b=values, c=values)
def test_product_rule_property(a: float, b: float, c: float):
    x, y = xy(2, a, b)
    f = (x + c) * (y.sin() + 2.0)
    g = x + c
    h = y.sin() + 2.0
    assert f.derivative((1, 1)) == pytest.approx(
        g.derivative((1, 0)) * h.derivative((0, 1)), abs=1e-12
    )


@settings(max_examples=50, deadline=None)
@given(a=values)
def test_exp_log_inverse_property(a: float):
    x = Jet.variable(1, 4, 0, a)
    np.testing.assert_allclose(x.exp().log().coeffs, x.coeffs, atol=1e-10)
