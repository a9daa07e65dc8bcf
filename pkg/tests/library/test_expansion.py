import math

import numpy as np
import pytest

from library.catalog import build, induced_data_closed_form
from library.expansion import (
    antisymmetric_part,
    equivariance_residual,
    first_order_metric,
    q1,
    q1_coordinate_components,
    remainder_slope,
    structural_residual,
    symmetrization_residual,
    transversal_gradient,
)
from library.geometry import Chart, exterior_derivative_oneform
from library.initial_data import InitialDataSet


@pytest.fixture
def schwarzschild() -> InitialDataSet:
    return induced_data_closed_form(build("schwarzschild"))


@pytest.fixture
def misner() -> InitialDataSet:
    return induced_data_closed_form(build("misner"))


# ============== Test def q1 ==============
def test_schwarzschild_q1(schwarzschild: InitialDataSet):
    result = q1(schwarzschild, [0.0, 1.0, 2.0])
    assert result.kappa == pytest.approx(0.25)
    np.testing.assert_allclose(result.q1_components, np.diag([-0.5, 1.0, 1.0]), atol=1e-10)


def test_schwarzschild_q1_coordinates(schwarzschild: InitialDataSet):
    theta = 1.0
    q = q1_coordinate_components(schwarzschild, [0.0, theta, 2.0])
    # ∂_r g of the ingoing chart at r = 2m
    np.testing.assert_allclose(q, np.diag([-0.5, 4.0, 4.0 * math.sin(theta) ** 2]), atol=1e-10)


def test_misner_q1_block_vanishes(misner: InitialDataSet):
    result = q1(misner, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(result.q1_components, np.diag([-2.0, 0.0, 0.0]), atol=1e-12)


def test_taub_nut_structure():
    data = induced_data_closed_form(build("taub_nut"))
    result = q1(data, [0.5, 1.2, 0.3])
    np.testing.assert_allclose(result.q1_components[0], [-2.0, 0.0, 0.0], atol=1e-12)
    assert structural_residual(result) < 1e-12


@pytest.mark.parametrize("branch", ["outer", "inner"])
def test_kerr_symmetrization(branch: str):
    sol = build("kerr", branch=branch)
    data = induced_data_closed_form(sol)
    result = q1(data, [0.0, 1.1, 0.0], sol.kappa_closed_form)
    assert structural_residual(result) < 1e-12
    assert symmetrization_residual(result) < 1e-12
    # dω does not vanish on a rotating horizon
    assert np.max(np.abs(antisymmetric_part(result))) > 1e-6


@pytest.mark.parametrize("branch", ["outer", "inner"])
@pytest.mark.parametrize("theta", [math.pi / 2, 1.1])
def test_kerr_antisymmetric_part_is_d_omega(branch: str, theta: float):
    sol = build("kerr", branch=branch)
    x = [0.0, theta, 0.0]
    result = q1(sol.closed_form_data, x, sol.kappa_closed_form)
    e = result.frame[:, 1:].T
    # ω from the catalog's closed form, not from σ and V
    d_omega = exterior_derivative_oneform(sol.closed_form_omega, x)
    expected = e @ d_omega @ e.T / (2.0 * sol.kappa_closed_form)
    np.testing.assert_allclose(antisymmetric_part(result), expected, atol=1e-9)
    a = transversal_gradient(sol.closed_form_data, x, sol.kappa_closed_form)
    np.testing.assert_allclose(0.5 * (a - a.T), expected, atol=1e-9)


def test_transversal_gradient_is_symmetric_without_rotation(schwarzschild: InitialDataSet):
    a = transversal_gradient(schwarzschild, [0.0, 0.8, 0.0])
    np.testing.assert_allclose(a, a.T, atol=1e-12)
    np.testing.assert_allclose(a, 0.5 * np.eye(2), atol=1e-10)


def test_explicit_kappa_is_used(schwarzschild: InitialDataSet):
    result = q1(schwarzschild, [0.0, 1.0, 0.0], kappa=0.5)
    assert result.q1_components[0, 0] == -1.0


# ============== Test def first_order_metric ==============
def test_first_order_metric_chart_names(schwarzschild: InitialDataSet):
    model = first_order_metric(schwarzschild)
    assert model.chart.names == ("t", "v", "theta", "phi")

    chart = Chart.from_names(["t", "x"])
    data = InitialDataSet.from_strings("clash", chart, [["1", "0"], ["0", "1"]], ["1", "0"])
    assert first_order_metric(data).chart.names == ("t_null", "t", "x")


def test_first_order_metric_values(schwarzschild: InitialDataSet):
    theta = 1.0
    model = first_order_metric(schwarzschild)
    zero = model.order_zero([0.0, theta, 0.0])
    np.testing.assert_allclose(zero[0], [0.0, 1.0, 0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(np.diag(zero)[1:], [0.0, 4.0, 4.0 * math.sin(theta) ** 2], atol=1e-15)

    one = model.order_one([0.0, theta, 0.0])
    np.testing.assert_allclose(one[0], 0.0)
    t = 1e-3
    np.testing.assert_allclose(model.value(t, [0.0, theta, 0.0]), zero + t * one)


# ============== Test def remainder_slope ==============
def test_remainder_slope_quadratic():
    times = [1e-2, 3e-3, 1e-3, 3e-4]
    assert remainder_slope(times, [5.0 * t**2 for t in times]) == pytest.approx(2.0)


def test_remainder_slope_round_off_is_exact():
    assert remainder_slope([1e-2, 1e-3], [1e-15, 3e-16]) is None


def test_remainder_slope_rejects_zero_norm():
    with pytest.raises(ValueError):
        remainder_slope([1e-2, 1e-3], [1e-3, 0.0])


# ============== Test def equivariance_residual ==============
def test_equivariance_under_rescaled_time(schwarzschild: InitialDataSet):
    chart = Chart.from_names(
        ["vp", "theta", "phi"],
        params={"m": 1.0},
        bounds={"theta": (0.0, math.pi)},
    )
    residual = equivariance_residual(schwarzschild, chart, ["vp/2", "theta", "phi"], chart.grid(2))
    assert residual < 1e-8


def test_equivariance_under_polar_reparametrization(schwarzschild: InitialDataSet):
    chart = Chart.from_names(
        ["v", "thetap", "phi"],
        params={"m": 1.0},
        bounds={"thetap": (0.0, math.pi)},
    )
    points = [[0.0, 0.7, 0.1], [0.3, 1.6, 2.0]]
    residual = equivariance_residual(schwarzschild, chart, ["v", "thetap + 0.05*sin(2*thetap)", "phi"], points)
    assert residual < 1e-8
