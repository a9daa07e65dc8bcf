import json
import math
from pathlib import Path

import numpy as np
import pytest

from library.errors import ConstraintError, InputFileError, UnknownIdentifierError, VanishingVectorError
from library.geometry import Chart, MetricField, Signature, VectorField
from library.initial_data import (
    InitialDataSet,
    connection_one_form,
    connection_one_form_field,
    degenerate_metric,
    degenerate_metric_field,
    kernel_check,
    killing_residual,
    length_residual,
    load_initial_data,
    omega_lie_residual,
    pullback,
    reconstruction_residual,
    surface_gravity,
    validate,
)

DATA_DIR = Path(__file__).parents[2] / "data"


@pytest.fixture
def horizon() -> InitialDataSet:
    chart = Chart.from_names(
        ["v", "theta", "phi"],
        params={"m": 1.0},
        bounds={"theta": (0.0, math.pi), "phi": (0.0, 2 * math.pi)},
    )
    return InitialDataSet.from_strings(
        "horizon",
        chart,
        [["1/(16*m^2)", "0", "0"], ["0", "4*m^2", "0"], ["0", "0", "4*m^2*sin(theta)^2"]],
        ["1", "0", "0"],
    )


@pytest.fixture
def torus() -> InitialDataSet:
    chart = Chart.from_names(["x", "y"], bounds={"x": (0.0, 2 * math.pi), "y": (0.0, 2 * math.pi)})
    return InitialDataSet.from_strings("torus", chart, [["1", "0"], ["0", "1"]], ["1", "0"])


@pytest.fixture
def sphere_rotation() -> InitialDataSet:
    chart = Chart.from_names(["theta", "phi"], bounds={"theta": (0.0, math.pi)})
    return InitialDataSet.from_strings("sphere", chart, [["1", "0"], ["0", "sin(theta)^2"]], ["0", "1"])


# ============== Test the class InitialDataSet ==============
def test_sigma_must_be_riemannian():
    chart = Chart.from_names(["x", "y"])
    with pytest.raises(ValueError):
        InitialDataSet(
            label="bad",
            chart=chart,
            sigma=MetricField.from_strings(chart, [["-1", "0"], ["0", "1"]], Signature.lorentzian),
            V=VectorField.from_strings(chart, ["1", "0"]),
        )


def test_fields_must_share_the_chart():
    chart = Chart.from_names(["x", "y"])
    other = Chart.from_names(["u", "w"])
    with pytest.raises(ValueError):
        InitialDataSet(
            label="bad",
            chart=chart,
            sigma=MetricField.from_strings(chart, [["1", "0"], ["0", "1"]]),
            V=VectorField.from_strings(other, ["1", "0"]),
        )


# ============== Test pointwise quantities ==============
def test_horizon_surface_gravity_and_one_form(horizon: InitialDataSet):
    assert surface_gravity(horizon) == pytest.approx(0.25)
    np.testing.assert_allclose(connection_one_form(horizon, [0.3, 1.0, 2.0]), [0.25, 0.0, 0.0])


def test_degenerate_metric_kills_v(horizon: InitialDataSet):
    p = [0.0, 1.2, 0.5]
    g = degenerate_metric(horizon, p)
    np.testing.assert_allclose(g @ horizon.V.values(p), 0.0, atol=1e-15)
    np.testing.assert_allclose(np.diag(g), [0.0, 4.0, 4.0 * math.sin(1.2) ** 2])


def test_killing_and_length_residuals(horizon: InitialDataSet, sphere_rotation: InitialDataSet):
    assert killing_residual(horizon, [0.0, 1.0, 1.0]) == pytest.approx(0.0, abs=1e-15)
    assert length_residual(horizon, horizon.sample_points(3)) == pytest.approx(0.0, abs=1e-15)

    # rotations of the round sphere are Killing but not of constant length
    assert killing_residual(sphere_rotation, [0.7, 0.0]) == pytest.approx(0.0, abs=1e-15)
    assert length_residual(sphere_rotation, sphere_rotation.sample_points(5)) > 0.1


def test_length_residual_needs_points(torus: InitialDataSet):
    with pytest.raises(ValueError):
        length_residual(torus, [])


def test_surface_gravity_rejects_varying_length(sphere_rotation: InitialDataSet):
    with pytest.raises(ConstraintError):
        surface_gravity(sphere_rotation)


def test_vanishing_v():
    chart = Chart.from_names(["x", "y"])
    data = InitialDataSet.from_strings("still", chart, [["1", "0"], ["0", "1"]], ["0", "0"])
    with pytest.raises(VanishingVectorError):
        connection_one_form(data, [0.0, 0.0])
    with pytest.raises(VanishingVectorError):
        length_residual(data, [[0.0, 0.0]])


# ============== Test derived fields ==============
def test_reconstruction_and_kernel(horizon: InitialDataSet):
    p = [0.1, 0.9, 3.0]
    assert reconstruction_residual(horizon, p) == pytest.approx(0.0, abs=1e-14)
    check = kernel_check(horizon, p)
    assert check.eigenvalue_ratio < 1e-14
    assert check.misalignment < 1e-12


def test_derived_fields_match_pointwise(horizon: InitialDataSet):
    p = [0.2, 1.1, 0.4]
    np.testing.assert_allclose(connection_one_form_field(horizon).values(p), connection_one_form(horizon, p))
    np.testing.assert_allclose(degenerate_metric_field(horizon).value(p), degenerate_metric(horizon, p), atol=1e-15)


def test_one_form_is_invariant(horizon: InitialDataSet, torus: InitialDataSet):
    assert omega_lie_residual(horizon, [0.0, 1.0, 1.0]) == pytest.approx(0.0, abs=1e-14)
    assert omega_lie_residual(torus, [1.0, 1.0]) == pytest.approx(0.0, abs=1e-14)


def test_one_form_of_tilted_torus():
    # V = ∂x + ∂y on the flat torus: κ = √2, ω = (1, 1)/√2
    chart = Chart.from_names(["x", "y"], bounds={"x": (0.0, 1.0), "y": (0.0, 1.0)})
    data = InitialDataSet.from_strings("tilted", chart, [["1", "0"], ["0", "1"]], ["1", "1"])
    assert surface_gravity(data) == pytest.approx(math.sqrt(2.0))
    np.testing.assert_allclose(connection_one_form(data, [0.5, 0.5]), [1 / math.sqrt(2.0)] * 2)
    np.testing.assert_allclose(degenerate_metric(data, [0.5, 0.5]), [[0.5, -0.5], [-0.5, 0.5]])


# ============== Test def validate ==============
def test_validate_accepts_horizon(horizon: InitialDataSet):
    report = validate(horizon)
    assert report.passed
    assert report.kappa == pytest.approx(0.25)
    assert report.n_points == 11**3


def test_validate_rejects_non_killing_field():
    chart = Chart.from_names(["x", "y"], samples={"x": (0.5, 1.5), "y": (0.0, 1.0)})
    data = InitialDataSet.from_strings("warped", chart, [["1", "0"], ["0", "1 + x^2"]], ["1", "0"])
    report = validate(data, chart.grid(4))
    assert not report.passed
    assert report.killing_residual > 0.1
    assert report.kappa is None


def test_validate_rejects_varying_length(sphere_rotation: InitialDataSet):
    report = validate(sphere_rotation, sphere_rotation.sample_points(5))
    assert not report.passed
    assert report.killing_residual < 1e-12
    assert report.length_residual > 0.1


# ============== Test def pullback ==============
def test_pullback_keeps_surface_gravity(horizon: InitialDataSet):
    chart = Chart.from_names(
        ["w", "theta", "phi"],
        params={"m": 1.0},
        bounds={"theta": (0.0, math.pi), "phi": (0.0, 2 * math.pi)},
    )
    pulled = pullback(horizon, chart, ["2*w", "theta", "phi"])
    p = [0.1, 1.0, 1.0]
    np.testing.assert_allclose(pulled.V.values(p), [0.5, 0.0, 0.0])
    assert pulled.sigma.value(p)[0, 0] == pytest.approx(0.25)
    assert surface_gravity(pulled) == pytest.approx(0.25)
    assert validate(pulled, chart.grid(3)).passed


# ============== Test def load_initial_data ==============
def test_load_shipped_files():
    data = load_initial_data(DATA_DIR / "schwarzschild-horizon.json")
    assert data.chart.names == ("v", "theta", "phi")
    assert surface_gravity(data) == pytest.approx(0.25)

    misner = load_initial_data(DATA_DIR / "misner-horizon.json")
    assert surface_gravity(misner) == pytest.approx(1.0)


def test_load_rotating_plane_fails_validation():
    data = load_initial_data(DATA_DIR / "rotating-plane.json")
    assert not validate(data).passed


def test_load_missing_file(tmp_path: Path):
    with pytest.raises(InputFileError):
        load_initial_data(tmp_path / "nothing.json")


def test_load_invalid_json(tmp_path: Path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(InputFileError):
        load_initial_data(path)


def test_load_wrong_shape(tmp_path: Path):
    path = tmp_path / "shape.json"
    payload = {"label": "x", "coords": [{"name": "x"}, {"name": "y"}], "sigma": [["1", "0"]], "V": ["1", "0"]}
    path.write_text(json.dumps(payload))
    with pytest.raises(InputFileError):
        load_initial_data(path)


@pytest.mark.parametrize(
    "coords,sigma",
    [
        ([{"name": "x"}, {"name": "y"}], [["1", "x"], ["0", "1"]]),
        ([{"name": "x", "min": 2.0, "max": 1.0}, {"name": "y"}], [["1", "0"], ["0", "1"]]),
        ([{"name": "y"}, {"name": "y"}], [["1", "0"], ["0", "1"]]),
    ],
)
def test_load_inconsistent_data(tmp_path: Path, coords: list[dict], sigma: list[list[str]]):
    path = tmp_path / "inconsistent.json"
    path.write_text(json.dumps({"label": "x", "coords": coords, "sigma": sigma, "V": ["1", "0"]}))
    with pytest.raises(InputFileError):
        load_initial_data(path)


def test_load_unknown_identifier(tmp_path: Path):
    path = tmp_path / "unknown.json"
    payload = {
        "label": "x",
        "coords": [{"name": "x"}, {"name": "y"}],
        "sigma": [["1", "0"], ["0", "k"]],
        "V": ["1", "0"],
    }
    path.write_text(json.dumps(payload))
    with pytest.raises(UnknownIdentifierError):
        load_initial_data(path)
