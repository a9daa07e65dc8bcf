import math

import numpy as np
import pytest

from library.catalog import (
    Branch,
    EntryName,
    build,
    default_parameters,
    horizon_null_residual,
    induced_data_closed_form,
    killing_norm,
    list_entries,
    ricci_residual,
    spacetime_killing_residual,
)
from library.errors import HorizonError, ParameterError
from library.initial_data import surface_gravity, validate


def kerr_kappa(m: float, a: float, inner: bool = False) -> float:
    root = math.sqrt(m * m - a * a)
    rh = m - root if inner else m + root
    return 2 * root / (2 * (rh * rh + a * a))


HORIZON_ENTRIES = [
    ("schwarzschild", {}, None),
    ("kerr", {}, "outer"),
    ("kerr", {}, "inner"),
    ("misner", {}, None),
    ("quotient_schwarzschild", {}, None),
    ("taub_nut", {}, "plus"),
    ("taub_nut", {}, "minus"),
]


# ============== Test def build ==============
def test_list_entries():
    assert list_entries() == ["schwarzschild", "kerr", "misner", "quotient_schwarzschild", "taub_nut"]


def test_default_parameters_are_copies():
    params = default_parameters("kerr")
    params["a"] = 0.9
    assert default_parameters(EntryName.kerr)["a"] == 0.5


@pytest.mark.parametrize(
    "name,params,branch,kappa",
    [
        ("schwarzschild", {}, None, 0.25),
        ("schwarzschild", {"m": 2.0}, None, 0.125),
        ("kerr", {}, "outer", kerr_kappa(1.0, 0.5)),
        ("kerr", {"a": 0.9}, "inner", kerr_kappa(1.0, 0.9, inner=True)),
        ("misner", {}, None, 1.0),
        ("quotient_schwarzschild", {}, None, 1.0),
        ("taub_nut", {}, "plus", 1.0),
        ("taub_nut", {"m": 1.0, "l": 1.0}, "minus", 2 * math.sqrt(2) / ((1 - math.sqrt(2)) ** 2 + 1)),
    ],
)
def test_closed_form_surface_gravity(name: str, params: dict, branch: str | None, kappa: float):
    sol = build(name, params, branch)
    assert sol.kappa_closed_form == pytest.approx(kappa)
    assert surface_gravity(induced_data_closed_form(sol)) == pytest.approx(kappa, rel=1e-10)


@pytest.mark.parametrize(
    "name,params,branch",
    [
        ("kerr", {"a": 1.5}, None),
        ("kerr", {"a": 1.0}, None),
        ("kerr", {"a": 0.0}, None),
        ("kerr", {}, "plus"),
        ("schwarzschild", {"m": -1.0}, None),
        ("schwarzschild", {"a": 0.5}, None),
        ("schwarzschild", {}, "outer"),
        ("schwarzschild", {"m": math.inf}, None),
        ("misner", {"alpha": 0.0}, None),
        ("taub_nut", {"l": 0.0}, None),
        ("taub_nut", {}, "sideways"),
        ("reissner_nordstrom", {}, None),
    ],
)
def test_build_rejects(name: str, params: dict, branch: str | None):
    with pytest.raises(ParameterError):
        build(name, params, branch)


def test_default_branches():
    assert build("kerr").branch == Branch.outer
    assert build("taub_nut").branch == Branch.plus
    assert build("kerr", branch="inner").label == "kerr[inner]"
    assert build("misner").label == "misner"


# ============== Test the class SpacetimeSolution ==============
def test_embed_places_horizon_value():
    sol = build("schwarzschild", {"m": 1.5})
    np.testing.assert_allclose(sol.embed([0.1, 1.0, 2.0]), [3.0, 0.1, 1.0, 2.0])
    assert sol.transverse_index == 0
    assert sol.horizon_slots == [1, 2, 3]


def test_horizon_grid_varies_theta_only():
    sol = build("schwarzschild")
    grid = sol.horizon_grid(7)
    assert grid.shape == (7, 3)
    assert len(set(grid[:, 0])) == 1
    assert len(set(grid[:, 1])) == 7


def test_untagged_misner_has_no_horizon():
    sol = build("misner", {"alpha": 1.0})
    assert sol.horizon is None
    assert sol.kappa_closed_form is None
    with pytest.raises(HorizonError):
        induced_data_closed_form(sol)
    with pytest.raises(HorizonError):
        horizon_null_residual(sol, [0.0, 0.0, 0.0])
    # the spacetime oracles still apply
    assert spacetime_killing_residual(sol, [0.1, 0.2, 0.3, 0.4]) == pytest.approx(0.0, abs=1e-15)


# ============== Test oracles ==============
@pytest.mark.parametrize("name,params,branch", HORIZON_ENTRIES)
def test_vacuum(name: str, params: dict, branch: str | None):
    sol = build(name, params, branch)
    for p in sol.vacuum_grid(2):
        assert ricci_residual(sol, p) < 1e-8


@pytest.mark.parametrize("name,params,branch", HORIZON_ENTRIES)
def test_w_is_killing_and_null_on_horizon(name: str, params: dict, branch: str | None):
    sol = build(name, params, branch)
    for p in sol.chart.random_points(5, seed=3):
        assert spacetime_killing_residual(sol, p) < 1e-10
    for x in sol.horizon_grid(5):
        assert horizon_null_residual(sol, x) < 1e-12


def test_w_is_timelike_outside_schwarzschild():
    sol = build("schwarzschild")
    assert killing_norm(sol, [3.0, 0.0, 1.0, 0.0]) == pytest.approx(2.0 / 3.0 - 1.0)


@pytest.mark.parametrize("name,params,branch", HORIZON_ENTRIES)
def test_closed_form_data_is_valid(name: str, params: dict, branch: str | None):
    sol = build(name, params, branch)
    data = induced_data_closed_form(sol)
    report = validate(data, data.chart.grid(3))
    assert report.passed
    assert report.kappa == pytest.approx(sol.kappa_closed_form, rel=1e-10)
