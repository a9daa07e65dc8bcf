import types

import numpy as np
import pytest

from library import suite
from library.catalog import EntryName, build
from library.errors import TransversalError
from library.expr import parse
from library.settings import Foliation, Sampling, Settings, Tolerances
from library.suite import (
    ENGINE_ENTRY,
    EntrySelection,
    default_selections,
    engine_checks,
    finite_difference_residual,
    random_expression,
    riemann_symmetry_residual,
    rotation_residual,
    run_entry,
    run_suite,
)


@pytest.fixture
def settings(tmp_path, monkeypatch: pytest.MonkeyPatch) -> Settings:
    monkeypatch.chdir(tmp_path)
    return Settings()


# ============== Test the class EntrySelection ==============
def test_default_selections_cover_catalog():
    assert [s.name for s in default_selections()] == list(EntryName)


def test_selection_builds():
    sol = EntrySelection(name="kerr", params={"a": 0.3}, branch="inner").build()
    assert sol.label == "kerr[inner]"
    assert sol.params["a"] == 0.3


# ============== Test engine checks ==============
def test_random_expression_is_reproducible():
    a = [random_expression(np.random.default_rng(5)) for _ in range(3)]
    b = [random_expression(np.random.default_rng(5)) for _ in range(3)]
    assert a == b


def test_random_expressions_parse_and_evaluate():
    rng = np.random.default_rng(11)
    for _ in range(20):
        source = random_expression(rng)
        expr = parse(source, ["x", "y", "z"])
        assert set(expr.free_coords) <= {"x", "y", "z"}
        assert finite_difference_residual(source, rng.uniform(-1.0, 1.0, 3)) < 1e-6


def test_finite_difference_residual_known_expression():
    assert finite_difference_residual("sin(x)*y + z^2", np.array([0.3, -0.2, 0.5])) < 1e-7


def test_riemann_symmetries_of_kerr():
    sol = build("kerr")
    for p in sol.chart.random_points(3, seed=1):
        assert riemann_symmetry_residual(sol, p) < 1e-10


def test_engine_checks_pass(settings: Settings):
    records = engine_checks(settings, [EntrySelection(name="misner"), EntrySelection(name="schwarzschild")])
    assert [r.check for r in records] == ["jet_finite_difference", "riemann_symmetry", "riemann_symmetry"]
    assert all(r.entry == ENGINE_ENTRY for r in records)
    assert all(r.passed for r in records)


# ============== Test def run_entry ==============
def test_untagged_misner_runs_oracles_only(settings: Settings):
    records = run_entry(EntrySelection(name="misner", params={"alpha": 1.0}), settings)
    assert [r.check for r in records] == ["vacuum_ricci", "spacetime_killing"]
    assert all(r.passed for r in records)


def test_unbuildable_entry_is_a_failed_check(settings: Settings):
    records = run_entry(EntrySelection(name="kerr", params={"a": 1.5}), settings)
    assert len(records) == 1
    assert records[0].check == "build"
    assert not records[0].passed
    assert "0 < |a| < m" in records[0].detail


def test_run_suite_appends_engine_checks(settings: Settings):
    records = run_suite([EntrySelection(name="misner", params={"alpha": 1.0})], settings, workers=1)
    assert [r.entry for r in records[:2]] == ["misner", "misner"]
    assert records[-1].entry == ENGINE_ENTRY
    assert all(r.passed for r in records)


def test_entry_uses_configured_settings(tmp_path, monkeypatch: pytest.MonkeyPatch):
    monkeypatch.chdir(tmp_path)
    settings = Settings(
        tolerances=Tolerances(parallel=1e-7),
        sampling=Sampling(theta_grid=3, kappa_grid=4),
        foliation=Foliation(initial_step=2e-3, m_max=2),
    )
    seen: dict = {"kappa_points": []}
    original_kappa = suite.surface_gravity

    def recording_kappa(data, points=None, tolerance=None):
        seen["kappa_points"].append(len(points))
        return original_kappa(data, points, tolerance)

    def recording_evolve(sol, grid, **kwargs):
        seen["evolve"] = kwargs
        return types.SimpleNamespace(null_drift=np.zeros(len(grid)))

    def recording_jet(sol, fmap, x, m_max=None, h=None):
        seen["m_max"] = m_max
        raise TransversalError("stop after the settings reached the record")

    monkeypatch.setattr(suite, "surface_gravity", recording_kappa)
    monkeypatch.setattr(suite, "evolve_foliation", recording_evolve)
    monkeypatch.setattr(suite, "pullback_metric_jet", recording_jet)

    records = run_entry(EntrySelection(name="schwarzschild"), settings)

    assert seen["kappa_points"][0] == 4**3
    assert seen["evolve"]["tolerances"] == settings.tolerances
    assert seen["evolve"]["initial_step"] == 2e-3
    assert seen["m_max"] == 2
    failed = [r.check for r in records if not r.passed]
    assert failed == ["foliation_points"]


@pytest.mark.parametrize("branch", ["outer", "inner"])
def test_rotation_of_kerr_matches_closed_form_omega(branch: str):
    sol = build("kerr", branch=branch)
    x = np.array([0.0, np.pi / 2, 0.0])
    assert rotation_residual(sol, x) < 1e-9


@pytest.mark.slow
def test_schwarzschild_entry_passes(settings: Settings):
    records = run_entry(EntrySelection(name="schwarzschild"), settings)
    checks = {r.check for r in records}
    assert {"kappa_closed_form", "q1_deviation", "remainder_slope", "equivariance_v", "equivariance_theta"} <= checks
    failed = [r for r in records if not r.passed]
    assert failed == []


@pytest.mark.slow
def test_parallel_suite_matches_serial(settings: Settings):
    selections = [EntrySelection(name="misner"), EntrySelection(name="misner", params={"alpha": 1.0})]
    serial = run_suite(selections, settings, workers=1)
    parallel = run_suite(selections, settings, workers=2)
    assert [(r.entry, r.check) for r in serial] == [(r.entry, r.check) for r in parallel]
    assert [r.passed for r in parallel] == [r.passed for r in serial]
