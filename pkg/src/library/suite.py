"""Acceptance suite behind `horizon-lab verify`.

Each catalog entry runs independently and produces a list of CheckRecords;
the engine checks (jets against finite differences, curvature symmetries)
run once per suite. Entries fan out to a process pool when more than one
worker is configured; results are assembled in selection order.
"""

import concurrent.futures
import logging
import math
import typing as T

import numpy as np
from pydantic import BaseModel, Field

from library import catalog
from library.catalog import Branch, EntryName, SpacetimeSolution
from library.errors import HorizonLabError
from library.expansion import (
    antisymmetric_part,
    compare,
    equivariance_residual,
    q1,
    structural_residual,
    symmetrization_residual,
)
from library.expr import evaluate, eval_jet, parse
from library.foliation import (
    check_identities,
    evolve_foliation,
    induce_numeric,
    merge_times,
    pullback_metric_jet,
    stencil_times,
)
from library.geometry import Chart, connection, exterior_derivative_oneform, riemann_from_connection
from library.initial_data import (
    connection_one_form,
    kernel_check,
    killing_residual,
    length_residual,
    omega_lie_residual,
    reconstruction_residual,
    surface_gravity,
)
from library.schemas import CheckRecord
from library.settings import Settings

logger = logging.getLogger(__name__)

ENGINE_ENTRY = "engine"
_FD_STEP = 1e-5
_CORPUS_SIZE = 24
_CORPUS_POINTS = 3


class EntrySelection(BaseModel):
    name: EntryName
    params: T.Dict[str, float] = Field(default_factory=dict)
    branch: T.Optional[Branch] = None

    def build(self) -> SpacetimeSolution:
        return catalog.build(self.name, self.params, self.branch)


def default_selections() -> list[EntrySelection]:
    return [EntrySelection(name=name) for name in EntryName]


# ============== per-entry checks ==============


class _Recorder:
    """Collects CheckRecords; a failing computation becomes a failed check."""

    def __init__(self, entry: str):
        self.entry = entry
        self.records: list[CheckRecord] = []

    def add(self, check: str, residual: float, threshold: float, detail: str | None = None) -> None:
        record = CheckRecord.from_residual(self.entry, check, residual, threshold, detail)
        if not record.passed:
            logger.warning(f"{self.entry}: {check} = {residual:.3e} exceeds {threshold:.1e}")
        self.records.append(record)

    def run(self, check: str, threshold: float, fn: T.Callable[[], float], detail: str | None = None) -> None:
        try:
            residual = fn()
        except HorizonLabError as e:
            logger.error(f"{self.entry}: {check} raised {type(e).__name__}: {e}")
            self.records.append(CheckRecord.failure(self.entry, check, threshold, f"{type(e).__name__}: {e}"))
            return
        self.add(check, residual, threshold, detail)


def _max(values: T.Iterable[float]) -> float:
    return float(max(values, default=0.0))


def _kappa_checks(rec: _Recorder, sol: SpacetimeSolution, settings: Settings) -> None:
    tol, sampling = settings.tolerances, settings.sampling
    expected = sol.kappa_closed_form
    data = sol.closed_form_data
    assert expected is not None and data is not None
    points = data.sample_points(sampling.kappa_grid, sampling.pole_margin)
    rec.run(
        "kappa_closed_form",
        tol.kappa,
        lambda: abs(surface_gravity(data, points, tol.length) - expected),
        detail=f"closed form kappa = {expected!r}",
    )


def _oracle_checks(rec: _Recorder, sol: SpacetimeSolution, settings: Settings) -> None:
    tol, sampling = settings.tolerances, settings.sampling
    rec.run(
        "vacuum_ricci",
        tol.vacuum,
        lambda: _max(
            catalog.ricci_residual(sol, p) for p in sol.vacuum_grid(sampling.vacuum_grid, sampling.pole_margin)
        ),
    )
    points = sol.chart.random_points(sampling.random_points, sampling.seed, sampling.pole_margin)
    rec.run(
        "spacetime_killing",
        tol.spacetime_killing,
        lambda: _max(catalog.spacetime_killing_residual(sol, p) for p in points),
    )


def _horizon_checks(rec: _Recorder, sol: SpacetimeSolution, settings: Settings) -> None:
    tol = settings.tolerances
    grid = sol.horizon_grid(settings.sampling.theta_grid, settings.sampling.pole_margin)
    data = sol.closed_form_data
    assert data is not None

    rec.run("horizon_null", tol.horizon_null, lambda: _max(catalog.horizon_null_residual(sol, x) for x in grid))
    rec.run("closed_form_killing", tol.killing, lambda: _max(killing_residual(data, x) for x in grid))
    rec.run("closed_form_length", tol.length, lambda: length_residual(data, grid))

    # structural identities of the data
    kappa = sol.kappa_closed_form
    rec.run("reconstruction", tol.structural, lambda: _max(reconstruction_residual(data, x) for x in grid))
    rec.run(
        "omega_of_v",
        tol.structural,
        lambda: _max(abs(float(connection_one_form(data, x) @ data.V.values(x)) - kappa) for x in grid),
    )
    rec.run("omega_lie", tol.omega_lie, lambda: _max(omega_lie_residual(data, x) for x in grid))
    rec.run(
        "kernel_eigenvalue",
        tol.kernel,
        lambda: _max(kernel_check(data, x).eigenvalue_ratio for x in grid),
    )
    rec.run("kernel_alignment", tol.kernel, lambda: _max(kernel_check(data, x).misalignment for x in grid))
    rec.run(
        "closed_form_omega",
        tol.structural,
        lambda: _max(
            float(np.max(np.abs(connection_one_form(data, x) - sol.closed_form_omega.values(x)))) for x in grid
        ),
    )
    rec.run("rotation", tol.rotation, lambda: _max(rotation_residual(sol, x) for x in grid))


def rotation_residual(sol: SpacetimeSolution, x: np.ndarray) -> float:
    """Antisymmetric part of A against e dω eᵀ / 2κ, with ω the catalog's closed form."""
    data = sol.closed_form_data
    assert data is not None and sol.closed_form_omega is not None
    result = q1(data, x, sol.kappa_closed_form)
    e = result.frame[:, 1:].T
    d_omega = exterior_derivative_oneform(sol.closed_form_omega, x)
    expected = e @ d_omega @ e.T / (2.0 * result.kappa)
    return float(np.max(np.abs(antisymmetric_part(result) - expected)))


def _induced_checks(rec: _Recorder, sol: SpacetimeSolution, settings: Settings) -> None:
    tol = settings.tolerances
    grid = sol.horizon_grid(settings.sampling.theta_grid, settings.sampling.pole_margin)
    data = sol.closed_form_data
    assert data is not None
    try:
        induced = induce_numeric(sol, grid, tol.parallel)
    except HorizonLabError as e:
        rec.records.append(CheckRecord.failure(rec.entry, "induced_sigma", tol.induced, f"{type(e).__name__}: {e}"))
        return

    rec.run(
        "induced_sigma",
        tol.induced,
        lambda: _max(float(np.max(np.abs(induced.sigma.value(x) - data.sigma.value(x)))) for x in grid),
    )
    rec.run(
        "induced_v",
        tol.induced,
        lambda: _max(float(np.max(np.abs(induced.V.values(x) - data.V.values(x)))) for x in grid),
    )
    rec.run(
        "kappa_induced",
        tol.kappa,
        lambda: abs(surface_gravity(induced, grid, tol.length) - sol.kappa_closed_form),
    )


def _foliation_checks(rec: _Recorder, sol: SpacetimeSolution, settings: Settings) -> None:
    tol, fol = settings.tolerances, settings.foliation
    grid = sol.horizon_grid(settings.sampling.theta_grid, settings.sampling.pole_margin)
    q1_tolerance = tol.q1_kerr if sol.name == EntryName.kerr else tol.q1
    samples = merge_times(stencil_times(fol.h) + list(fol.remainder_times))
    try:
        fmap = evolve_foliation(
            sol,
            grid,
            t_max=fol.t_max,
            steps=fol.steps,
            t_samples=samples,
            tolerances=tol,
            initial_step=fol.initial_step,
        )
    except HorizonLabError as e:
        rec.records.append(
            CheckRecord.failure(rec.entry, "foliation", tol.null_drift, f"{type(e).__name__}: {e}")
        )
        return
    rec.add("null_drift", float(np.max(fmap.null_drift)), tol.null_drift)

    data = sol.closed_form_data
    assert data is not None
    reports, deviations, slopes, structural, symmetrization = [], [], [], [], []
    errors: list[str] = []
    for x in grid:
        try:
            record = pullback_metric_jet(sol, fmap, x, m_max=fol.m_max, h=fol.h)
            reports.append(check_identities(sol, x, fmap, record, tol, h=fol.h))
            expected = q1(data, x, sol.kappa_closed_form)
            comparison = compare(sol, record, expected=expected, remainder_times=fol.remainder_times)
        except HorizonLabError as e:
            errors.append(f"{x.tolist()}: {type(e).__name__}: {e}")
            continue
        deviations.append(comparison.max_deviation)
        slopes.append(comparison.slope)
        structural.append(structural_residual(expected))
        symmetrization.append(symmetrization_residual(expected))

    if errors:
        detail = "; ".join(errors)
        logger.error(f"{rec.entry}: {len(errors)} base points failed: {detail}")
        rec.records.append(CheckRecord.failure(rec.entry, "foliation_points", tol.gauge, detail))

    rec.add("transversal", _max(r.transversal_residual for r in reports), tol.transversal)
    rec.add("lie_row", _max(r.lie_row_residual for r in reports), tol.gauge)
    rec.add("commutator", _max(r.commutator_residual for r in reports), tol.commutator)
    rec.add("killing_transport", _max(r.killing_transport_residual for r in reports), tol.killing_transport)
    rec.add("jacobi", _max(r.jacobi_residual for r in reports), tol.jacobi)
    rec.add("kappa_numeric", _max(abs(r.kappa - sol.kappa_closed_form) for r in reports), tol.kappa)
    rec.add("q1_deviation", _max(deviations), q1_tolerance)
    rec.add("q1_structure", _max(structural), tol.structural)
    rec.add("q1_symmetrization", _max(symmetrization), tol.symmetrization)

    # distance of the fitted slope from the band; exact (None) slopes pass
    band = 0.5 * (tol.slope_high - tol.slope_low)
    center = 0.5 * (tol.slope_high + tol.slope_low)
    fitted = [s for s in slopes if s is not None]
    worst = _max(abs(s - center) for s in fitted)
    detail = f"slopes {[None if s is None else round(s, 4) for s in slopes]}"
    rec.add("remainder_slope", worst, band, detail)


def _equivariance_checks(rec: _Recorder, sol: SpacetimeSolution, settings: Settings) -> None:
    """Pull-back tests of q1 on Schwarzschild data: v = v'/2 and a θ reparametrization."""
    data = sol.closed_form_data
    assert data is not None
    tol, sampling = settings.tolerances, settings.sampling
    m = sol.params["m"]
    two_pi = 2.0 * math.pi

    stretched = Chart.from_names(
        ["vp", "theta", "phi"],
        params={"m": m},
        bounds={"theta": (0.0, math.pi)},
        samples={"phi": (0.0, two_pi)},
    )
    rec.run(
        "equivariance_v",
        tol.equivariance,
        lambda: equivariance_residual(
            data,
            stretched,
            ["vp/2", "theta", "phi"],
            stretched.grid(sampling.theta_grid, sampling.pole_margin, vary=("theta",)),
            sol.kappa_closed_form,
        ),
    )
    bent = Chart.from_names(
        ["v", "thetap", "phi"],
        params={"m": m},
        bounds={"thetap": (0.0, math.pi)},
        samples={"phi": (0.0, two_pi)},
    )
    rec.run(
        "equivariance_theta",
        tol.equivariance,
        lambda: equivariance_residual(
            data,
            bent,
            ["v", "thetap + 0.05*sin(2*thetap)", "phi"],
            bent.grid(sampling.theta_grid, sampling.pole_margin, vary=("thetap",)),
            sol.kappa_closed_form,
        ),
    )


def run_entry(selection: EntrySelection, settings: Settings) -> list[CheckRecord]:
    try:
        sol = selection.build()
    except HorizonLabError as e:
        label = selection.name.value
        logger.error(f"Cannot build {label}: {e}")
        return [CheckRecord.failure(label, "build", 0.0, str(e))]

    rec = _Recorder(sol.label)
    logger.info(f"Running acceptance checks for {sol.label}")
    _oracle_checks(rec, sol, settings)
    if sol.horizon is None:
        logger.warning(f"{sol.label} has no tagged horizon; only the spacetime oracles ran")
        return rec.records

    _kappa_checks(rec, sol, settings)
    _horizon_checks(rec, sol, settings)
    _induced_checks(rec, sol, settings)
    _foliation_checks(rec, sol, settings)
    if sol.name == EntryName.schwarzschild:
        _equivariance_checks(rec, sol, settings)

    failed = sum(not r.passed for r in rec.records)
    logger.info(f"{sol.label}: {len(rec.records) - failed}/{len(rec.records)} checks passed")
    return rec.records


def _run_entry_job(payload: tuple[dict, dict]) -> list[dict]:
    """Worker entry point; arguments and results cross the process boundary as dicts."""
    selection, settings = payload
    records = run_entry(EntrySelection.model_validate(selection), Settings(**settings))
    return [r.model_dump() for r in records]


# ============== engine checks ==============

_ATOMS = ("x", "y", "z", "0.5", "1.5", "2")
_UNARY = ("sin({})", "cos({})", "atan({})", "exp(0.3*({}))", "sqrt(2 + ({})^2)", "log(3 + sin({}))")
_BINARY = ("({}) + ({})", "({}) - ({})", "({})*({})", "({})/(2 + ({})^2)")


def random_expression(rng: np.random.Generator, depth: int = 3) -> str:
    """Random source over x, y, z built from everywhere-defined pieces."""
    if depth == 0 or rng.random() < 0.2:
        return str(rng.choice(_ATOMS))
    if rng.random() < 0.4:
        return str(rng.choice(_UNARY)).format(random_expression(rng, depth - 1))
    return str(rng.choice(_BINARY)).format(random_expression(rng, depth - 1), random_expression(rng, depth - 1))


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def finite_difference_residual(source: str, point: np.ndarray, step: float = _FD_STEP) -> float:
    """Jet gradient and Hessian against central differences of values and gradients."""
    coords = ("x", "y", "z")
    expr = parse(source, coords)

    def value(p: np.ndarray) -> float:
        return float(evaluate(expr, dict(zip(coords, p.tolist()))))

    def gradient(p: np.ndarray) -> np.ndarray:
        return eval_jet(expr, p, order=1).gradient()

    jet = eval_jet(expr, point, order=2)
    fd_gradient = np.empty(3)
    fd_hessian = np.empty((3, 3))
    for i in range(3):
        shift = np.zeros(3)
        shift[i] = step
        fd_gradient[i] = (value(point + shift) - value(point - shift)) / (2 * step)
        fd_hessian[i] = (gradient(point + shift) - gradient(point - shift)) / (2 * step)
    return max(_relative(fd_gradient, jet.gradient()), _relative(fd_hessian, jet.hessian()))


def riemann_symmetry_residual(sol: SpacetimeSolution, p: np.ndarray) -> float:
    """Pair symmetries and the first Bianchi identity, relative to |R|."""
    R = riemann_from_connection(connection(sol.metric, p, with_derivative=True))
    scale = max(1.0, float(np.max(np.abs(R))))
    residuals = (
        R + R.transpose(1, 0, 2, 3),
        R + R.transpose(0, 1, 3, 2),
        R - R.transpose(2, 3, 0, 1),
        R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3),
    )
    return max(float(np.max(np.abs(r))) for r in residuals) / scale


def engine_checks(settings: Settings, selections: T.Sequence[EntrySelection] | None = None) -> list[CheckRecord]:
    tol, sampling = settings.tolerances, settings.sampling
    rec = _Recorder(ENGINE_ENTRY)
    rng = np.random.default_rng(sampling.seed)

    corpus = [random_expression(rng) for _ in range(_CORPUS_SIZE)]
    points = rng.uniform(-1.0, 1.0, size=(_CORPUS_POINTS, 3))
    rec.run(
        "jet_finite_difference",
        tol.finite_difference,
        lambda: _max(finite_difference_residual(s, p) for s in corpus for p in points),
        detail=f"{len(corpus)} expressions x {len(points)} points",
    )

    for selection in selections or default_selections():
        try:
            sol = selection.build()
        except HorizonLabError as e:
            rec.records.append(CheckRecord.failure(ENGINE_ENTRY, "riemann_symmetry", tol.bianchi, str(e)))
            continue
        samples = sol.chart.random_points(5, sampling.seed, sampling.pole_margin)
        rec.run(
            "riemann_symmetry",
            tol.bianchi,
            lambda: _max(riemann_symmetry_residual(sol, p) for p in samples),
            detail=sol.label,
        )
    return rec.records


def run_suite(
    selections: T.Sequence[EntrySelection],
    settings: Settings,
    workers: int | None = None,
) -> list[CheckRecord]:
    workers = workers or settings.execution.workers
    logger.info(f"Verifying {[s.name.value for s in selections]} with {workers} worker(s)")
    if workers > 1 and len(selections) > 1:
        payloads = [(s.model_dump(mode="json"), settings.model_dump(mode="json")) for s in selections]
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_entry_job, payloads))
        records = [CheckRecord.model_validate(r) for chunk in results for r in chunk]
    else:
        records = [r for s in selections for r in run_entry(s, settings)]
    return records + engine_checks(settings, selections)
