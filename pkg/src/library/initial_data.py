"""Initial data sets (σ, V) on a horizon chart and the quantities they induce.

σ is a Riemannian metric and V a σ-Killing field of constant length. From
them follow the surface gravity κ = √σ(V,V), the connection one-form
ω = σ(·,V)/√σ(V,V) and the lightlike metric g = σ − ω⊗ω with kernel V.
"""

import json
import logging
import math
import typing as T
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, PrivateAttr, ValidationError, model_validator

from library.errors import ConstraintError, HorizonLabError, InputFileError, VanishingVectorError
from library.geometry import (
    AnalyticField,
    Chart,
    MetricField,
    OneFormField,
    Point,
    Signature,
    VectorField,
    lie_derivative_metric,
    lie_derivative_oneform,
    pullback_metric,
    pullback_vector,
)
from library.jets import Jet
from library.schemas import InitialDataFile
from library.settings import DEFAULTS, Tolerances

logger = logging.getLogger(__name__)


class InitialDataSet(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    label: str
    chart: Chart
    sigma: MetricField
    V: VectorField

    _kappa: dict = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def same_chart(self) -> T.Self:
        if self.sigma.chart != self.chart or self.V.chart != self.chart:
            raise ValueError(f"σ and V of {self.label!r} must live on the data chart")
        if self.sigma.signature != Signature.riemannian:
            raise ValueError(f"σ of {self.label!r} must be riemannian, got {self.sigma.signature.value}")
        return self

    @classmethod
    def from_strings(
        cls,
        label: str,
        chart: Chart,
        sigma: T.Sequence[T.Sequence[str]],
        V: T.Sequence[str],
    ) -> "InitialDataSet":
        return cls(
            label=label,
            chart=chart,
            sigma=MetricField.from_strings(chart, sigma, Signature.riemannian),
            V=VectorField.from_strings(chart, V),
        )

    def sample_points(self, n: int | None = None, margin: float | None = None) -> np.ndarray:
        margin = DEFAULTS.sampling.pole_margin if margin is None else margin
        return self.chart.grid(n or DEFAULTS.sampling.grid, margin)


class ValidationReport(BaseModel):
    label: str
    n_points: int
    killing_residual: float
    length_residual: float
    min_v_length: float
    kappa: float | None
    passed: bool


# ============== pointwise quantities ==============


def _length_squared(data: InitialDataSet, point: np.ndarray) -> float:
    v = data.V.values(point)
    return float(v @ data.sigma.value(point) @ v)


def killing_residual(data: InitialDataSet, p: Point) -> float:
    """‖𝓛_V σ‖ / ‖σ‖ at p (Frobenius norms)."""
    point = data.chart.check_point(p)
    lie = lie_derivative_metric(data.sigma, data.V, point)
    return float(np.linalg.norm(lie) / np.linalg.norm(data.sigma.value(point)))


def length_residual(data: InitialDataSet, points: T.Sequence[Point] | np.ndarray) -> float:
    """max |σ(V,V) − mean| / mean over the points."""
    if len(points) == 0:
        raise ValueError("length_residual needs at least one point")
    lengths = np.array([_length_squared(data, data.chart.check_point(p)) for p in points])
    mean = float(np.mean(lengths))
    if mean <= 0.0:
        msg = f"V vanishes on the samples of {data.label!r}"
        logger.error(msg)
        raise VanishingVectorError(msg)
    return float(np.max(np.abs(lengths - mean)) / mean)


def surface_gravity(
    data: InitialDataSet,
    points: T.Sequence[Point] | np.ndarray | None = None,
    tolerance: float | None = None,
) -> float:
    """κ = √(mean σ(V,V)), after checking that the length is constant."""
    tolerance = DEFAULTS.tolerances.length if tolerance is None else tolerance
    if points is None:
        key = ("grid", DEFAULTS.sampling.kappa_grid, tolerance)
        if key in data._kappa:
            return data._kappa[key]
        points = data.sample_points(DEFAULTS.sampling.kappa_grid)
    else:
        key = None

    residual = length_residual(data, points)
    if residual > tolerance:
        msg = f"σ(V,V) of {data.label!r} is not constant: relative deviation {residual:.3e} > {tolerance:.1e}"
        logger.error(msg)
        raise ConstraintError(msg)
    kappa = math.sqrt(float(np.mean([_length_squared(data, data.chart.check_point(p)) for p in points])))
    logger.debug(f"κ of {data.label!r} = {kappa!r}")
    if key is not None:
        data._kappa[key] = kappa
    return kappa


def connection_one_form(data: InitialDataSet, p: Point) -> np.ndarray:
    """ω_i = σ_ij V^j / √σ(V,V)."""
    point = data.chart.check_point(p)
    vv = _length_squared(data, point)
    if vv <= 0.0:
        msg = f"V vanishes at {point.tolist()}"
        logger.error(msg)
        raise VanishingVectorError(msg)
    return data.sigma.value(point) @ data.V.values(point) / math.sqrt(vv)


def degenerate_metric(data: InitialDataSet, p: Point) -> np.ndarray:
    point = data.chart.check_point(p)
    omega = connection_one_form(data, point)
    return data.sigma.value(point) - np.outer(omega, omega)


# ============== derived fields ==============


def _sigma_v_jets(data: InitialDataSet, point: np.ndarray, order: int) -> tuple[list[Jet], Jet]:
    sigma = data.sigma.jets(point, order)
    v = data.V.jets(point, order)
    n = data.chart.dim
    sv = [sum((sigma[i][j] * v[j] for j in range(1, n)), sigma[i][0] * v[0]) for i in range(n)]
    vv = sum((sv[i] * v[i] for i in range(1, n)), sv[0] * v[0])
    if vv.value <= 0.0:
        msg = f"V vanishes at {point.tolist()}"
        logger.error(msg)
        raise VanishingVectorError(msg)
    return sv, vv


def connection_one_form_field(data: InitialDataSet) -> OneFormField:
    n = data.chart.dim

    def component(i: int) -> AnalyticField:
        def jet_fn(point: np.ndarray, order: int) -> Jet:
            sv, vv = _sigma_v_jets(data, point, order)
            return sv[i] / vv.sqrt()

        return AnalyticField(n, jet_fn, f"omega[{i}]")

    return OneFormField(chart=data.chart, components=tuple(component(i) for i in range(n)))


def degenerate_metric_field(data: InitialDataSet) -> MetricField:
    n = data.chart.dim

    def component(i: int, j: int) -> AnalyticField:
        def jet_fn(point: np.ndarray, order: int) -> Jet:
            sv, vv = _sigma_v_jets(data, point, order)
            return data.sigma.components[i][j].jet(point, order) - sv[i] * sv[j] / vv

        return AnalyticField(n, jet_fn, f"lightlike[{i},{j}]")

    fields: list[list[AnalyticField]] = [[None] * n for _ in range(n)]  # type: ignore[list-item]
    for i in range(n):
        for j in range(i, n):
            fields[i][j] = fields[j][i] = component(i, j)
    return MetricField.from_fields(data.chart, fields, Signature.degenerate)


# ============== structural checks ==============


def reconstruction_residual(data: InitialDataSet, p: Point) -> float:
    """‖σ − (g + ω⊗ω)‖ / ‖σ‖ with g taken from the derived lightlike field."""
    point = data.chart.check_point(p)
    sigma = data.sigma.value(point)
    g = degenerate_metric_field(data).value(point)
    omega = connection_one_form_field(data).values(point)
    return float(np.linalg.norm(sigma - g - np.outer(omega, omega)) / np.linalg.norm(sigma))


class KernelCheck(BaseModel):
    eigenvalue_ratio: float
    misalignment: float


def kernel_check(data: InitialDataSet, p: Point) -> KernelCheck:
    """Smallest eigenvalue of g relative to the largest, and the sine of the
    angle between its eigenvector and V."""
    point = data.chart.check_point(p)
    eigenvalues, eigenvectors = np.linalg.eigh(degenerate_metric(data, point))
    order = np.argsort(np.abs(eigenvalues))
    ratio = abs(eigenvalues[order[0]]) / abs(eigenvalues[order[-1]])
    kernel = eigenvectors[:, order[0]]
    v = data.V.values(point)
    v = v / np.linalg.norm(v)
    misalignment = float(np.linalg.norm(v - (v @ kernel) * kernel))
    return KernelCheck(eigenvalue_ratio=float(ratio), misalignment=misalignment)


def omega_lie_residual(data: InitialDataSet, p: Point) -> float:
    point = data.chart.check_point(p)
    return float(np.linalg.norm(lie_derivative_oneform(connection_one_form_field(data), data.V, point)))


def validate(
    data: InitialDataSet,
    points: T.Sequence[Point] | np.ndarray | None = None,
    tolerances: Tolerances | None = None,
) -> ValidationReport:
    tolerances = tolerances or DEFAULTS.tolerances
    if points is None:
        points = data.sample_points()
    points = [data.chart.check_point(p) for p in points]
    logger.info(f"Validating {data.label!r} on {len(points)} points")

    killing = max(killing_residual(data, p) for p in points)
    lengths = [math.sqrt(max(_length_squared(data, p), 0.0)) for p in points]
    min_length = min(lengths)
    length = length_residual(data, points) if min_length > 0.0 else math.inf
    passed = killing <= tolerances.killing and length <= tolerances.length and min_length > 0.0
    kappa = surface_gravity(data, points, tolerances.length) if passed else None

    if passed:
        logger.info(f"{data.label!r} passed: killing {killing:.2e}, length {length:.2e}, κ = {kappa}")
    else:
        logger.warning(f"{data.label!r} failed: killing {killing:.2e}, length {length:.2e}")
    return ValidationReport(
        label=data.label,
        n_points=len(points),
        killing_residual=killing,
        length_residual=length,
        min_v_length=min_length,
        kappa=kappa,
        passed=passed,
    )


# ============== coordinate changes and files ==============


def pullback(
    data: InitialDataSet,
    new_chart: Chart,
    phi: T.Sequence[str],
    label: str | None = None,
) -> InitialDataSet:
    """(φ*σ, φ*V) for φ: new chart → data chart."""
    return InitialDataSet(
        label=label or f"{data.label} (pulled back)",
        chart=new_chart,
        sigma=pullback_metric(data.sigma, new_chart, phi),
        V=pullback_vector(data.V, new_chart, phi),
    )


def load_initial_data(path: Path) -> InitialDataSet:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        msg = f"Cannot read initial data file {path}: {e}"
        logger.error(msg)
        raise InputFileError(msg) from e
    try:
        parsed = InitialDataFile.model_validate(raw)
    except ValidationError as e:
        msg = f"Malformed initial data file {path}: {e}"
        logger.error(msg)
        raise InputFileError(msg) from e

    try:
        chart = Chart.from_names(
            [c.name for c in parsed.coords],
            params=parsed.params,
            bounds={c.name: c.bounds for c in parsed.coords},
        )
        data = InitialDataSet.from_strings(parsed.label, chart, parsed.sigma, parsed.V)
    except HorizonLabError:
        # syntax and identifier errors keep their own type
        raise
    except (ValueError, ValidationError) as e:
        msg = f"Inconsistent initial data in {path}: {e}"
        logger.error(msg)
        raise InputFileError(msg) from e
    logger.info(f"Loaded {data.label!r} with coordinates {chart.names}")
    return data
