"""First-order expansion of the metric off the horizon, from (σ, V) alone.

In the frame (V, e_2, ..., e_n) with e_a σ-orthonormal and σ-orthogonal to V:

    q1(V, V)     = −2κ
    q1(V, e_a)   = 0
    q1(e_a, e_b) = (1/κ) (Ric(e_a, e_b) + κ⁻² σ(∇_{e_a} V, ∇_{e_b} V))

and the transversal gradient A(e_a, e_b) = g(∇_{e_a} ∂_t, e_b) adds dω/(2κ)
to half of that block. Coordinate components extend the frame values
tensorially.
"""

import logging
import typing as T

import numpy as np
from pydantic import BaseModel, ConfigDict

from library.catalog import SpacetimeSolution
from library.errors import FrameMismatchError, InsufficientSamplesError
from library.foliation import ExpansionRecord
from library.geometry import (
    Chart,
    Point,
    complement_vectors,
    coordinate_change,
    coordinate_components,
    cov_deriv_vector,
    exterior_derivative_oneform,
    ricci,
)
from library.initial_data import (
    InitialDataSet,
    connection_one_form,
    connection_one_form_field,
    degenerate_metric,
    pullback,
    surface_gravity,
)
from library.settings import DEFAULTS

logger = logging.getLogger(__name__)

_EXACT_REMAINDER = 1e-12


class Q1Result(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    base_point: np.ndarray
    frame: np.ndarray
    q1_components: np.ndarray
    kappa: float
    a_components: np.ndarray

    @property
    def coordinate_components(self) -> np.ndarray:
        return coordinate_components(self.frame, self.q1_components)


def _resolve_kappa(data: InitialDataSet, kappa: float | None) -> float:
    return surface_gravity(data) if kappa is None else kappa


def _ingredients(data: InitialDataSet, point: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Frame with columns (V, e_2, ...), the rows e_a and σ at a point."""
    sigma = data.sigma.value(point)
    v = data.V.values(point)
    e = complement_vectors(sigma, v, point)
    frame = np.column_stack([v, e.T])
    return frame, e, sigma


def _curvature_block(data: InitialDataSet, point: np.ndarray, e: np.ndarray, sigma: np.ndarray, kappa: float) -> np.ndarray:
    ric = ricci(data.sigma, point)
    nabla_v = e @ cov_deriv_vector(data.sigma, data.V, point)
    return e @ ric @ e.T + (nabla_v @ sigma @ nabla_v.T) / kappa**2


def transversal_gradient(data: InitialDataSet, p: Point, kappa: float | None = None) -> np.ndarray:
    """A(e_a, e_b) on V⊥ in the frame of `q1`."""
    kappa = _resolve_kappa(data, kappa)
    point = data.chart.check_point(p)
    _, e, sigma = _ingredients(data, point)
    d_omega = exterior_derivative_oneform(connection_one_form_field(data), point)
    return (_curvature_block(data, point, e, sigma, kappa) + e @ d_omega @ e.T) / (2.0 * kappa)


def q1(data: InitialDataSet, p: Point, kappa: float | None = None) -> Q1Result:
    kappa = _resolve_kappa(data, kappa)
    point = data.chart.check_point(p)
    frame, e, sigma = _ingredients(data, point)
    n = data.chart.dim

    components = np.zeros((n, n))
    components[0, 0] = -2.0 * kappa
    components[1:, 1:] = _curvature_block(data, point, e, sigma, kappa) / kappa
    logger.debug(f"q1 of {data.label!r} at {point.tolist()}: {components.tolist()}")
    return Q1Result(
        base_point=point,
        frame=frame,
        q1_components=components,
        kappa=kappa,
        a_components=transversal_gradient(data, point, kappa),
    )


def q1_coordinate_components(data: InitialDataSet, p: Point, kappa: float | None = None) -> np.ndarray:
    return q1(data, p, kappa).coordinate_components


# ============== first-order metric in adapted coordinates ==============


class FirstOrderMetric(BaseModel):
    """ĝ(t, y) = ĝ(0, y) + t ∂_t ĝ(0, y) in adapted coordinates (t, y)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: InitialDataSet
    kappa: float
    chart: Chart

    def order_zero(self, y: Point) -> np.ndarray:
        point = self.data.chart.check_point(y)
        n = self.data.chart.dim
        out = np.zeros((n + 1, n + 1))
        omega = connection_one_form(self.data, point)
        out[0, 1:] = out[1:, 0] = omega / self.kappa
        out[1:, 1:] = degenerate_metric(self.data, point)
        return out

    def order_one(self, y: Point) -> np.ndarray:
        point = self.data.chart.check_point(y)
        n = self.data.chart.dim
        out = np.zeros((n + 1, n + 1))
        out[1:, 1:] = q1_coordinate_components(self.data, point, self.kappa)
        return out

    def value(self, t: float, y: Point) -> np.ndarray:
        return self.order_zero(y) + t * self.order_one(y)


def first_order_metric(data: InitialDataSet, kappa: float | None = None) -> FirstOrderMetric:
    """The metric to first order in t on the chart (t, y), as pointwise values.

    This is not a MetricField: q1 is evaluated numerically at each y, so the
    result has no jets and cannot feed `christoffel` or `riemann`. Use
    `order_zero`, `order_one` or `value` at chosen points.
    """
    kappa = _resolve_kappa(data, kappa)
    name = "t" if "t" not in data.chart.names else "t_null"
    chart = Chart(
        coordinates=(Chart.from_names([name]).coordinates[0], *data.chart.coordinates),
        params=data.chart.params,
    )
    return FirstOrderMetric(data=data, kappa=kappa, chart=chart)


# ============== comparison against the foliation ==============


class DeviationReport(BaseModel):
    entry: str
    base_point: list[float]
    kappa: float
    max_deviation: float
    deviations: list[list[float]]
    remainder_times: list[float]
    remainder_norms: list[float]
    slope: float | None
    exact: bool


def remainder_slope(times: T.Sequence[float], norms: T.Sequence[float]) -> float | None:
    """Log-log slope of the remainder norms, None when they are all at round-off."""
    norms = np.asarray(norms, dtype=float)
    if np.all(norms < _EXACT_REMAINDER):
        return None
    if np.any(norms <= 0.0):
        raise ValueError("Remainder norms must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(np.asarray(times, dtype=float)), np.log(norms), 1)
    return float(slope)


def _as_data(source: InitialDataSet | SpacetimeSolution) -> tuple[str, InitialDataSet, float | None]:
    if isinstance(source, SpacetimeSolution):
        source.require_horizon()
        assert source.closed_form_data is not None
        return source.label, source.closed_form_data, source.kappa_closed_form
    return source.label, source, None


def compare(
    source: InitialDataSet | SpacetimeSolution,
    record: ExpansionRecord,
    kappa: float | None = None,
    expected: Q1Result | None = None,
    remainder_times: T.Sequence[float] | None = None,
) -> DeviationReport:
    """q1 against the extracted ∂_t ĝ|_H, plus the O(t²) remainder fit."""
    label, data, closed_kappa = _as_data(source)
    kappa = kappa if kappa is not None else (closed_kappa if closed_kappa is not None else surface_gravity(data))
    if record.frame.shape[0] != data.chart.dim + 1:
        msg = f"Record of dimension {record.frame.shape[0]} does not fit data on {data.chart.names}"
        logger.error(msg)
        raise FrameMismatchError(msg)
    if expected is None:
        expected = q1(data, record.base_point, kappa)
    elif not np.allclose(expected.base_point, record.base_point, rtol=0.0, atol=1e-12):
        msg = f"q1 at {expected.base_point.tolist()} compared with a record at {record.base_point.tolist()}"
        logger.error(msg)
        raise FrameMismatchError(msg)

    horizon_frame = record.frame[1:, 1:]
    predicted = np.zeros_like(record.components[1])
    predicted[1:, 1:] = horizon_frame.T @ expected.coordinate_components @ horizon_frame
    deviations = np.abs(predicted - record.components[1])

    model = first_order_metric(data, kappa)
    times = list(remainder_times or DEFAULTS.foliation.remainder_times)
    norms = []
    for t in times:
        hits = np.flatnonzero(np.isclose(record.t_samples, t, rtol=0.0, atol=1e-14))
        if len(hits) == 0:
            msg = f"Record of {label} has no sample at t = {t} for the remainder fit"
            logger.error(msg)
            raise InsufficientSamplesError(msg)
        exact = record.adapted_metric[hits[0]]
        norms.append(float(np.linalg.norm(exact - model.value(t, record.base_point))))
    slope = remainder_slope(times, norms)
    if slope is None:
        logger.warning(f"Remainder of {label} is at round-off level; first-order metric is exact")

    return DeviationReport(
        entry=label,
        base_point=record.base_point.tolist(),
        kappa=kappa,
        max_deviation=float(np.max(deviations)),
        deviations=deviations.tolist(),
        remainder_times=times,
        remainder_norms=norms,
        slope=slope,
        exact=slope is None,
    )


def equivariance_residual(
    data: InitialDataSet,
    new_chart: Chart,
    phi: T.Sequence[str],
    points: T.Sequence[Point] | np.ndarray,
    kappa: float | None = None,
) -> float:
    """max |q1(φ*σ, φ*V) − φ*q1(σ, V)| over new-chart points, relative to |q1|."""
    kappa = _resolve_kappa(data, kappa)
    moved = pullback(data, new_chart, phi)
    worst = 0.0
    for p in points:
        image, J = coordinate_change(new_chart, data.chart, phi, p)
        direct = q1_coordinate_components(moved, p, kappa)
        transported = J.T @ q1_coordinate_components(data, image, kappa) @ J
        scale = max(1.0, float(np.max(np.abs(transported))))
        worst = max(worst, float(np.max(np.abs(direct - transported))) / scale)
    logger.debug(f"Equivariance residual of {data.label!r} under {list(phi)}: {worst:.3e}")
    return worst


def symmetrization_residual(result: Q1Result) -> float:
    """|q1 on V⊥ − (A + Aᵀ)|."""
    a = result.a_components
    return float(np.max(np.abs(result.q1_components[1:, 1:] - (a + a.T))))


def antisymmetric_part(result: Q1Result) -> np.ndarray:
    a = result.a_components
    return 0.5 * (a - a.T)


def structural_residual(result: Q1Result) -> float:
    """Deviation of q1(V,V) from −2κ and of q1(V, e_a) from zero."""
    q = result.q1_components
    return float(max(abs(q[0, 0] + 2.0 * result.kappa), np.max(np.abs(q[0, 1:])) if q.shape[0] > 1 else 0.0))

