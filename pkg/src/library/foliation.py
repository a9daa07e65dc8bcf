"""Null-time gauge on exact solutions.

At a horizon point the canonical transversal L is the lightlike vector with
g(L,V) = 1 and g(L,e_a) = 0 for e_a spanning V⊥. Geodesics with initial
velocity L define the null time t; together with the horizon coordinates y
they give adapted coordinates (t, y) ↦ Ψ(t, y). The derivatives of
Ψ with respect to y are propagated with the variational equations, so the
pulled-back metric ĝ(t) = dΨᵀ g dΨ is available at every sampled t and its
t-derivatives at t = 0 are extracted by Richardson-extrapolated central
differences.
"""

import dataclasses
import logging
import math
import typing as T

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from library.catalog import SpacetimeSolution
from library.errors import (
    ChartDomainError,
    ChartExitError,
    DomainError,
    ExtrapolationError,
    HorizonError,
    InsufficientSamplesError,
    NonFiniteStateError,
    StepSizeError,
    TransversalError,
)
from library.geometry import (
    AnalyticField,
    MetricField,
    Point,
    Signature,
    VectorField,
    complement_vectors,
    connection,
    cov_deriv_vector,
    riemann_from_connection,
)
from library.initial_data import InitialDataSet
from library.jets import Jet
from library.settings import DEFAULTS, Tolerances

logger = logging.getLogger(__name__)

_MIN_STEP = 1e-13
_SAMPLE_ATOL = 1e-14
_JET_CACHE_LIMIT = 256


# ============== ω on the horizon ==============


class HorizonOneForm(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    point: np.ndarray
    omega: np.ndarray
    parallel_residual: float


def _sum(terms: T.Iterable[Jet]) -> Jet:
    it = iter(terms)
    total = next(it)
    for term in it:
        total = total + term
    return total


@dataclasses.dataclass(frozen=True)
class _HorizonJets:
    lightlike: list[list[Jet]]
    omega: list[Jet]
    V: list[Jet]


def _horizon_jets(sol: SpacetimeSolution, x: np.ndarray, order: int) -> _HorizonJets:
    """Jets in the horizon variables of g|_H, ω and V at x.

    ω_a = g(∇_a W, ∂_τ) / g(W, ∂_τ) with τ the transverse coordinate, which
    needs no inverse metric.
    """
    P = sol.embed(x)
    tau, slots = sol.transverse_index, sol.horizon_slots
    G = sol.metric.jets(P, order + 1)
    W = sol.W.jets(P, order + 1)
    n = sol.chart.dim

    G_k = [[G[i][j].truncate(order) for j in range(n)] for i in range(n)]
    W_k = [w.truncate(order) for w in W]
    den = _sum(G_k[mu][tau] * W_k[mu] for mu in range(n))
    omega = []
    for s in slots:
        num = _sum(G_k[mu][tau] * W[mu].partial(s) for mu in range(n))
        num = num + 0.5 * _sum(
            W_k[lam] * (G[tau][lam].partial(s) + G[tau][s].partial(lam) - G[s][lam].partial(tau))
            for lam in range(n)
        )
        omega.append((num / den).restrict(slots))
    lightlike = [[G_k[a][b].restrict(slots) for b in slots] for a in slots]
    V = [W_k[s].restrict(slots) for s in slots]
    return _HorizonJets(lightlike=lightlike, omega=omega, V=V)


def horizon_one_form(sol: SpacetimeSolution, x: Point) -> HorizonOneForm:
    """ω at a horizon point and the residual of ∇_a W ∥ W."""
    _, horizon_chart = sol.require_horizon()
    x = horizon_chart.check_point(x)
    P = sol.embed(x)
    omega = np.array([j.value for j in _horizon_jets(sol, x, 0).omega])
    nabla = cov_deriv_vector(sol.metric, sol.W, P)
    w = sol.W.values(P)
    deviation = nabla[sol.horizon_slots] - np.outer(omega, w)
    residual = float(np.max(np.linalg.norm(deviation, axis=1)) / np.linalg.norm(w))
    return HorizonOneForm(point=x, omega=omega, parallel_residual=residual)


def _checked_one_form(sol: SpacetimeSolution, x: Point, tolerance: float) -> HorizonOneForm:
    result = horizon_one_form(sol, x)
    if result.parallel_residual > tolerance:
        msg = (
            f"∇W is not parallel to W at horizon point {result.point.tolist()} of {sol.label}: "
            f"residual {result.parallel_residual:.3e} > {tolerance:.1e}"
        )
        logger.error(msg)
        raise HorizonError(msg)
    return result


class _InducedJets:
    """Per-point cache of the induced horizon jets, shared by all components."""

    def __init__(self, sol: SpacetimeSolution):
        self.sol = sol
        self._cache: dict[tuple, _HorizonJets] = {}

    def at(self, point: np.ndarray, order: int) -> _HorizonJets:
        key = (tuple(point.tolist()), order)
        hit = self._cache.get(key)
        if hit is None:
            if len(self._cache) > _JET_CACHE_LIMIT:
                self._cache.clear()
            hit = self._cache[key] = _horizon_jets(self.sol, point, order)
        return hit


def induce_numeric(
    sol: SpacetimeSolution,
    points: T.Sequence[Point] | np.ndarray | None = None,
    tolerance: float | None = None,
) -> InitialDataSet:
    """σ = g|_H + ω⊗ω and V = W|_H, evaluated from the spacetime metric.

    ∇W ∥ W is checked at `points` (default: the horizon grid) before the
    fields are returned.
    """
    _, horizon_chart = sol.require_horizon()
    tolerance = DEFAULTS.tolerances.parallel if tolerance is None else tolerance
    if points is None:
        points = sol.horizon_grid()
    for x in points:
        _checked_one_form(sol, x, tolerance)

    jets = _InducedJets(sol)
    n = horizon_chart.dim

    def sigma_component(a: int, b: int) -> AnalyticField:
        def jet_fn(point: np.ndarray, order: int) -> Jet:
            h = jets.at(point, order)
            return h.lightlike[a][b] + h.omega[a] * h.omega[b]

        return AnalyticField(n, jet_fn, f"induced sigma[{a},{b}]")

    def v_component(a: int) -> AnalyticField:
        def jet_fn(point: np.ndarray, order: int) -> Jet:
            return jets.at(point, order).V[a]

        return AnalyticField(n, jet_fn, f"induced V[{a}]")

    fields: list[list[AnalyticField]] = [[None] * n for _ in range(n)]  # type: ignore[list-item]
    for a in range(n):
        for b in range(a, n):
            fields[a][b] = fields[b][a] = sigma_component(a, b)
    logger.info(f"Induced data of {sol.label} checked on {len(points)} horizon points")
    return InitialDataSet(
        label=f"{sol.label} induced",
        chart=horizon_chart,
        sigma=MetricField.from_fields(horizon_chart, fields, Signature.riemannian),
        V=VectorField(chart=horizon_chart, components=tuple(v_component(a) for a in range(n))),
    )


# ============== canonical transversal ==============


class TransversalSolve(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    point: np.ndarray
    L: np.ndarray
    residuals: dict[str, float]

    @property
    def max_residual(self) -> float:
        return max(abs(r) for r in self.residuals.values())


def _embed_vectors(sol: SpacetimeSolution, vectors: np.ndarray) -> np.ndarray:
    out = np.zeros((len(vectors), sol.chart.dim))
    out[:, sol.horizon_slots] = vectors
    return out


def canonical_transversal(
    sol: SpacetimeSolution, x: Point, tolerances: Tolerances | None = None
) -> TransversalSolve:
    """Solve g(L,V) = 1, g(L,e_a) = 0, g(L,L) = 0.

    The affine conditions leave a one-parameter family L_p + s n; the null
    condition fixes s by the root continuous in g(n,n) → 0, which is the
    case on a genuine horizon where n ∥ V.
    """
    tolerances = tolerances or DEFAULTS.tolerances
    _, horizon_chart = sol.require_horizon()
    x = horizon_chart.check_point(x)
    P = sol.embed(x)
    g = sol.metric.value(P)
    slots = sol.horizon_slots

    omega = _checked_one_form(sol, x, tolerances.parallel).omega
    sigma_h = g[np.ix_(slots, slots)] + np.outer(omega, omega)
    w = sol.W.values(P)
    e = _embed_vectors(sol, complement_vectors(sigma_h, w[slots], x))

    rows = np.vstack([g @ w, e @ g])
    rhs = np.zeros(len(rows))
    rhs[0] = 1.0
    _, singular, vt = np.linalg.svd(rows)
    if singular[-1] <= 1e-12 * singular[0]:
        msg = f"Degenerate transversal system at {x.tolist()} of {sol.label}"
        logger.error(msg)
        raise TransversalError(msg)
    L_p = np.linalg.lstsq(rows, rhs, rcond=None)[0]
    kernel = vt[-1]

    a = float(kernel @ g @ kernel)
    b = 2.0 * float(L_p @ g @ kernel)
    c = float(L_p @ g @ L_p)
    if b == 0.0:
        msg = f"Null condition has no transversal root at {x.tolist()} of {sol.label}"
        logger.error(msg)
        raise TransversalError(msg)
    if abs(a) <= 1e-14 * max(abs(b), abs(c), 1.0):
        s = -c / b
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            msg = f"No lightlike solution at {x.tolist()} of {sol.label} (discriminant {disc:.3e})"
            logger.error(msg)
            raise TransversalError(msg)
        s = -2.0 * c / (b + math.copysign(math.sqrt(disc), b))
    L = L_p + s * kernel

    residuals = {"g(L,V)-1": float(L @ g @ w) - 1.0, "g(L,L)": float(L @ g @ L)}
    for i, vec in enumerate(e):
        residuals[f"g(L,e{i + 2})"] = float(L @ g @ vec)
    logger.debug(f"L at {x.tolist()} = {L.tolist()}")
    return TransversalSolve(point=x, L=L, residuals=residuals)


def transversal_derivatives(
    sol: SpacetimeSolution, x: Point, step: float | None = None, tolerances: Tolerances | None = None
) -> np.ndarray:
    """∂L/∂y_b along the horizon coordinates as columns of a (4, 3) array."""
    step = step or DEFAULTS.foliation.initial_step
    _, horizon_chart = sol.require_horizon()
    x = horizon_chart.check_point(x)
    out = np.empty((sol.chart.dim, horizon_chart.dim))
    for b in range(horizon_chart.dim):
        shift = np.zeros(horizon_chart.dim)
        shift[b] = step

        def L(k: int) -> np.ndarray:
            return canonical_transversal(sol, x + k * shift, tolerances).L

        d_h = (L(1) - L(-1)) / (2.0 * step)
        d_2h = (L(2) - L(-2)) / (4.0 * step)
        out[:, b] = (4.0 * d_h - d_2h) / 3.0
    return out


# ============== geodesic flow with variational equations ==============


class IntegratorMeta(BaseModel):
    step: float
    steps_forward: int
    steps_backward: int
    method: str = "rk4"


class FoliationMap(BaseModel):
    """Positions, velocities and their horizon-coordinate sensitivities.

    Arrays are indexed [base, sample, ...]: positions (N, T, 4), sensitivities
    (N, T, 4, 3) with columns ∂Ψ/∂y_b.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    entry: str
    horizon_base: np.ndarray
    t_samples: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    sensitivities: np.ndarray
    velocity_sensitivities: np.ndarray
    null_drift: np.ndarray
    integrator_meta: IntegratorMeta

    @model_validator(mode="after")
    def shapes(self) -> T.Self:
        n, t = len(self.horizon_base), len(self.t_samples)
        if self.positions.shape[:2] != (n, t) or self.sensitivities.shape[:2] != (n, t):
            raise ValueError("Foliation arrays do not match bases and samples")
        return self

    def base_index(self, base: Point) -> int:
        x = np.asarray(base, dtype=float)
        for i, b in enumerate(self.horizon_base):
            if np.allclose(b, x, rtol=0.0, atol=1e-12):
                return i
        raise KeyError(f"Base point {x.tolist()} not covered by the foliation")

    def sample_index(self, t: float) -> int:
        hits = np.flatnonzero(np.isclose(self.t_samples, t, rtol=0.0, atol=_SAMPLE_ATOL))
        if len(hits) == 0:
            raise InsufficientSamplesError(f"No sample at t = {t}")
        return int(hits[0])

    def jacobian(self, base: int, sample: int) -> np.ndarray:
        """∂Ψ/∂(t, y) with columns (∂_t, ∂_y1, ...)."""
        return np.column_stack([self.velocities[base, sample], self.sensitivities[base, sample]])


def stencil_times(h: float | None = None) -> list[float]:
    h = h or DEFAULTS.foliation.h
    return [k * h for k in (-3, -2, -1, 0, 1, 2, 3)]


def default_t_samples(h: float | None = None) -> list[float]:
    return merge_times(stencil_times(h) + list(DEFAULTS.foliation.remainder_times))


def merge_times(times: T.Iterable[float]) -> list[float]:
    """Sorted times with near-duplicates (within the sample tolerance) merged."""
    merged: list[float] = []
    for t in sorted(float(t) for t in times):
        if merged and t - merged[-1] <= _SAMPLE_ATOL:
            continue
        merged.append(t)
    return merged


class _Flow:
    def __init__(self, sol: SpacetimeSolution, n_horizon: int):
        self.sol = sol
        self.n = sol.chart.dim
        self.m = n_horizon

    def split(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n, m = self.n, self.m
        return (
            y[:n],
            y[n : 2 * n],
            y[2 * n : 2 * n + n * m].reshape(n, m),
            y[2 * n + n * m :].reshape(n, m),
        )

    def rhs(self, y: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(y)):
            raise NonFiniteStateError(f"Non-finite state {y[: self.n].tolist()} in {self.sol.label}")
        x, u, dx, du = self.split(y)
        if not self.sol.chart.contains(x):
            msg = f"Geodesic left the chart of {self.sol.label} at {x.tolist()}"
            logger.error(msg)
            raise ChartExitError(msg)
        try:
            conn = connection(self.sol.metric, x, with_derivative=True)
        except ChartDomainError as e:
            raise ChartExitError(str(e)) from e
        except DomainError as e:
            raise NonFiniteStateError(str(e)) from e
        accel = -np.einsum("kij,i,j->k", conn.gamma, u, u)
        d_accel = -np.einsum("kijl,lb,i,j->kb", conn.dgamma, dx, u, u) - 2.0 * np.einsum(
            "kij,i,jb->kb", conn.gamma, u, du
        )
        return np.concatenate([u, accel, du.ravel(), d_accel.ravel()])

    def step(self, y: np.ndarray, dt: float) -> np.ndarray:
        k1 = self.rhs(y)
        k2 = self.rhs(y + 0.5 * dt * k1)
        k3 = self.rhs(y + 0.5 * dt * k2)
        k4 = self.rhs(y + dt * k3)
        return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def null_norm(self, y: np.ndarray) -> float:
        x, u, _, _ = self.split(y)
        return abs(float(u @ self.sol.metric.value(x) @ u))

    def integrate(
        self, y0: np.ndarray, targets: T.Sequence[float], dt: float, direction: float
    ) -> tuple[dict[float, np.ndarray], int, float]:
        """States at |t| = targets (ascending) along one direction."""
        out: dict[float, np.ndarray] = {}
        y, t, steps, drift = y0.copy(), 0.0, 0, 0.0
        for target in targets:
            span = target - t
            if span > 0.0:
                count = max(1, math.ceil(span / dt - 1e-9))
                h = span / count
                if h < _MIN_STEP:
                    msg = f"Step size {h:.3e} underflows between samples {t} and {target}"
                    logger.error(msg)
                    raise StepSizeError(msg)
                for _ in range(count):
                    y = self.step(y, direction * h)
                    steps += 1
                    if not np.all(np.isfinite(y)):
                        raise NonFiniteStateError(f"Non-finite state after {steps} steps in {self.sol.label}")
                    drift = max(drift, self.null_norm(y))
                t = target
            out[direction * target] = y.copy()
        return out, steps, drift


def evolve_foliation(
    sol: SpacetimeSolution,
    base_grid: T.Sequence[Point] | np.ndarray,
    t_max: float | None = None,
    steps: int | None = None,
    t_samples: T.Sequence[float] | None = None,
    tolerances: Tolerances | None = None,
    initial_step: float | None = None,
) -> FoliationMap:
    """Integrate the geodesics with initial velocity L from each base point.

    The fixed step is t_max / steps; sample times are landed on exactly by
    splitting each interval between consecutive samples into equal steps no
    longer than that. Negative sample times are integrated backwards.
    `tolerances` and `initial_step` go to the transversal solve and its
    horizon derivatives. Step counts in the metadata are totals over all
    base points.
    """
    t_max = DEFAULTS.foliation.t_max if t_max is None else t_max
    steps = DEFAULTS.foliation.steps if steps is None else steps
    if t_max <= 0 or steps < 1:
        raise ValueError(f"Need t_max > 0 and steps >= 1, got {t_max}, {steps}")
    _, horizon_chart = sol.require_horizon()
    dt = t_max / steps

    requested = list(t_samples) if t_samples is not None else default_t_samples()
    samples = merge_times([t for t in requested if abs(t) > _SAMPLE_ATOL] + [0.0])
    forward = [t for t in samples if t > 0.0]
    if not forward or t_max > forward[-1] + _SAMPLE_ATOL:
        forward.append(t_max)
    backward = sorted(-t for t in samples if t < 0.0)
    n, m = sol.chart.dim, horizon_chart.dim
    flow = _Flow(sol, m)

    bases = np.array([horizon_chart.check_point(x) for x in base_grid])
    shape = (len(bases), len(samples))
    positions = np.empty(shape + (n,))
    velocities = np.empty(shape + (n,))
    sensitivities = np.empty(shape + (n, m))
    velocity_sensitivities = np.empty(shape + (n, m))
    drifts = np.empty(len(bases))
    n_forward = n_backward = 0

    logger.info(f"Evolving {len(bases)} geodesics of {sol.label} with step {dt:.2e}")
    for i, x in enumerate(bases):
        L = canonical_transversal(sol, x, tolerances).L
        dx0 = np.zeros((n, m))
        dx0[sol.horizon_slots, np.arange(m)] = 1.0
        du0 = transversal_derivatives(sol, x, initial_step, tolerances)
        y0 = np.concatenate([sol.embed(x), L, dx0.ravel(), du0.ravel()])

        states = {0.0: y0}
        fwd, count, drift_f = flow.integrate(y0, forward, dt, 1.0)
        n_forward += count
        states.update(fwd)
        drift_b = 0.0
        if backward:
            bwd, count, drift_b = flow.integrate(y0, backward, dt, -1.0)
            n_backward += count
            states.update(bwd)
        drifts[i] = max(drift_f, drift_b, flow.null_norm(y0))

        for j, t in enumerate(samples):
            xs, us, dxs, dus = flow.split(states[t])
            positions[i, j], velocities[i, j] = xs, us
            sensitivities[i, j], velocity_sensitivities[i, j] = dxs, dus
        logger.debug(f"Base {x.tolist()}: null drift {drifts[i]:.2e}")

    return FoliationMap(
        entry=sol.label,
        horizon_base=bases,
        t_samples=np.array(samples),
        positions=positions,
        velocities=velocities,
        sensitivities=sensitivities,
        velocity_sensitivities=velocity_sensitivities,
        null_drift=drifts,
        integrator_meta=IntegratorMeta(step=dt, steps_forward=n_forward, steps_backward=n_backward),
    )


# ============== metric jets in adapted coordinates ==============


class ExpansionRecord(BaseModel):
    """Frame components of ∂_t^m ĝ at t = 0 for m = 0..m_max.

    The frame columns are (∂_t, V, e_2, ...) in adapted coordinates (t, y).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    entry: str
    base_point: np.ndarray
    frame: np.ndarray
    components: list[np.ndarray]
    error_estimates: list[np.ndarray]
    provenance: str = "numeric"
    t_samples: np.ndarray
    adapted_metric: np.ndarray

    @property
    def m_max(self) -> int:
        return len(self.components) - 1


def adapted_metric(sol: SpacetimeSolution, fmap: FoliationMap, base: int) -> np.ndarray:
    """ĝ(t) = dΨᵀ g(Ψ) dΨ at every sample, shape (T, 4, 4)."""
    out = np.empty((len(fmap.t_samples), sol.chart.dim, sol.chart.dim))
    for j in range(len(fmap.t_samples)):
        J = fmap.jacobian(base, j)
        out[j] = J.T @ sol.metric.value(fmap.positions[base, j]) @ J
    return out


def _check_extrapolation(estimate: np.ndarray, error: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(estimate)) or np.any(error > 1e-2 * (1.0 + np.abs(estimate))):
        msg = f"Richardson extrapolation of {what} diverges (max error {np.max(error):.3e})"
        logger.error(msg)
        raise ExtrapolationError(msg)


def t_derivatives(
    values: T.Callable[[int], np.ndarray], h: float, m_max: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Richardson-extrapolated ∂_t^m at t = 0 from samples f(k h), |k| <= 3."""
    f = {k: values(k) for k in range(-3, 4)}
    estimates, errors = [f[0]], [np.zeros_like(f[0])]
    if m_max >= 1:
        d_h = (f[1] - f[-1]) / (2.0 * h)
        d_2h = (f[2] - f[-2]) / (4.0 * h)
        estimate = (4.0 * d_h - d_2h) / 3.0
        estimates.append(estimate)
        errors.append(np.abs(estimate - d_h))
    if m_max >= 2:
        d_h = (f[1] - 2.0 * f[0] + f[-1]) / h**2
        d_2h = (f[2] - 2.0 * f[0] + f[-2]) / (4.0 * h**2)
        estimate = (4.0 * d_h - d_2h) / 3.0
        estimates.append(estimate)
        errors.append(np.abs(estimate - d_h))
    if m_max >= 3:
        d_h = (f[2] - 2.0 * f[1] + 2.0 * f[-1] - f[-2]) / (2.0 * h**3)
        wide = ((f[3] - f[-3]) - 3.0 * (f[1] - f[-1])) / (8.0 * h**3)
        estimate = 2.0 * d_h - wide
        estimates.append(estimate)
        errors.append(np.abs(estimate - d_h))
    for m, (estimate, error) in enumerate(zip(estimates, errors)):
        _check_extrapolation(estimate, error, f"order {m}")
    return estimates, errors


def record_frame(sol: SpacetimeSolution, x: np.ndarray, data: InitialDataSet | None = None) -> np.ndarray:
    """Columns (∂_t, V, e_2, ...) in adapted coordinates at horizon point x."""
    data = data or sol.closed_form_data
    if data is None:
        data = induce_numeric(sol, points=[x])
    v = data.V.values(x)
    e = complement_vectors(data.sigma.value(x), v, x)
    m = len(v)
    frame = np.zeros((m + 1, m + 1))
    frame[0, 0] = 1.0
    frame[1:, 1] = v
    frame[1:, 2:] = e.T
    return frame


def pullback_metric_jet(
    sol: SpacetimeSolution,
    fmap: FoliationMap,
    base: Point,
    m_max: int | None = None,
    h: float | None = None,
) -> ExpansionRecord:
    m_max = DEFAULTS.foliation.m_max if m_max is None else m_max
    h = h or DEFAULTS.foliation.h
    if not 0 <= m_max <= 3:
        raise ValueError(f"m_max must be in 0..3, got {m_max}")
    i = fmap.base_index(base)
    x = fmap.horizon_base[i]
    ghat = adapted_metric(sol, fmap, i)
    try:
        index = {k: fmap.sample_index(k * h) for k in range(-3, 4)}
    except InsufficientSamplesError as e:
        msg = f"Foliation of {sol.label} lacks the ±3h stencil for h = {h}: {e}"
        logger.error(msg)
        raise InsufficientSamplesError(msg) from e

    estimates, errors = t_derivatives(lambda k: ghat[index[k]], h, m_max)
    frame = record_frame(sol, x)
    return ExpansionRecord(
        entry=sol.label,
        base_point=x,
        frame=frame,
        components=[frame.T @ d @ frame for d in estimates],
        error_estimates=[np.abs(frame.T) @ e @ np.abs(frame) for e in errors],
        t_samples=fmap.t_samples,
        adapted_metric=ghat,
    )


# ============== structural identities ==============


class IdentityReport(BaseModel):
    entry: str
    base_point: list[float]
    kappa: float
    transversal_residual: float
    null_drift: float
    lie_row_residual: float
    commutator_residual: float
    killing_transport_residual: float
    jacobi_residual: float


def _theta(conn_gamma: np.ndarray, dx: np.ndarray, du: np.ndarray, u: np.ndarray) -> np.ndarray:
    """∇_{X_b} ∂_t = ∇_t X_b as columns."""
    return du + np.einsum("kij,ib,j->kb", conn_gamma, dx, u)


def check_identities(
    sol: SpacetimeSolution,
    base: Point,
    fmap: FoliationMap | None = None,
    record: ExpansionRecord | None = None,
    tolerances: Tolerances | None = None,
    h: float | None = None,
    m_max: int | None = None,
) -> IdentityReport:
    tolerances = tolerances or DEFAULTS.tolerances
    h = h or DEFAULTS.foliation.h
    _, horizon_chart = sol.require_horizon()
    x = horizon_chart.check_point(base)
    one_form = _checked_one_form(sol, x, tolerances.parallel)
    if fmap is None:
        fmap = evolve_foliation(sol, [x], t_samples=default_t_samples(h), tolerances=tolerances)
    if record is None:
        record = pullback_metric_jet(sol, fmap, x, m_max=m_max, h=h)
    i = fmap.base_index(x)
    P = sol.embed(x)

    transversal = canonical_transversal(sol, x, tolerances)
    L = transversal.L
    v = sol.W.values(P)[sol.horizon_slots]
    kappa = float(one_form.omega @ v)

    rows = [np.abs(record.components[m][0]) for m in range(1, min(2, record.m_max) + 1)]
    lie_row = float(max(np.max(r) for r in rows)) if rows else 0.0

    commutator = 0.0
    for j in range(len(fmap.t_samples)):
        w = sol.W.values(fmap.positions[i, j])
        pushed = fmap.sensitivities[i, j] @ v
        commutator = max(commutator, float(np.linalg.norm(w - pushed) / np.linalg.norm(w)))

    nabla = cov_deriv_vector(sol.metric, sol.W, P)
    transport = float(np.linalg.norm(L @ nabla + kappa * L) / np.linalg.norm(L))

    def transversal_gradient_at(k: int) -> np.ndarray:
        j = fmap.sample_index(k * h)
        pos, u = fmap.positions[i, j], fmap.velocities[i, j]
        gamma = connection(sol.metric, pos).gamma
        theta = _theta(gamma, fmap.sensitivities[i, j], fmap.velocity_sensitivities[i, j], u)
        return theta.T @ sol.metric.value(pos) @ fmap.sensitivities[i, j]

    dA = t_derivatives(transversal_gradient_at, h, 1)[0][1]
    j0 = fmap.sample_index(0.0)
    conn = connection(sol.metric, P, with_derivative=True)
    u0, dx0 = fmap.velocities[i, j0], fmap.sensitivities[i, j0]
    theta0 = _theta(conn.gamma, dx0, fmap.velocity_sensitivities[i, j0], u0)
    curvature = np.einsum("ijkl,i,jb,k,lc->bc", riemann_from_connection(conn), u0, dx0, u0, dx0)
    jacobi = dA - theta0.T @ conn.g @ theta0 - curvature
    jacobi_residual = float(np.max(np.abs(jacobi)) / max(1.0, float(np.max(np.abs(curvature)))))

    report = IdentityReport(
        entry=sol.label,
        base_point=x.tolist(),
        kappa=kappa,
        transversal_residual=transversal.max_residual,
        null_drift=float(fmap.null_drift[i]),
        lie_row_residual=lie_row,
        commutator_residual=commutator,
        killing_transport_residual=transport,
        jacobi_residual=jacobi_residual,
    )
    logger.debug(f"Identities of {sol.label} at {x.tolist()}: {report.model_dump()}")
    return report
