"""Chart-based tensor calculus.

Fields are evaluated pointwise into jets and from there into numpy arrays;
all contractions are einsum expressions. Conventions:

    Γ^k_ij = ½ g^kl (∂_i g_jl + ∂_j g_il − ∂_l g_ij)
    R(X,Y,Z,W) = g(∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z, W)      R[i,j,k,l]
    Ric_jk = g^il R_ijkl

Array layouts: dg[i,j,k] = ∂_k g_ij, ddg[i,j,k,l] = ∂_k∂_l g_ij,
gamma[k,i,j] = Γ^k_ij, dgamma[k,i,j,m] = ∂_m Γ^k_ij, and for vector or
one-form components d[k,i] = ∂_i X^k.
"""

import dataclasses
import itertools
import logging
import math
import typing as T
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, PrivateAttr, field_validator, model_validator

from library.errors import (
    ChartDomainError,
    NotPositiveDefiniteError,
    SignatureError,
    SingularMetricError,
    VanishingVectorError,
)
from library.expr import FUNCTIONS, Expression, eval_jet, parse
from library.jets import Jet, check_order, jet_solve

logger = logging.getLogger(__name__)

DEFAULT_POLE_MARGIN = 0.05
_CACHE_LIMIT = 512
_SINGULAR_CONDITION = 1e13

Point = T.Union[T.Sequence[float], np.ndarray, T.Mapping[str, float]]


# ============== charts ==============


class Coordinate(BaseModel):
    name: str
    lower: float = -math.inf
    upper: float = math.inf
    sample_lower: float | None = None
    sample_upper: float | None = None

    @model_validator(mode="after")
    def check_bounds(self) -> T.Self:
        if not self.lower < self.upper:
            msg = f"Empty domain for coordinate {self.name}: ({self.lower}, {self.upper})"
            raise ValueError(msg)
        for bound in (self.sample_lower, self.sample_upper):
            if bound is not None and not self.lower < bound < self.upper:
                msg = f"Sample bound {bound} of {self.name} outside ({self.lower}, {self.upper})"
                raise ValueError(msg)
        return self

    def sample_window(self, margin: float = DEFAULT_POLE_MARGIN) -> tuple[float, float]:
        lo = self.lower + margin if math.isfinite(self.lower) else None
        hi = self.upper - margin if math.isfinite(self.upper) else None
        if lo is None and hi is None:
            lo, hi = -1.0, 1.0
        elif lo is None:
            lo = hi - 2.0
        elif hi is None:
            hi = lo + 2.0
        if self.sample_lower is not None:
            lo = self.sample_lower
        if self.sample_upper is not None:
            hi = self.sample_upper
        if not lo <= hi:
            msg = f"Empty sample window for {self.name}: [{lo}, {hi}]"
            raise ValueError(msg)
        return lo, hi


class Chart(BaseModel):
    model_config = ConfigDict(frozen=True)

    coordinates: tuple[Coordinate, ...]
    params: dict[str, float] = {}

    @field_validator("coordinates")
    @classmethod
    def unique_names(cls, coordinates: tuple[Coordinate, ...]) -> tuple[Coordinate, ...]:
        names = [c.name for c in coordinates]
        if len(set(names)) != len(names):
            raise ValueError(f"Coordinate names are not unique: {names}")
        reserved = set(names) & set(FUNCTIONS)
        if reserved:
            raise ValueError(f"Coordinate names shadow functions: {sorted(reserved)}")
        return coordinates

    @model_validator(mode="after")
    def params_distinct(self) -> T.Self:
        clash = set(self.names) & set(self.params)
        if clash:
            raise ValueError(f"Names used as both coordinate and parameter: {sorted(clash)}")
        return self

    @classmethod
    def from_names(
        cls,
        names: T.Sequence[str],
        params: T.Mapping[str, float] | None = None,
        bounds: T.Mapping[str, tuple[float, float]] | None = None,
        samples: T.Mapping[str, tuple[float, float]] | None = None,
    ) -> "Chart":
        bounds = bounds or {}
        samples = samples or {}
        coordinates = []
        for name in names:
            lower, upper = bounds.get(name, (-math.inf, math.inf))
            sample_lower, sample_upper = samples.get(name, (None, None))
            coordinates.append(
                Coordinate(
                    name=name,
                    lower=lower,
                    upper=upper,
                    sample_lower=sample_lower,
                    sample_upper=sample_upper,
                )
            )
        return cls(coordinates=tuple(coordinates), params=dict(params or {}))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.coordinates)

    @property
    def dim(self) -> int:
        return len(self.coordinates)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError as e:
            raise KeyError(f"Chart has no coordinate {name!r}, only {self.names}") from e

    def parse(self, source: str) -> Expression:
        return parse(source, self.names, tuple(self.params))

    def as_point(self, p: Point) -> np.ndarray:
        if isinstance(p, T.Mapping):
            return np.array([float(p[name]) for name in self.names])
        point = np.asarray(p, dtype=float).ravel()
        if point.shape != (self.dim,):
            raise ValueError(f"Expected {self.dim} coordinates, got {point.shape}")
        return point

    def contains(self, p: Point) -> bool:
        point = self.as_point(p)
        return all(c.lower < x < c.upper for c, x in zip(self.coordinates, point))

    def check_point(self, p: Point) -> np.ndarray:
        point = self.as_point(p)
        if not np.all(np.isfinite(point)) or not self.contains(point):
            msg = f"Point {dict(zip(self.names, point.tolist()))} outside chart domain"
            raise ChartDomainError(msg)
        return point

    def sample_windows(self, margin: float = DEFAULT_POLE_MARGIN) -> list[tuple[float, float]]:
        return [c.sample_window(margin) for c in self.coordinates]

    def grid(
        self,
        n: int,
        margin: float = DEFAULT_POLE_MARGIN,
        vary: T.Sequence[str] | None = None,
    ) -> np.ndarray:
        """Uniform n-point grid per coordinate over the sample box.

        Coordinates not listed in `vary` are held at the window center.
        """
        if n < 1:
            raise ValueError(f"Grid needs at least one point per axis, got {n}")
        axes = []
        for c, (lo, hi) in zip(self.coordinates, self.sample_windows(margin)):
            if vary is not None and c.name not in vary:
                axes.append([0.5 * (lo + hi)])
            elif n == 1:
                axes.append([0.5 * (lo + hi)])
            else:
                axes.append(np.linspace(lo, hi, n).tolist())
        return np.array(list(itertools.product(*axes)), dtype=float)

    def random_points(
        self, count: int, seed: int, margin: float = DEFAULT_POLE_MARGIN
    ) -> np.ndarray:
        rng = np.random.default_rng(seed)
        windows = self.sample_windows(margin)
        lows = np.array([lo for lo, _ in windows])
        highs = np.array([hi for _, hi in windows])
        return rng.uniform(lows, highs, size=(count, self.dim))


# ============== fields ==============

JetFunction = T.Callable[[np.ndarray, int], Jet]


class AnalyticField:
    """Scalar field on a chart that expands into a Jet at any point."""

    __slots__ = ("dim", "source", "expression", "_jet")

    def __init__(
        self,
        dim: int,
        jet_fn: JetFunction,
        source: str,
        expression: Expression | None = None,
    ):
        self.dim = dim
        self.source = source
        self.expression = expression
        self._jet = jet_fn

    @classmethod
    def from_expression(cls, expr: Expression, params: T.Mapping[str, float]) -> "AnalyticField":
        bound = {name: params[name] for name in expr.free_params}
        dim = len(expr.coords)
        if expr.is_constant:
            value = float(expr.ast.value)  # type: ignore[attr-defined]

            def constant_jet(point: np.ndarray, order: int) -> Jet:
                return Jet.constant(dim, order, value)

            return cls(dim, constant_jet, expr.to_source(), expr)

        def jet_fn(point: np.ndarray, order: int) -> Jet:
            return eval_jet(expr, point, bound, order)

        return cls(dim, jet_fn, expr.to_source(), expr)

    @classmethod
    def constant(cls, dim: int, value: float) -> "AnalyticField":
        def jet_fn(point: np.ndarray, order: int) -> Jet:
            return Jet.constant(dim, order, value)

        return cls(dim, jet_fn, repr(float(value)))

    def jet(self, point: np.ndarray, order: int) -> Jet:
        check_order(order)
        return self._jet(np.asarray(point, dtype=float), order)

    def value(self, point: np.ndarray) -> float:
        return self.jet(point, 0).value

    def __repr__(self) -> str:
        return f"AnalyticField({self.source})"


class Signature(str, Enum):
    riemannian = "riemannian"
    lorentzian = "lorentzian"
    degenerate = "degenerate"


@dataclasses.dataclass(frozen=True)
class MetricDerivatives:
    g: np.ndarray
    dg: np.ndarray | None = None
    ddg: np.ndarray | None = None


@dataclasses.dataclass(frozen=True)
class FieldDerivatives:
    values: np.ndarray
    d: np.ndarray | None = None
    dd: np.ndarray | None = None


def _derivative_arrays(jets: T.Sequence[Jet], order: int) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    values = np.array([j.value for j in jets])
    d = np.array([j.gradient() for j in jets]) if order >= 1 else None
    dd = np.array([j.hessian() for j in jets]) if order >= 2 else None
    return values, d, dd


def _cache_lookup(cache: dict, point: np.ndarray, order: int):
    key = tuple(point.tolist())
    for k in range(order, 3):
        hit = cache.get((key, k))
        if hit is not None:
            return hit
    return None


def _cache_store(cache: dict, point: np.ndarray, order: int, value) -> None:
    if len(cache) > _CACHE_LIMIT:
        cache.clear()
    cache[(tuple(point.tolist()), order)] = value


class MetricField(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    chart: Chart
    signature: Signature
    components: tuple[tuple[AnalyticField, ...], ...]

    _cache: dict = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def check_shape_and_symmetry(self) -> T.Self:
        n = self.chart.dim
        if len(self.components) != n or any(len(row) != n for row in self.components):
            raise ValueError(f"Metric components must form a {n}x{n} matrix")
        for i in range(n):
            for j in range(i + 1, n):
                a, b = self.components[i][j], self.components[j][i]
                if a is not b and a.source != b.source:
                    msg = f"Metric components ({i},{j}) and ({j},{i}) differ: {a.source} vs {b.source}"
                    raise ValueError(msg)
        return self

    @classmethod
    def from_strings(
        cls,
        chart: Chart,
        rows: T.Sequence[T.Sequence[str]],
        signature: Signature | str = Signature.riemannian,
    ) -> "MetricField":
        n = chart.dim
        if len(rows) != n or any(len(row) != n for row in rows):
            raise ValueError(f"Metric needs a {n}x{n} matrix of expressions")
        fields: list[list[AnalyticField | None]] = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                upper = chart.parse(rows[i][j])
                lower = chart.parse(rows[j][i])
                if upper.ast != lower.ast:
                    msg = f"Metric is not symmetric: g[{i}][{j}] = {rows[i][j]!r}, g[{j}][{i}] = {rows[j][i]!r}"
                    raise ValueError(msg)
                field = AnalyticField.from_expression(upper, chart.params)
                fields[i][j] = fields[j][i] = field
        return cls(
            chart=chart,
            signature=Signature(signature),
            components=tuple(tuple(row) for row in fields),  # type: ignore[arg-type]
        )

    @classmethod
    def from_fields(
        cls,
        chart: Chart,
        fields: T.Sequence[T.Sequence[AnalyticField]],
        signature: Signature | str = Signature.riemannian,
    ) -> "MetricField":
        return cls(
            chart=chart,
            signature=Signature(signature),
            components=tuple(tuple(row) for row in fields),
        )

    def jets(self, p: Point, order: int) -> list[list[Jet]]:
        point = self.chart.check_point(p)
        n = self.chart.dim
        out: list[list[Jet]] = [[None] * n for _ in range(n)]  # type: ignore[list-item]
        for i in range(n):
            for j in range(i, n):
                out[i][j] = out[j][i] = self.components[i][j].jet(point, order)
        return out

    def derivatives(self, p: Point, order: int = 0) -> MetricDerivatives:
        if order > 2:
            raise ValueError("Metric derivative arrays are provided up to order 2")
        point = self.chart.check_point(p)
        cached = _cache_lookup(self._cache, point, order)
        if cached is not None:
            return cached
        n = self.chart.dim
        jets = self.jets(point, order)
        flat = [jets[i][j] for i in range(n) for j in range(n)]
        values, d, dd = _derivative_arrays(flat, order)
        result = MetricDerivatives(
            g=values.reshape(n, n),
            dg=None if d is None else d.reshape(n, n, n),
            ddg=None if dd is None else dd.reshape(n, n, n, n),
        )
        _cache_store(self._cache, point, order, result)
        return result

    def value(self, p: Point) -> np.ndarray:
        return self.derivatives(p, 0).g


class _ComponentField(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    chart: Chart
    components: tuple[AnalyticField, ...]

    _cache: dict = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def check_length(self) -> T.Self:
        if len(self.components) != self.chart.dim:
            msg = f"Expected {self.chart.dim} components, got {len(self.components)}"
            raise ValueError(msg)
        return self

    @classmethod
    def from_strings(cls, chart: Chart, sources: T.Sequence[str]) -> T.Self:
        return cls(
            chart=chart,
            components=tuple(
                AnalyticField.from_expression(chart.parse(s), chart.params) for s in sources
            ),
        )

    def jets(self, p: Point, order: int) -> list[Jet]:
        point = self.chart.check_point(p)
        return [c.jet(point, order) for c in self.components]

    def derivatives(self, p: Point, order: int = 1) -> FieldDerivatives:
        point = self.chart.check_point(p)
        cached = _cache_lookup(self._cache, point, order)
        if cached is not None:
            return cached
        values, d, dd = _derivative_arrays(self.jets(point, order), order)
        result = FieldDerivatives(values=values, d=d, dd=dd)
        _cache_store(self._cache, point, order, result)
        return result

    def values(self, p: Point) -> np.ndarray:
        return self.derivatives(p, 0).values


class VectorField(_ComponentField):
    pass


class OneFormField(_ComponentField):
    pass


class Frame(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    base_point: np.ndarray
    vectors: np.ndarray

    @model_validator(mode="after")
    def linearly_independent(self) -> T.Self:
        if self.vectors.ndim != 2:
            raise ValueError("Frame vectors must be a 2d array (count, dim)")
        if np.linalg.matrix_rank(self.vectors) != self.vectors.shape[0]:
            raise ValueError("Frame vectors are linearly dependent")
        return self


# ============== connection and curvature ==============


@dataclasses.dataclass(frozen=True)
class Connection:
    g: np.ndarray
    ginv: np.ndarray
    gamma: np.ndarray
    dgamma: np.ndarray | None = None


def _invert(g: MetricField, matrix: np.ndarray, point: np.ndarray) -> np.ndarray:
    if g.signature == Signature.degenerate:
        raise SingularMetricError("Degenerate metrics are never inverted")
    if not np.all(np.isfinite(matrix)) or np.linalg.cond(matrix) > _SINGULAR_CONDITION:
        msg = f"Singular metric at {dict(zip(g.chart.names, point.tolist()))}"
        logger.error(msg)
        raise SingularMetricError(msg)
    return np.linalg.inv(matrix)


def inverse_metric(g: MetricField, p: Point) -> np.ndarray:
    point = g.chart.check_point(p)
    return _invert(g, g.value(point), point)


def connection(g: MetricField, p: Point, with_derivative: bool = False) -> Connection:
    point = g.chart.check_point(p)
    d = g.derivatives(point, 2 if with_derivative else 1)
    ginv = _invert(g, d.g, point)
    dg = d.dg
    gamma1 = 0.5 * (
        np.einsum("jli->lij", dg) + np.einsum("ilj->lij", dg) - np.einsum("ijl->lij", dg)
    )
    gamma = np.einsum("kl,lij->kij", ginv, gamma1)
    if not with_derivative:
        return Connection(g=d.g, ginv=ginv, gamma=gamma)
    ddg = d.ddg
    dgamma1 = 0.5 * (
        np.einsum("jlim->lijm", ddg)
        + np.einsum("iljm->lijm", ddg)
        - np.einsum("ijlm->lijm", ddg)
    )
    dginv = -np.einsum("ka,abm,bl->klm", ginv, dg, ginv)
    dgamma = np.einsum("klm,lij->kijm", dginv, gamma1) + np.einsum(
        "kl,lijm->kijm", ginv, dgamma1
    )
    return Connection(g=d.g, ginv=ginv, gamma=gamma, dgamma=dgamma)


def christoffel(g: MetricField, p: Point) -> np.ndarray:
    """Γ^k_ij as gamma[k, i, j]."""
    return connection(g, p).gamma


def riemann_from_connection(conn: Connection) -> np.ndarray:
    gamma, dgamma = conn.gamma, conn.dgamma
    r_up = (
        np.einsum("mjki->ijkm", dgamma)
        - np.einsum("mikj->ijkm", dgamma)
        + np.einsum("mip,pjk->ijkm", gamma, gamma)
        - np.einsum("mjp,pik->ijkm", gamma, gamma)
    )
    return np.einsum("ijkm,lm->ijkl", r_up, conn.g)


def riemann(g: MetricField, p: Point) -> np.ndarray:
    """R_ijkl = g(R(∂_i, ∂_j)∂_k, ∂_l)."""
    return riemann_from_connection(connection(g, p, with_derivative=True))


def ricci(g: MetricField, p: Point) -> np.ndarray:
    conn = connection(g, p, with_derivative=True)
    return np.einsum("il,ijkl->jk", conn.ginv, riemann_from_connection(conn))


def cov_deriv_vector(g: MetricField, X: VectorField, p: Point) -> np.ndarray:
    """(∇_i X)^j as nabla[i, j]."""
    point = g.chart.check_point(p)
    gamma = christoffel(g, point)
    x = X.derivatives(point, 1)
    return x.d.T + np.einsum("jik,k->ij", gamma, x.values)


def lie_derivative_metric(g: MetricField, X: VectorField, p: Point) -> np.ndarray:
    point = g.chart.check_point(p)
    d = g.derivatives(point, 1)
    x = X.derivatives(point, 1)
    return (
        np.einsum("k,ijk->ij", x.values, d.dg)
        + np.einsum("kj,ki->ij", d.g, x.d)
        + np.einsum("ik,kj->ij", d.g, x.d)
    )


def lie_derivative_oneform(w: OneFormField, X: VectorField, p: Point) -> np.ndarray:
    point = w.chart.check_point(p)
    form = w.derivatives(point, 1)
    x = X.derivatives(point, 1)
    return np.einsum("k,ik->i", x.values, form.d) + np.einsum("k,ki->i", form.values, x.d)


def exterior_derivative_oneform(w: OneFormField, p: Point) -> np.ndarray:
    """dω_ij = ∂_i ω_j − ∂_j ω_i."""
    d = w.derivatives(p, 1).d
    return d.T - d


def check_signature(g: MetricField, p: Point, rtol: float = 1e-12) -> bool:
    eigenvalues = np.linalg.eigvalsh(g.value(p))
    scale = max(np.max(np.abs(eigenvalues)), 1e-300)
    negative = int(np.sum(eigenvalues < -rtol * scale))
    zero = int(np.sum(np.abs(eigenvalues) <= rtol * scale))
    if g.signature == Signature.riemannian:
        return negative == 0 and zero == 0
    if g.signature == Signature.lorentzian:
        return negative == 1 and zero == 0
    return negative == 0 and zero == 1


def assert_signature(g: MetricField, p: Point) -> None:
    if not check_signature(g, p):
        msg = f"Metric does not have {g.signature.value} signature at {p}"
        logger.error(msg)
        raise SignatureError(msg)


# ============== frames ==============


def complement_vectors(s: np.ndarray, v: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Rows form an s-orthonormal basis of the s-orthogonal complement of v.

    The coordinate vector most aligned with v is dropped, the remaining ones
    are projected off v and Gram-Schmidt orthonormalized in chart order.
    """
    dim = len(v)
    try:
        np.linalg.cholesky(s)
    except np.linalg.LinAlgError as e:
        msg = f"σ is not positive definite at {point.tolist()}"
        logger.error(msg)
        raise NotPositiveDefiniteError(msg) from e
    vv = float(v @ s @ v)
    if vv <= 1e-300 or np.linalg.norm(v) == 0.0:
        msg = f"V vanishes at {point.tolist()}"
        logger.error(msg)
        raise VanishingVectorError(msg)
    sv = s @ v
    scores = np.abs(sv) / np.sqrt(np.diag(s) * vv)
    dropped = int(np.argmax(scores))
    basis: list[np.ndarray] = []
    for i in range(dim):
        if i == dropped:
            continue
        w = np.zeros(dim)
        w[i] = 1.0
        for _ in range(2):
            w = w - (float(w @ sv) / vv) * v
            for b in basis:
                w = w - float(b @ s @ w) * b
        norm = math.sqrt(float(w @ s @ w))
        basis.append(w / norm)
    return np.array(basis)


def orthogonal_complement_basis(sigma: MetricField, V: VectorField, p: Point) -> Frame:
    """σ-orthonormal basis of V⊥ at p."""
    point = sigma.chart.check_point(p)
    vectors = complement_vectors(sigma.value(point), V.values(point), point)
    return Frame(base_point=point, vectors=vectors)


def coordinate_components(frame_matrix: np.ndarray, frame_components: np.ndarray) -> np.ndarray:
    """Coordinate components of a (0,2) tensor from components in a frame.

    `frame_matrix` holds the frame vectors as columns.
    """
    inverse = np.linalg.inv(frame_matrix)
    return inverse.T @ frame_components @ inverse


def frame_components(frame_matrix: np.ndarray, coordinate: np.ndarray) -> np.ndarray:
    return frame_matrix.T @ coordinate @ frame_matrix


# ============== pull-backs under coordinate changes ==============


class _PullbackMap:
    """Jets of a coordinate change φ: new chart → old chart, cached per point."""

    def __init__(self, new_chart: Chart, old_chart: Chart, phi: T.Sequence[Expression | str]):
        if len(phi) != old_chart.dim:
            raise ValueError(f"φ needs {old_chart.dim} components, got {len(phi)}")
        self.new_chart = new_chart
        self.old_chart = old_chart
        self.phi = [new_chart.parse(s) if isinstance(s, str) else s for s in phi]
        self._last: tuple | None = None

    def jets(self, point: np.ndarray, order: int) -> list[Jet]:
        key = (tuple(point.tolist()), order)
        if self._last is not None and self._last[0] == key:
            return self._last[1]
        jets = [eval_jet(e, point, self.new_chart.params, order) for e in self.phi]
        self._last = (key, jets)
        return jets

    def image(self, jets: T.Sequence[Jet]) -> np.ndarray:
        return self.old_chart.check_point([j.value for j in jets])

    def jacobian_jets(self, point: np.ndarray, order: int) -> list[list[Jet]]:
        """J[k][i] = ∂_i φ^k as jets of the given order."""
        phi = self.jets(point, order + 1)
        return [[u.partial(i) for i in range(self.new_chart.dim)] for u in phi]

    def compose(self, field: AnalyticField, point: np.ndarray, order: int) -> Jet:
        phi = [u.truncate(order) for u in self.jets(point, order + 1)]
        return field.jet(self.image(phi), order).compose(phi)


def pullback_metric(g: MetricField, new_chart: Chart, phi: T.Sequence[Expression | str]) -> MetricField:
    """φ*g, where φ maps new-chart coordinates to old-chart coordinates."""
    mapping = _PullbackMap(new_chart, g.chart, phi)
    n_old, n_new = g.chart.dim, new_chart.dim

    def component(i: int, j: int) -> AnalyticField:
        def jet_fn(point: np.ndarray, order: int) -> Jet:
            jac = mapping.jacobian_jets(point, order)
            total = Jet.constant(n_new, order, 0.0)
            for k in range(n_old):
                for l in range(n_old):
                    g_kl = mapping.compose(g.components[k][l], point, order)
                    total = total + g_kl * jac[k][i] * jac[l][j]
            return total

        return AnalyticField(n_new, jet_fn, f"pullback[{i},{j}]")

    fields = [[None] * n_new for _ in range(n_new)]
    for i in range(n_new):
        for j in range(i, n_new):
            fields[i][j] = fields[j][i] = component(i, j)
    return MetricField.from_fields(new_chart, fields, g.signature)  # type: ignore[arg-type]


def pullback_vector(X: VectorField, new_chart: Chart, phi: T.Sequence[Expression | str]) -> VectorField:
    """Vector field X' with dφ(X') = X∘φ."""
    mapping = _PullbackMap(new_chart, X.chart, phi)
    n_old = X.chart.dim

    def component(i: int) -> AnalyticField:
        def jet_fn(point: np.ndarray, order: int) -> Jet:
            jac = mapping.jacobian_jets(point, order)
            rhs = [mapping.compose(X.components[k], point, order) for k in range(n_old)]
            return jet_solve(jac, rhs)[i]

        return AnalyticField(new_chart.dim, jet_fn, f"pullback[{i}]")

    return VectorField(chart=new_chart, components=tuple(component(i) for i in range(new_chart.dim)))


def pullback_oneform(w: OneFormField, new_chart: Chart, phi: T.Sequence[Expression | str]) -> OneFormField:
    mapping = _PullbackMap(new_chart, w.chart, phi)
    n_old = w.chart.dim

    def component(i: int) -> AnalyticField:
        def jet_fn(point: np.ndarray, order: int) -> Jet:
            jac = mapping.jacobian_jets(point, order)
            total = Jet.constant(new_chart.dim, order, 0.0)
            for k in range(n_old):
                total = total + mapping.compose(w.components[k], point, order) * jac[k][i]
            return total

        return AnalyticField(new_chart.dim, jet_fn, f"pullback[{i}]")

    return OneFormField(chart=new_chart, components=tuple(component(i) for i in range(new_chart.dim)))


def coordinate_change(
    new_chart: Chart, old_chart: Chart, phi: T.Sequence[Expression | str], p: Point
) -> tuple[np.ndarray, np.ndarray]:
    """Image φ(p) and Jacobian J[k, i] = ∂φ^k/∂x'^i at a new-chart point."""
    mapping = _PullbackMap(new_chart, old_chart, phi)
    point = new_chart.check_point(p)
    jets = mapping.jets(point, 1)
    return mapping.image(jets), np.array([j.gradient() for j in jets])
