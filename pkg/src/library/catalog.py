"""Exact vacuum spacetimes with Killing horizons.

Each entry carries its 4-metric, the horizon Killing field W, the horizon
locus, the horizon chart and the closed-form induced data (σ, V, ω, κ).
W is normalized so that κ > 0: on the inner Kerr horizon and on the
Taub-NUT horizon with negative surface gravity its sign is flipped.
"""

import logging
import math
import typing as T
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from library.errors import HorizonError, ParameterError
from library.geometry import (
    Chart,
    MetricField,
    OneFormField,
    Point,
    Signature,
    VectorField,
    lie_derivative_metric,
    riemann,
    ricci,
)
from library.initial_data import InitialDataSet
from library.settings import DEFAULTS

logger = logging.getLogger(__name__)

_TWO_PI = 2.0 * math.pi
_RIEMANN_FLOOR = 1e-12


class EntryName(str, Enum):
    schwarzschild = "schwarzschild"
    kerr = "kerr"
    misner = "misner"
    quotient_schwarzschild = "quotient_schwarzschild"
    taub_nut = "taub_nut"


class Branch(str, Enum):
    outer = "outer"
    inner = "inner"
    plus = "plus"
    minus = "minus"


class HorizonLocus(BaseModel):
    coordinate: str
    value: float


class SpacetimeSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: EntryName
    params: dict[str, float]
    branch: Branch | None = None
    chart: Chart
    metric: MetricField
    W: VectorField
    horizon: HorizonLocus | None = None
    horizon_chart: Chart | None = None
    closed_form_data: InitialDataSet | None = None
    closed_form_omega: OneFormField | None = None
    kappa_closed_form: float | None = None
    grid_coordinate: str
    vacuum_coordinates: tuple[str, ...]

    @model_validator(mode="after")
    def consistent_charts(self) -> T.Self:
        if self.metric.signature != Signature.lorentzian:
            raise ValueError("Spacetime metrics must be lorentzian")
        if self.W.chart != self.chart or self.metric.chart != self.chart:
            raise ValueError("Metric and W must live on the spacetime chart")
        if self.horizon is None:
            return self
        remaining = tuple(n for n in self.chart.names if n != self.horizon.coordinate)
        if self.horizon_chart is None or self.horizon_chart.names != remaining:
            raise ValueError(f"Horizon chart must have coordinates {remaining}")
        if self.grid_coordinate not in self.horizon_chart.names:
            raise ValueError(f"Grid coordinate {self.grid_coordinate} is not a horizon coordinate")
        return self

    @property
    def label(self) -> str:
        return self.name.value if self.branch is None else f"{self.name.value}[{self.branch.value}]"

    def require_horizon(self) -> tuple[HorizonLocus, Chart]:
        if self.horizon is None or self.horizon_chart is None:
            msg = f"{self.label} with parameters {self.params} has no tagged horizon"
            logger.error(msg)
            raise HorizonError(msg)
        return self.horizon, self.horizon_chart

    @property
    def transverse_index(self) -> int:
        horizon, _ = self.require_horizon()
        return self.chart.index(horizon.coordinate)

    @property
    def horizon_slots(self) -> list[int]:
        """Spacetime indices of the horizon chart coordinates, in order."""
        _, horizon_chart = self.require_horizon()
        return [self.chart.index(n) for n in horizon_chart.names]

    def embed(self, x: Point) -> np.ndarray:
        horizon, horizon_chart = self.require_horizon()
        x = horizon_chart.check_point(x)
        point = np.empty(self.chart.dim)
        point[self.transverse_index] = horizon.value
        point[self.horizon_slots] = x
        return self.chart.check_point(point)

    def vacuum_grid(self, n: int | None = None, margin: float | None = None) -> np.ndarray:
        return self.chart.grid(
            n or DEFAULTS.sampling.vacuum_grid,
            DEFAULTS.sampling.pole_margin if margin is None else margin,
            vary=self.vacuum_coordinates,
        )

    def horizon_grid(self, n: int | None = None, margin: float | None = None) -> np.ndarray:
        """Points of the horizon chart along the grid coordinate, others centered."""
        _, horizon_chart = self.require_horizon()
        return horizon_chart.grid(
            n or DEFAULTS.sampling.theta_grid,
            DEFAULTS.sampling.pole_margin if margin is None else margin,
            vary=(self.grid_coordinate,),
        )


# ============== construction helpers ==============


def _symmetric(n: int, entries: T.Mapping[tuple[int, int], str]) -> list[list[str]]:
    rows = [["0"] * n for _ in range(n)]
    for (i, j), source in entries.items():
        rows[i][j] = rows[j][i] = source
    return rows


def _sigma_from_lightlike(
    n: int, lightlike: T.Mapping[tuple[int, int], str], omega: T.Sequence[str]
) -> list[list[str]]:
    """String components of σ = g + ω⊗ω."""
    entries = {}
    for i in range(n):
        for j in range(i, n):
            parts = []
            if (i, j) in lightlike:
                parts.append(f"({lightlike[(i, j)]})")
            if omega[i] != "0" and omega[j] != "0":
                parts.append(f"({omega[i]})*({omega[j]})")
            entries[(i, j)] = " + ".join(parts) if parts else "0"
    return _symmetric(n, entries)


def _check_params(name: EntryName, given: T.Mapping[str, float], allowed: T.Sequence[str]) -> dict[str, float]:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        msg = f"{name.value} does not take parameters {unknown}; allowed: {list(allowed)}"
        logger.error(msg)
        raise ParameterError(msg)
    params = dict(default_parameters(name))
    params.pop("branch", None)
    params.update({k: float(v) for k, v in given.items()})
    for key, value in params.items():
        if not math.isfinite(value):
            raise ParameterError(f"Parameter {key} must be finite, got {value}")
    return params


def _reject(message: str) -> T.NoReturn:
    logger.error(message)
    raise ParameterError(message)


def _sphere_bounds(**extra: tuple[float, float]) -> dict[str, tuple[float, float]]:
    return {"theta": (0.0, math.pi), **extra}


# ============== entries ==============


def _schwarzschild(params: dict[str, float]) -> SpacetimeSolution:
    m = params["m"]
    if m <= 0:
        _reject(f"schwarzschild needs m > 0, got {m}")
    chart = Chart.from_names(
        ["r", "v", "theta", "phi"],
        params={"m": m},
        bounds=_sphere_bounds(r=(0.0, math.inf)),
        samples={"r": (1.5 * m, 3.0 * m), "phi": (0.0, _TWO_PI)},
    )
    metric = MetricField.from_strings(
        chart,
        _symmetric(4, {(0, 1): "1", (1, 1): "2*m/r - 1", (2, 2): "r^2", (3, 3): "r^2*sin(theta)^2"}),
        Signature.lorentzian,
    )
    W = VectorField.from_strings(chart, ["0", "1", "0", "0"])
    horizon_chart = Chart.from_names(
        ["v", "theta", "phi"],
        params={"m": m},
        bounds=_sphere_bounds(),
        samples={"phi": (0.0, _TWO_PI)},
    )
    sigma = _symmetric(3, {(0, 0): "1/(16*m^2)", (1, 1): "4*m^2", (2, 2): "4*m^2*sin(theta)^2"})
    data = InitialDataSet.from_strings("schwarzschild closed form", horizon_chart, sigma, ["1", "0", "0"])
    return SpacetimeSolution(
        name=EntryName.schwarzschild,
        params=params,
        chart=chart,
        metric=metric,
        W=W,
        horizon=HorizonLocus(coordinate="r", value=2.0 * m),
        horizon_chart=horizon_chart,
        closed_form_data=data,
        closed_form_omega=OneFormField.from_strings(horizon_chart, ["1/(4*m)", "0", "0"]),
        kappa_closed_form=1.0 / (4.0 * m),
        grid_coordinate="theta",
        vacuum_coordinates=("r", "v", "theta"),
    )


def _kerr(params: dict[str, float], branch: Branch) -> SpacetimeSolution:
    m, a = params["m"], params["a"]
    if branch not in (Branch.outer, Branch.inner):
        _reject(f"kerr needs branch outer or inner, got {branch.value}")
    if not (m > 0 and 0 < abs(a) < m):
        _reject(f"kerr needs 0 < |a| < m (non-degenerate horizon), got m={m}, a={a}")

    root = math.sqrt(m * m - a * a)
    rh = m + root if branch == Branch.outer else m - root
    omega_h = a / (rh * rh + a * a)
    kappa_signed = 0.5 * (1.0 / m - 1.0 / rh)
    sgn = 1.0 if kappa_signed > 0 else -1.0
    r_plus = m + root

    chart = Chart.from_names(
        ["r", "v", "theta", "phi"],
        params={"m": m, "a": a, "Omega": omega_h, "sgn": sgn},
        bounds=_sphere_bounds(r=(0.0, math.inf)),
        samples={"r": (0.75 * r_plus, 1.5 * r_plus), "phi": (0.0, _TWO_PI)},
    )
    rho2 = "(r^2 + a^2*cos(theta)^2)"
    metric = MetricField.from_strings(
        chart,
        _symmetric(
            4,
            {
                (0, 1): "1",
                (0, 3): "-a*sin(theta)^2",
                (1, 1): f"2*m*r/{rho2} - 1",
                (1, 3): f"-a*sin(theta)^2*2*m*r/{rho2}",
                (2, 2): rho2,
                (3, 3): f"sin(theta)^2*(r^2 + a^2 + 2*m*r*a^2*sin(theta)^2/{rho2})",
            },
        ),
        Signature.lorentzian,
    )
    W = VectorField.from_strings(chart, ["0", "sgn", "0", "sgn*Omega"])

    horizon_chart = Chart.from_names(
        ["v", "theta", "phi"],
        params={"a": a, "rh": rh, "kappa": kappa_signed, "Omega": omega_h, "sgn": sgn},
        bounds=_sphere_bounds(),
        samples={"phi": (0.0, _TWO_PI)},
    )
    sig = "(rh^2 + a^2*cos(theta)^2)"
    s2 = "sin(theta)^2"
    lightlike = {
        (0, 0): f"a^2*{s2}/{sig}",
        (0, 2): f"-a*(rh^2 + a^2)*{s2}/{sig}",
        (1, 1): sig,
        (2, 2): f"(rh^2 + a^2)^2*{s2}/{sig}",
    }
    omega = [
        f"kappa*(rh^2 + a^2)/{sig} + rh*a^2*{s2}/{sig}^2",
        f"-a^2*sin(2*theta)/(2*{sig})",
        f"-kappa*(rh^2 + a^2)*a*{s2}/{sig} - rh*a*{s2}*(rh^2 + a^2)/{sig}^2",
    ]
    data = InitialDataSet.from_strings(
        f"kerr[{branch.value}] closed form",
        horizon_chart,
        _sigma_from_lightlike(3, lightlike, omega),
        ["sgn", "0", "sgn*Omega"],
    )
    return SpacetimeSolution(
        name=EntryName.kerr,
        params=params,
        branch=branch,
        chart=chart,
        metric=metric,
        W=W,
        horizon=HorizonLocus(coordinate="r", value=rh),
        horizon_chart=horizon_chart,
        closed_form_data=data,
        closed_form_omega=OneFormField.from_strings(horizon_chart, omega),
        kappa_closed_form=abs(kappa_signed),
        grid_coordinate="theta",
        vacuum_coordinates=("r", "v", "theta"),
    )


def _misner(params: dict[str, float]) -> SpacetimeSolution:
    alpha = params["alpha"]
    if alpha == 0:
        _reject("misner needs alpha != 0")
    chart = Chart.from_names(
        ["t", "x", "y", "z"],
        params={"alpha": alpha},
        samples={"t": (-0.5, 0.5), "x": (0.0, _TWO_PI), "y": (0.0, _TWO_PI), "z": (0.0, _TWO_PI)},
    )
    metric = MetricField.from_strings(
        chart,
        _symmetric(4, {(0, 1): "1", (1, 1): "alpha*t", (2, 2): "1", (3, 3): "1"}),
        Signature.lorentzian,
    )
    W = VectorField.from_strings(chart, ["0", "1", "0", "0"])
    tagged = alpha == -2.0
    if not tagged:
        logger.info(f"misner with alpha={alpha}: horizon t=0 is only tagged for alpha=-2")
    horizon_chart = None
    data = None
    omega = None
    if tagged:
        horizon_chart = Chart.from_names(
            ["x", "y", "z"],
            samples={"x": (0.0, _TWO_PI), "y": (0.0, _TWO_PI), "z": (0.0, _TWO_PI)},
        )
        data = InitialDataSet.from_strings(
            "misner closed form",
            horizon_chart,
            _symmetric(3, {(0, 0): "1", (1, 1): "1", (2, 2): "1"}),
            ["1", "0", "0"],
        )
        omega = OneFormField.from_strings(horizon_chart, ["1", "0", "0"])
    return SpacetimeSolution(
        name=EntryName.misner,
        params=params,
        chart=chart,
        metric=metric,
        W=W,
        horizon=HorizonLocus(coordinate="t", value=0.0) if tagged else None,
        horizon_chart=horizon_chart,
        closed_form_data=data,
        closed_form_omega=omega,
        kappa_closed_form=1.0 if tagged else None,
        grid_coordinate="y",
        vacuum_coordinates=("t", "x", "y"),
    )


def _quotient_schwarzschild(params: dict[str, float]) -> SpacetimeSolution:
    m = params["m"]
    if m <= 0:
        _reject(f"quotient_schwarzschild needs m > 0, got {m}")
    chart = Chart.from_names(
        ["r", "w", "theta", "phi"],
        params={"m": m},
        bounds=_sphere_bounds(r=(0.0, math.inf)),
        samples={"r": (1.5 * m, 3.0 * m), "w": (0.0, _TWO_PI), "phi": (0.0, _TWO_PI)},
    )
    metric = MetricField.from_strings(
        chart,
        _symmetric(4, {(0, 1): "2", (1, 1): "4*(2*m/r - 1)", (2, 2): "r^2", (3, 3): "r^2*sin(theta)^2"}),
        Signature.lorentzian,
    )
    W = VectorField.from_strings(chart, ["0", "1", "0", "0"])
    horizon_chart = Chart.from_names(
        ["w", "theta", "phi"],
        params={"m": m},
        bounds=_sphere_bounds(),
        samples={"w": (0.0, _TWO_PI), "phi": (0.0, _TWO_PI)},
    )
    sigma = _symmetric(3, {(0, 0): "1/(4*m^2)", (1, 1): "4*m^2", (2, 2): "4*m^2*sin(theta)^2"})
    data = InitialDataSet.from_strings("quotient_schwarzschild closed form", horizon_chart, sigma, ["1", "0", "0"])
    return SpacetimeSolution(
        name=EntryName.quotient_schwarzschild,
        params=params,
        chart=chart,
        metric=metric,
        W=W,
        horizon=HorizonLocus(coordinate="r", value=2.0 * m),
        horizon_chart=horizon_chart,
        closed_form_data=data,
        closed_form_omega=OneFormField.from_strings(horizon_chart, ["1/(2*m)", "0", "0"]),
        kappa_closed_form=1.0 / (2.0 * m),
        grid_coordinate="theta",
        vacuum_coordinates=("r", "w", "theta"),
    )


def _taub_nut(params: dict[str, float], branch: Branch) -> SpacetimeSolution:
    m, l = params["m"], params["l"]
    if branch not in (Branch.plus, Branch.minus):
        _reject(f"taub_nut needs branch plus or minus, got {branch.value}")
    if l == 0:
        _reject("taub_nut needs l != 0")

    root = math.sqrt(m * m + l * l)
    tp, tm = m + root, m - root
    th = tp if branch == Branch.plus else tm
    sign = 1.0 if branch == Branch.plus else -1.0
    kappa_signed = sign * 2.0 * l * root / (th * th + l * l)
    sgn = 1.0 if kappa_signed > 0 else -1.0
    kappa = abs(kappa_signed)

    chart = Chart.from_names(
        ["t", "psi", "theta", "phi"],
        params={"m": m, "l": l, "tp": tp, "tm": tm, "sgn": sgn},
        bounds=_sphere_bounds(),
        samples={"t": (tm - 0.5, tp + 0.5), "psi": (0.0, _TWO_PI), "phi": (0.0, _TWO_PI)},
    )
    U = "((tp - t)*(t - tm)/(t^2 + l^2))"
    metric = MetricField.from_strings(
        chart,
        _symmetric(
            4,
            {
                (0, 1): "2*l",
                (0, 3): "2*l*cos(theta)",
                (1, 1): f"4*l^2*{U}",
                (1, 3): f"4*l^2*{U}*cos(theta)",
                (2, 2): "t^2 + l^2",
                (3, 3): f"4*l^2*{U}*cos(theta)^2 + (t^2 + l^2)*sin(theta)^2",
            },
        ),
        Signature.lorentzian,
    )
    W = VectorField.from_strings(chart, ["0", "sgn", "0", "0"])

    horizon_chart = Chart.from_names(
        ["psi", "theta", "phi"],
        params={"k2": kappa * kappa, "kappa": kappa_signed, "h2": th * th + l * l, "sgn": sgn},
        bounds=_sphere_bounds(),
        samples={"psi": (0.0, _TWO_PI), "phi": (0.0, _TWO_PI)},
    )
    sigma = _symmetric(
        3,
        {
            (0, 0): "k2",
            (0, 2): "k2*cos(theta)",
            (1, 1): "h2",
            (2, 2): "k2*cos(theta)^2 + h2*sin(theta)^2",
        },
    )
    data = InitialDataSet.from_strings(f"taub_nut[{branch.value}] closed form", horizon_chart, sigma, ["sgn", "0", "0"])
    return SpacetimeSolution(
        name=EntryName.taub_nut,
        params=params,
        branch=branch,
        chart=chart,
        metric=metric,
        W=W,
        horizon=HorizonLocus(coordinate="t", value=th),
        horizon_chart=horizon_chart,
        closed_form_data=data,
        closed_form_omega=OneFormField.from_strings(horizon_chart, ["kappa", "0", "kappa*cos(theta)"]),
        kappa_closed_form=kappa,
        grid_coordinate="theta",
        vacuum_coordinates=("t", "psi", "theta"),
    )


_DEFAULTS: dict[EntryName, dict[str, T.Any]] = {
    EntryName.schwarzschild: {"m": 1.0},
    EntryName.kerr: {"m": 1.0, "a": 0.5, "branch": Branch.outer},
    EntryName.misner: {"alpha": -2.0},
    EntryName.quotient_schwarzschild: {"m": 0.5},
    EntryName.taub_nut: {"m": 0.0, "l": 1.0 / math.sqrt(2.0), "branch": Branch.plus},
}


def list_entries() -> list[str]:
    return [name.value for name in EntryName]


def default_parameters(name: EntryName | str) -> dict[str, T.Any]:
    try:
        entry = EntryName(name)
    except ValueError as e:
        raise ParameterError(f"Unknown catalog entry {name!r}; choose from {list_entries()}") from e
    return dict(_DEFAULTS[entry])


def build(
    name: EntryName | str,
    params: T.Mapping[str, float] | None = None,
    branch: Branch | str | None = None,
) -> SpacetimeSolution:
    entry = EntryName(name) if name in list_entries() else None
    if entry is None:
        msg = f"Unknown catalog entry {name!r}; choose from {list_entries()}"
        logger.error(msg)
        raise ParameterError(msg)
    defaults = default_parameters(entry)
    allowed = [k for k in defaults if k != "branch"]
    values = _check_params(entry, params or {}, allowed)

    selected: Branch | None = None
    if "branch" in defaults:
        try:
            selected = Branch(branch) if branch is not None else defaults["branch"]
        except ValueError as e:
            raise ParameterError(f"Unknown branch {branch!r}") from e
    elif branch is not None:
        _reject(f"{entry.value} takes no branch, got {branch}")

    logger.debug(f"Building {entry.value} with {values} branch={selected}")
    match entry:
        case EntryName.schwarzschild:
            return _schwarzschild(values)
        case EntryName.kerr:
            return _kerr(values, selected)  # type: ignore[arg-type]
        case EntryName.misner:
            return _misner(values)
        case EntryName.quotient_schwarzschild:
            return _quotient_schwarzschild(values)
        case EntryName.taub_nut:
            return _taub_nut(values, selected)  # type: ignore[arg-type]


# ============== oracles ==============


def ricci_residual(sol: SpacetimeSolution, p: Point) -> float:
    """‖Ric‖ / ‖Riem‖, or ‖Ric‖ where the curvature vanishes."""
    point = sol.chart.check_point(p)
    riem = np.linalg.norm(riemann(sol.metric, point))
    ric = np.linalg.norm(ricci(sol.metric, point))
    if riem < _RIEMANN_FLOOR:
        return float(ric)
    return float(ric / riem)


def spacetime_killing_residual(sol: SpacetimeSolution, p: Point) -> float:
    point = sol.chart.check_point(p)
    lie = lie_derivative_metric(sol.metric, sol.W, point)
    return float(np.linalg.norm(lie) / np.linalg.norm(sol.metric.value(point)))


def killing_norm(sol: SpacetimeSolution, p: Point) -> float:
    """g(W, W) at a spacetime point."""
    point = sol.chart.check_point(p)
    w = sol.W.values(point)
    return float(w @ sol.metric.value(point) @ w)


def horizon_null_residual(sol: SpacetimeSolution, x: Point) -> float:
    """|g(W, W)| at the horizon point with horizon coordinates x."""
    return abs(killing_norm(sol, sol.embed(x)))


def induced_data_closed_form(sol: SpacetimeSolution) -> InitialDataSet:
    sol.require_horizon()
    assert sol.closed_form_data is not None
    return sol.closed_form_data
