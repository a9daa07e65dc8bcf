import json
import math
import typing as T
from enum import Enum

import polars as pl
from pydantic import BaseModel, Field, field_validator, model_validator


# ============== input files ==============


class CoordinateSpec(BaseModel):
    name: str = Field(..., title="Coordinate name.", examples=["x", "theta"])
    min: T.Optional[float] = Field(
        default=None, title="Lower chart bound, null for unbounded.", examples=[0.05]
    )
    max: T.Optional[float] = Field(
        default=None, title="Upper chart bound, null for unbounded.", examples=[3.09]
    )

    @property
    def bounds(self) -> tuple[float, float]:
        lower = -math.inf if self.min is None else self.min
        upper = math.inf if self.max is None else self.max
        return lower, upper


class InitialDataFile(BaseModel):
    label: str = Field(..., title="Name of the data set.", examples=["flat torus"])
    coords: T.List[CoordinateSpec] = Field(..., title="Chart coordinates.")
    params: T.Dict[str, float] = Field(default_factory=dict, title="Parameter values.")
    sigma: T.List[T.List[str]] = Field(
        ..., title="Riemannian metric components as expressions.", examples=[[["1", "0"], ["0", "1"]]]
    )
    V: T.List[str] = Field(..., title="Killing vector components.", examples=[["1", "0"]])

    @model_validator(mode="after")
    def shapes_match(self) -> T.Self:
        n = len(self.coords)
        if n == 0:
            raise ValueError("At least one coordinate is required")
        if len(self.sigma) != n or any(len(row) != n for row in self.sigma):
            raise ValueError(f"sigma must be a {n}x{n} matrix")
        if len(self.V) != n:
            raise ValueError(f"V must have {n} components")
        return self


# ============== reports ==============


class OutputFormat(str, Enum):
    json = "json"
    csv = "csv"


class CheckRecord(BaseModel):
    entry: str = Field(..., title="Catalog entry or data set label.", examples=["schwarzschild"])
    check: str = Field(..., title="Name of the check.", examples=["ricci_residual"])
    residual: float = Field(..., title="Largest residual over the sampled points.")
    threshold: float = Field(..., title="Acceptance threshold.")
    passed: bool
    detail: T.Optional[str] = Field(default=None, title="Free-form context, e.g. an error message.")

    @classmethod
    def from_residual(
        cls, entry: str, check: str, residual: float, threshold: float, detail: str | None = None
    ) -> "CheckRecord":
        passed = math.isfinite(residual) and residual <= threshold
        return cls(
            entry=entry, check=check, residual=residual, threshold=threshold, passed=passed, detail=detail
        )

    @classmethod
    def failure(cls, entry: str, check: str, threshold: float, detail: str) -> "CheckRecord":
        return cls(
            entry=entry, check=check, residual=math.inf, threshold=threshold, passed=False, detail=detail
        )


class Report(BaseModel):
    command: str
    checks: T.List[CheckRecord] = Field(default_factory=list)
    values: T.Dict[str, T.Any] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        payload = self.model_dump(mode="json")
        payload["passed"] = self.passed
        return json.dumps(payload, indent=2, default=str)


class ExpansionRow(BaseModel):
    entry: str
    point: T.List[float]
    kappa: float
    q1: T.List[T.List[float]] = Field(..., title="q1 in the frame (V, e_2, ..., e_n).")

    @field_validator("q1")
    @classmethod
    def square(cls, q1: T.List[T.List[float]]) -> T.List[T.List[float]]:
        if any(len(row) != len(q1) for row in q1):
            raise ValueError("q1 must be a square matrix")
        return q1


class DeviationRow(BaseModel):
    entry: str
    point: T.List[float]
    quantity: str = Field(..., examples=["sigma[0,1]", "omega[2]", "kappa"])
    closed_form: float
    numeric: float

    @property
    def deviation(self) -> float:
        return abs(self.closed_form - self.numeric)


POLARS_CHECK_SCHEMA = {
    "entry": pl.String,
    "check": pl.String,
    "residual": pl.Float64,
    "threshold": pl.Float64,
    "passed": pl.Boolean,
    "detail": pl.String,
}


def convert_to_dataframe_checks(
    checks: T.Sequence[CheckRecord], polars_check_schema: T.Dict[str, pl.DataType] | None = None
) -> pl.DataFrame:
    if polars_check_schema is None:
        polars_check_schema = POLARS_CHECK_SCHEMA

    return pl.from_dicts(data=[c.model_dump() for c in checks], schema=polars_check_schema)


def _point_label(point: T.Sequence[float]) -> str:
    return " ".join(f"{x:.6g}" for x in point)


POLARS_EXPANSION_SCHEMA = {
    "entry": pl.String,
    "point": pl.String,
    "kappa": pl.Float64,
    "row": pl.Int64,
    "column": pl.Int64,
    "q1": pl.Float64,
}


def convert_to_dataframe_expansion(
    rows: T.Sequence[ExpansionRow],
    polars_expansion_schema: T.Dict[str, pl.DataType] | None = None,
) -> pl.DataFrame:
    """One line per upper-triangular frame component of q1."""
    if polars_expansion_schema is None:
        polars_expansion_schema = POLARS_EXPANSION_SCHEMA

    flat = []
    for row in rows:
        n = len(row.q1)
        for i in range(n):
            for j in range(i, n):
                flat.append(
                    {
                        "entry": row.entry,
                        "point": _point_label(row.point),
                        "kappa": row.kappa,
                        "row": i,
                        "column": j,
                        "q1": row.q1[i][j],
                    }
                )
    return pl.from_dicts(data=flat, schema=polars_expansion_schema)


POLARS_DEVIATION_SCHEMA = {
    "entry": pl.String,
    "point": pl.String,
    "quantity": pl.String,
    "closed_form": pl.Float64,
    "numeric": pl.Float64,
    "deviation": pl.Float64,
}


def convert_to_dataframe_deviations(
    rows: T.Sequence[DeviationRow],
    polars_deviation_schema: T.Dict[str, pl.DataType] | None = None,
) -> pl.DataFrame:
    if polars_deviation_schema is None:
        polars_deviation_schema = POLARS_DEVIATION_SCHEMA

    return pl.from_dicts(
        data=[
            {
                "entry": r.entry,
                "point": _point_label(r.point),
                "quantity": r.quantity,
                "closed_form": r.closed_form,
                "numeric": r.numeric,
                "deviation": r.deviation,
            }
            for r in rows
        ],
        schema=polars_deviation_schema,
    )
