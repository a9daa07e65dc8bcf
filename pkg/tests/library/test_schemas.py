import json
import math

import polars as pl
import pytest
from pydantic import ValidationError

from library.schemas import (
    POLARS_CHECK_SCHEMA,
    CheckRecord,
    CoordinateSpec,
    DeviationRow,
    ExpansionRow,
    InitialDataFile,
    Report,
    convert_to_dataframe_checks,
    convert_to_dataframe_deviations,
    convert_to_dataframe_expansion,
)


# ============== Test input files ==============
def test_coordinate_bounds():
    assert CoordinateSpec(name="x").bounds == (-math.inf, math.inf)
    assert CoordinateSpec(name="theta", min=0.0, max=math.pi).bounds == (0.0, math.pi)


def test_initial_data_file():
    parsed = InitialDataFile.model_validate(
        {
            "label": "torus",
            "coords": [{"name": "x", "min": 0, "max": 1}, {"name": "y"}],
            "sigma": [["1", "0"], ["0", "1"]],
            "V": ["1", "0"],
        }
    )
    assert parsed.params == {}
    assert parsed.coords[0].bounds == (0.0, 1.0)


@pytest.mark.parametrize(
    "changes",
    [
        {"coords": []},
        {"sigma": [["1", "0"], ["0"]]},
        {"V": ["1"]},
    ],
)
def test_initial_data_file_shapes(changes: dict):
    raw = {
        "label": "torus",
        "coords": [{"name": "x"}, {"name": "y"}],
        "sigma": [["1", "0"], ["0", "1"]],
        "V": ["1", "0"],
    }
    with pytest.raises(ValidationError):
        InitialDataFile.model_validate(raw | changes)


# ============== Test reports ==============
def test_check_record_from_residual():
    assert CheckRecord.from_residual("kerr", "vacuum", 1e-12, 1e-8).passed
    assert not CheckRecord.from_residual("kerr", "vacuum", 1e-6, 1e-8).passed
    assert not CheckRecord.from_residual("kerr", "vacuum", math.nan, 1e-8).passed


def test_check_record_failure():
    record = CheckRecord.failure("misner", "induce", 0.0, "no horizon")
    assert not record.passed
    assert record.residual == math.inf
    assert record.detail == "no horizon"


def test_report_json():
    report = Report(
        command="verify",
        checks=[
            CheckRecord.from_residual("schwarzschild", "vacuum", 1e-12, 1e-8),
            CheckRecord.failure("kerr", "build", 0.0, "bad a"),
        ],
        values={"n_checks": 2},
    )
    payload = json.loads(report.to_json())
    assert payload["passed"] is False
    assert payload["values"] == {"n_checks": 2}
    assert [c["check"] for c in payload["checks"]] == ["vacuum", "build"]


def test_empty_report_passes():
    assert Report(command="validate").passed


def test_expansion_row_square():
    with pytest.raises(ValidationError):
        ExpansionRow(entry="e", point=[0.0], kappa=1.0, q1=[[1.0, 0.0], [0.0]])


# ============== Test def convert_to_dataframe_* ==============
def test_convert_checks():
    checks = [
        CheckRecord.from_residual("misner", "vacuum", 0.0, 1e-8),
        CheckRecord.from_residual("misner", "killing", 2e-10, 1e-10, detail="50 points"),
    ]
    df = convert_to_dataframe_checks(checks)
    assert dict(df.schema) == POLARS_CHECK_SCHEMA
    assert df["passed"].to_list() == [True, False]
    assert df["detail"].to_list() == [None, "50 points"]


def test_convert_expansion_upper_triangle():
    rows = [
        ExpansionRow(entry="misner", point=[0.5, 1.0, 2.0], kappa=1.0, q1=[[-2.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
    ]
    df = convert_to_dataframe_expansion(rows)
    assert len(df) == 6
    assert df["point"][0] == "0.5 1 2"
    assert df.filter(pl.col("row") == pl.col("column"))["q1"].to_list() == [-2.0, 0.0, 0.0]


def test_convert_deviations():
    rows = [
        DeviationRow(entry="kerr", point=[0.0, 1.0, 0.0], quantity="sigma[0,0]", closed_form=0.5, numeric=0.5 + 1e-12),
        DeviationRow(entry="kerr", point=[], quantity="kappa", closed_form=0.25, numeric=0.25),
    ]
    df = convert_to_dataframe_deviations(rows)
    assert df["deviation"][0] == pytest.approx(1e-12)
    assert df["point"].to_list() == ["0 1 0", ""]
