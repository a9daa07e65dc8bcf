import json
from pathlib import Path

import polars as pl
import pytest

from library.cli import (
    EXIT_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    Command,
    RunConfig,
    build_parser,
    main,
)
from library.schemas import OutputFormat

DATA_DIR = Path(__file__).parents[2] / "data"


@pytest.fixture(autouse=True)
def workdir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    # keeps a stray ./horizon-lab.toml out of the tests
    monkeypatch.chdir(tmp_path)
    return tmp_path


def read_report(capsys: pytest.CaptureFixture) -> dict:
    return json.loads(capsys.readouterr().out)


# ============== Test the class RunConfig ==============
def config_from(argv: list[str]) -> RunConfig:
    return RunConfig.from_args(build_parser().parse_args(argv))


def test_run_config_collects_overrides():
    config = config_from(
        ["verify", "--spacetime", "kerr", "--a", "0.3", "--branch", "inner", "--tol-identity", "1e-5", "--tol-q1", "1e-6"]
    )
    assert config.command == Command.verify
    assert config.params == {"a": 0.3}
    assert config.tolerances == {
        "commutator": 1e-5,
        "killing_transport": 1e-5,
        "jacobi": 1e-5,
        "q1": 1e-6,
    }
    selection = config.selection()
    assert selection.branch.value == "inner"


def test_run_config_settings_apply_overrides():
    config = config_from(["expand", "--spacetime", "schwarzschild", "--theta-grid", "3", "--h", "0.002", "--workers", "2"])
    settings = config.settings()
    assert settings.sampling.theta_grid == 3
    assert settings.sampling.grid == 11
    assert settings.foliation.h == 0.002
    assert settings.foliation.t_max == 1e-2
    assert settings.execution.workers == 2


def test_run_config_reads_toml(workdir: Path):
    toml = workdir / "lab.toml"
    toml.write_text("[tolerances]\nkilling = 1e-6\n\n[sampling]\ngrid = 4\n")
    config = config_from(["validate", "--spacetime", "schwarzschild", "--config", str(toml), "--grid", "3"])
    settings = config.settings()
    assert settings.tolerances.killing == 1e-6
    assert settings.sampling.grid == 3


@pytest.mark.parametrize(
    "argv",
    [
        ["validate"],
        ["validate", "--input", "x.json", "--spacetime", "misner"],
        ["expand"],
        ["induce"],
        ["verify"],
        ["verify", "--all", "--spacetime", "kerr"],
        ["verify", "--all", "--m", "2"],
    ],
)
def test_run_config_rejects_selection(argv: list[str]):
    with pytest.raises(ValueError):
        config_from(argv)


# ============== Test def main: validate ==============
def test_validate_schwarzschild_file(capsys: pytest.CaptureFixture):
    status = main(["validate", "--input", str(DATA_DIR / "schwarzschild-horizon.json"), "--grid", "3"])
    assert status == EXIT_OK
    report = read_report(capsys)
    assert report["passed"] is True
    assert report["command"] == "validate"
    assert report["values"]["kappa"] == pytest.approx(0.25)


def test_validate_rotating_plane_fails(capsys: pytest.CaptureFixture):
    status = main(["validate", "--input", str(DATA_DIR / "rotating-plane.json"), "--grid", "4"])
    assert status == EXIT_FAILED
    report = read_report(capsys)
    assert report["passed"] is False
    failed = {c["check"] for c in report["checks"] if not c["passed"]}
    assert failed == {"length"}


def test_validate_catalog_data(capsys: pytest.CaptureFixture):
    assert main(["validate", "--spacetime", "kerr", "--grid", "3"]) == EXIT_OK
    assert read_report(capsys)["values"]["kappa"] > 0


def test_validate_broken_file(workdir: Path):
    path = workdir / "broken.json"
    path.write_text("[1, 2")
    assert main(["validate", "--input", str(path)]) == EXIT_USAGE


def test_validate_unknown_identifier(workdir: Path):
    path = workdir / "unknown.json"
    payload = {"label": "u", "coords": [{"name": "x"}], "sigma": [["q"]], "V": ["1"]}
    path.write_text(json.dumps(payload))
    assert main(["validate", "--input", str(path)]) == EXIT_USAGE


@pytest.mark.parametrize(
    "coords,sigma",
    [
        ([{"name": "x"}, {"name": "y"}], [["1", "x"], ["0", "1"]]),
        ([{"name": "x", "min": 1.0, "max": 0.0}, {"name": "y"}], [["1", "0"], ["0", "1"]]),
        ([{"name": "x"}, {"name": "x"}], [["1", "0"], ["0", "1"]]),
        ([{"name": "sin"}, {"name": "y"}], [["1", "0"], ["0", "1"]]),
    ],
    ids=["asymmetric-sigma", "reversed-bounds", "duplicate-names", "function-name"],
)
def test_validate_inconsistent_file(workdir: Path, coords: list[dict], sigma: list[list[str]]):
    path = workdir / "inconsistent.json"
    path.write_text(json.dumps({"label": "bad", "coords": coords, "sigma": sigma, "V": ["1", "0"]}))
    assert main(["validate", "--input", str(path)]) == EXIT_USAGE
    assert main(["expand", "--input", str(path)]) == EXIT_USAGE


def test_validate_syntax_error(workdir: Path):
    path = workdir / "syntax.json"
    payload = {"label": "s", "coords": [{"name": "x"}], "sigma": [["1 +"]], "V": ["1"]}
    path.write_text(json.dumps(payload))
    assert main(["validate", "--input", str(path)]) == EXIT_USAGE


# ============== Test def main: induce ==============
def test_induce_schwarzschild_csv(workdir: Path):
    out = workdir / "induce.csv"
    status = main(["induce", "--spacetime", "schwarzschild", "--theta-grid", "3", "--format", "csv", "--out", str(out)])
    assert status == EXIT_OK
    table = pl.read_csv(out)
    assert table.columns == ["entry", "point", "quantity", "closed_form", "numeric", "deviation"]
    # 6 sigma, 3 omega and 3 V rows per point plus kappa
    assert len(table) == 3 * 12 + 1
    assert table["deviation"].max() < 1e-7


def test_induce_without_horizon_reports_failure(capsys: pytest.CaptureFixture):
    status = main(["induce", "--spacetime", "misner", "--alpha", "1.0"])
    assert status == EXIT_FAILED
    report = read_report(capsys)
    assert report["checks"][0]["entry"] == "misner"
    assert report["checks"][0]["passed"] is False


def test_induce_bad_parameters():
    assert main(["induce", "--spacetime", "kerr", "--a", "1.5"]) == EXIT_USAGE
    assert main(["induce", "--spacetime", "schwarzschild", "--a", "0.5"]) == EXIT_USAGE


# ============== Test def main: expand ==============
def test_expand_schwarzschild(capsys: pytest.CaptureFixture):
    status = main(["expand", "--spacetime", "schwarzschild", "--theta-grid", "3"])
    assert status == EXIT_OK
    report = read_report(capsys)
    assert report["values"]["kappa"] == pytest.approx(0.25)
    rows = report["values"]["rows"]
    assert len(rows) == 3
    assert rows[0]["q1"][0] == pytest.approx([-0.5, 0.0, 0.0], abs=1e-12)


def test_expand_input_file_csv(workdir: Path):
    out = workdir / "expand.csv"
    status = main(
        ["expand", "--input", str(DATA_DIR / "misner-horizon.json"), "--grid", "2", "--format", "csv", "--out", str(out)]
    )
    assert status == EXIT_OK
    table = pl.read_csv(out)
    # 8 points, 6 upper-triangular components each
    assert len(table) == 8 * 6
    assert table.filter((pl.col("row") == 0) & (pl.col("column") == 0))["q1"].to_list() == pytest.approx([-2.0] * 8)


# ============== Test def main: verify ==============
def test_verify_untagged_misner(capsys: pytest.CaptureFixture):
    status = main(["verify", "--spacetime", "misner", "--alpha", "1.0"])
    assert status == EXIT_OK
    report = read_report(capsys)
    assert report["values"]["n_failed"] == 0
    assert {c["entry"] for c in report["checks"]} == {"misner", "engine"}


def test_verify_tight_tolerance_fails(capsys: pytest.CaptureFixture):
    status = main(["verify", "--spacetime", "misner", "--alpha", "1.0", "--tol-finite-difference", "1e-30"])
    assert status == EXIT_FAILED
    failed = [c["check"] for c in read_report(capsys)["checks"] if not c["passed"]]
    assert failed == ["jet_finite_difference"]


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "--all", "--m", "2"],
        ["verify"],
        ["verify", "--spacetime", "misner", "--tol-vacuum", "0"],
        ["verify", "--spacetime", "misner", "--out", "/no/such/dir/report.json"],
    ],
)
def test_usage_errors(argv: list[str]):
    assert main(argv) == EXIT_USAGE


def test_argparse_errors_exit_with_usage():
    with pytest.raises(SystemExit) as e:
        main(["validate", "--spacetime", "reissner_nordstrom"])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["verify", "--spacetime", "misner", "--workers", "0"])
    assert e.value.code == EXIT_USAGE


def test_format_choices():
    args = build_parser().parse_args(["verify", "--all", "--format", "csv"])
    assert args.format == OutputFormat.csv
