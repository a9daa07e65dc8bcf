"""Command-line front end: `horizon-lab {validate,induce,expand,verify}`.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage,
parse, parameter and input-file errors. Reports go to stdout or --out,
logs to stderr.
"""

import argparse
import logging
import sys
import typing as T
from enum import Enum
from pathlib import Path

import numpy as np
import polars as pl
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from library import fine_logging
from library.catalog import Branch, EntryName, SpacetimeSolution
from library.errors import (
    ExpressionSyntaxError,
    HorizonLabError,
    InputFileError,
    ParameterError,
    UnknownIdentifierError,
)
from library.expansion import q1, structural_residual, symmetrization_residual
from library.foliation import induce_numeric
from library.initial_data import (
    InitialDataSet,
    connection_one_form,
    load_initial_data,
    surface_gravity,
    validate,
)
from library.schemas import (
    CheckRecord,
    DeviationRow,
    ExpansionRow,
    OutputFormat,
    Report,
    convert_to_dataframe_checks,
    convert_to_dataframe_deviations,
    convert_to_dataframe_expansion,
)
from library.settings import Foliation, Sampling, Settings, Tolerances, load_settings, sanity_check_path_parent
from library.suite import EntrySelection, default_selections, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

_USAGE_ERRORS = (ExpressionSyntaxError, UnknownIdentifierError, InputFileError, ParameterError)
_CATALOG_PARAMS = ("m", "a", "l", "alpha")
# --tol-identity sets every foliation identity threshold at once
_IDENTITY_TOLERANCES = ("commutator", "killing_transport", "jacobi")


class Command(str, Enum):
    validate = "validate"
    induce = "induce"
    expand = "expand"
    verify = "verify"


class RunConfig(BaseModel):
    command: Command
    input: T.Optional[Path] = Field(default=None, title="Initial data file (JSON).")
    spacetime: T.Optional[EntryName] = None
    params: T.Dict[str, float] = Field(default_factory=dict, title="Catalog parameters given on the command line.")
    branch: T.Optional[Branch] = None
    all_entries: bool = False
    grid: T.Optional[int] = None
    theta_grid: T.Optional[int] = None
    t_max: T.Optional[float] = None
    h: T.Optional[float] = None
    steps: T.Optional[int] = None
    tolerances: T.Dict[str, float] = Field(default_factory=dict, title="Tolerance overrides.")
    out: T.Optional[Path] = None
    format: OutputFormat = OutputFormat.json
    config: T.Optional[Path] = None
    log_config: T.Optional[Path] = None
    workers: T.Optional[int] = None

    @field_validator("tolerances")
    @classmethod
    def tolerances_positive(cls, tolerances: T.Dict[str, float]) -> T.Dict[str, float]:
        unknown = set(tolerances) - set(Tolerances.model_fields)
        if unknown:
            raise ValueError(f"Unknown tolerances: {sorted(unknown)}")
        for name, value in tolerances.items():
            if not value > 0:
                raise ValueError(f"Tolerance {name} must be positive, got {value}")
        return tolerances

    @field_validator("out")
    @classmethod
    def out_parent_exists(cls, out: T.Optional[Path]) -> T.Optional[Path]:
        if out is not None:
            sanity_check_path_parent(out)
        return out

    @model_validator(mode="after")
    def selection_fits_command(self) -> T.Self:
        match self.command:
            case Command.validate | Command.expand:
                if (self.input is None) == (self.spacetime is None):
                    raise ValueError(f"{self.command.value} needs exactly one of --input or --spacetime")
            case Command.induce:
                if self.spacetime is None:
                    raise ValueError("induce needs --spacetime")
            case Command.verify:
                if self.all_entries == (self.spacetime is not None):
                    raise ValueError("verify needs exactly one of --all or --spacetime")
        if self.all_entries and (self.params or self.branch is not None):
            raise ValueError("--all runs the catalog defaults; drop the parameter flags")
        return self

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        params = {k: getattr(args, k) for k in _CATALOG_PARAMS if getattr(args, k) is not None}
        tolerances = {}
        identity = getattr(args, "tol_identity", None)
        if identity is not None:
            tolerances.update({name: identity for name in _IDENTITY_TOLERANCES})
        for name in Tolerances.model_fields:
            value = getattr(args, f"tol_{name}", None)
            if value is not None:
                tolerances[name] = value
        return cls(
            command=args.command,
            input=getattr(args, "input", None),
            spacetime=args.spacetime,
            params=params,
            branch=args.branch,
            all_entries=getattr(args, "all", False),
            grid=args.grid,
            theta_grid=args.theta_grid,
            t_max=args.t_max,
            h=args.h,
            steps=args.steps,
            tolerances=tolerances,
            out=args.out,
            format=args.format,
            config=args.config,
            log_config=args.log_config,
            workers=args.workers,
        )

    def settings(self) -> Settings:
        """Settings file values with the command-line overrides applied."""
        base = load_settings(self.config)
        sampling = {"grid": self.grid, "theta_grid": self.theta_grid}
        foliation = {"t_max": self.t_max, "h": self.h, "steps": self.steps}
        update = {
            "tolerances": Tolerances(**{**base.tolerances.model_dump(), **self.tolerances}),
            "sampling": Sampling(
                **{**base.sampling.model_dump(), **{k: v for k, v in sampling.items() if v is not None}}
            ),
            "foliation": Foliation(
                **{**base.foliation.model_dump(), **{k: v for k, v in foliation.items() if v is not None}}
            ),
        }
        if self.workers is not None:
            update["execution"] = base.execution.model_copy(update={"workers": self.workers})
        return base.model_copy(update=update)

    def selection(self) -> EntrySelection:
        assert self.spacetime is not None
        return EntrySelection(name=self.spacetime, params=self.params, branch=self.branch)


class Outcome(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: int
    report: Report
    table: pl.DataFrame


# ============== commands ==============


def _status(report: Report) -> int:
    return EXIT_OK if report.passed else EXIT_FAILED


def _build(config: RunConfig) -> SpacetimeSolution:
    return config.selection().build()


def _load_data(config: RunConfig) -> tuple[InitialDataSet, SpacetimeSolution | None]:
    if config.input is not None:
        return load_initial_data(config.input), None
    sol = _build(config)
    sol.require_horizon()
    assert sol.closed_form_data is not None
    return sol.closed_form_data, sol


def cmd_validate(config: RunConfig, settings: Settings) -> Outcome:
    data, _ = _load_data(config)
    tol = settings.tolerances
    points = data.chart.grid(settings.sampling.grid, settings.sampling.pole_margin)
    result = validate(data, points, tol)

    checks = [
        CheckRecord.from_residual(data.label, "killing", result.killing_residual, tol.killing),
        CheckRecord.from_residual(data.label, "length", result.length_residual, tol.length),
    ]
    if result.min_v_length <= 0.0:
        checks.append(CheckRecord.failure(data.label, "v_nonvanishing", tol.length, "V vanishes on the grid"))
    report = Report(command=Command.validate.value, checks=checks, values=result.model_dump())
    return Outcome(status=_status(report), report=report, table=convert_to_dataframe_checks(checks))


def cmd_induce(config: RunConfig, settings: Settings) -> Outcome:
    sol = _build(config)
    _, horizon_chart = sol.require_horizon()
    assert sol.closed_form_data is not None and sol.closed_form_omega is not None
    tol = settings.tolerances
    grid = sol.horizon_grid(settings.sampling.theta_grid, settings.sampling.pole_margin)
    induced = induce_numeric(sol, grid, tol.parallel)
    closed = sol.closed_form_data

    rows: list[DeviationRow] = []
    n = horizon_chart.dim
    for x in grid:
        point = x.tolist()
        numeric_sigma, closed_sigma = induced.sigma.value(x), closed.sigma.value(x)
        for a in range(n):
            for b in range(a, n):
                rows.append(
                    DeviationRow(
                        entry=sol.label,
                        point=point,
                        quantity=f"sigma[{a},{b}]",
                        closed_form=float(closed_sigma[a, b]),
                        numeric=float(numeric_sigma[a, b]),
                    )
                )
        numeric_omega, closed_omega = connection_one_form(induced, x), sol.closed_form_omega.values(x)
        numeric_v, closed_v = induced.V.values(x), closed.V.values(x)
        for a in range(n):
            for quantity, closed_value, numeric_value in (
                (f"omega[{a}]", closed_omega[a], numeric_omega[a]),
                (f"V[{a}]", closed_v[a], numeric_v[a]),
            ):
                rows.append(
                    DeviationRow(
                        entry=sol.label,
                        point=point,
                        quantity=quantity,
                        closed_form=float(closed_value),
                        numeric=float(numeric_value),
                    )
                )

    kappa = surface_gravity(induced, grid, tol.length)
    rows.append(
        DeviationRow(entry=sol.label, point=[], quantity="kappa", closed_form=sol.kappa_closed_form, numeric=kappa)
    )

    def worst(prefix: str) -> float:
        return max((r.deviation for r in rows if r.quantity.startswith(prefix)), default=0.0)

    checks = [
        CheckRecord.from_residual(sol.label, "induced_sigma", worst("sigma"), tol.induced),
        CheckRecord.from_residual(sol.label, "induced_omega", worst("omega"), tol.induced),
        CheckRecord.from_residual(sol.label, "induced_v", worst("V"), tol.induced),
        CheckRecord.from_residual(sol.label, "kappa", abs(kappa - sol.kappa_closed_form), tol.kappa),
    ]
    report = Report(
        command=Command.induce.value,
        checks=checks,
        values={
            "kappa_closed_form": sol.kappa_closed_form,
            "kappa_numeric": kappa,
            "rows": [r.model_dump() | {"deviation": r.deviation} for r in rows],
        },
    )
    return Outcome(status=_status(report), report=report, table=convert_to_dataframe_deviations(rows))


def cmd_expand(config: RunConfig, settings: Settings) -> Outcome:
    data, sol = _load_data(config)
    tol = settings.tolerances
    if sol is not None:
        kappa = sol.kappa_closed_form
        points = sol.horizon_grid(settings.sampling.theta_grid, settings.sampling.pole_margin)
    else:
        points = data.chart.grid(settings.sampling.grid, settings.sampling.pole_margin)
        kappa = surface_gravity(data, points, tol.length)
    assert kappa is not None

    rows, structural, symmetrization = [], [], []
    for x in points:
        result = q1(data, x, kappa)
        structural.append(structural_residual(result))
        symmetrization.append(symmetrization_residual(result))
        rows.append(ExpansionRow(entry=data.label, point=x.tolist(), kappa=kappa, q1=result.q1_components.tolist()))
    logger.info(f"Evaluated q1 of {data.label!r} at {len(rows)} points")

    checks = [
        CheckRecord.from_residual(data.label, "q1_structure", float(np.max(structural)), tol.structural),
        CheckRecord.from_residual(data.label, "q1_symmetrization", float(np.max(symmetrization)), tol.symmetrization),
    ]
    report = Report(
        command=Command.expand.value,
        checks=checks,
        values={"kappa": kappa, "rows": [r.model_dump() for r in rows]},
    )
    return Outcome(status=_status(report), report=report, table=convert_to_dataframe_expansion(rows))


def cmd_verify(config: RunConfig, settings: Settings) -> Outcome:
    selections = default_selections() if config.all_entries else [config.selection()]
    checks = run_suite(selections, settings)
    failed = [c for c in checks if not c.passed]
    report = Report(
        command=Command.verify.value,
        checks=checks,
        values={
            "entries": [s.model_dump(mode="json") for s in selections],
            "n_checks": len(checks),
            "n_failed": len(failed),
        },
    )
    if failed:
        logger.warning(f"{len(failed)} of {len(checks)} checks failed")
    else:
        logger.info(f"All {len(checks)} checks passed")
    return Outcome(status=_status(report), report=report, table=convert_to_dataframe_checks(checks))


COMMANDS: dict[Command, T.Callable[[RunConfig, Settings], Outcome]] = {
    Command.validate: cmd_validate,
    Command.induce: cmd_induce,
    Command.expand: cmd_expand,
    Command.verify: cmd_verify,
}


# ============== parser and entry point ==============


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_common(parser: argparse.ArgumentParser) -> None:
    selection = parser.add_argument_group("catalog selection")
    selection.add_argument("--spacetime", type=EntryName, choices=list(EntryName), default=None)
    for name in _CATALOG_PARAMS:
        selection.add_argument(f"--{name}", type=float, default=None, help=f"catalog parameter {name}")
    selection.add_argument("--branch", type=Branch, choices=list(Branch), default=None)

    sampling = parser.add_argument_group("sampling")
    sampling.add_argument("--grid", type=_positive_int, default=None, help="points per axis for data grids")
    sampling.add_argument("--theta-grid", type=_positive_int, default=None, help="points along the horizon grid axis")
    sampling.add_argument("--t-max", type=float, default=None, help="integration range of the null geodesics")
    sampling.add_argument("--h", type=float, default=None, help="differencing step in t")
    sampling.add_argument("--steps", type=_positive_int, default=None, help="integration steps up to t-max")

    tolerances = parser.add_argument_group("tolerance overrides")
    for name in Tolerances.model_fields:
        tolerances.add_argument(f"--tol-{name.replace('_', '-')}", dest=f"tol_{name}", type=float, default=None)
    tolerances.add_argument("--tol-identity", type=float, default=None, help="all foliation identity thresholds")

    output = parser.add_argument_group("output")
    output.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")
    output.add_argument("--format", type=OutputFormat, choices=list(OutputFormat), default=OutputFormat.json)
    output.add_argument("--config", type=Path, default=None, help="TOML settings file")
    output.add_argument("--log-config", type=Path, default=None, help="logging dictConfig JSON")
    output.add_argument("--workers", type=_positive_int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="horizon-lab", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    validate_cmd = commands.add_parser(Command.validate.value, help="check (σ, V) against the horizon data constraints")
    validate_cmd.add_argument("--input", type=Path, default=None)
    induce_cmd = commands.add_parser(Command.induce.value, help="induce (σ, V) from a catalog spacetime")
    expand_cmd = commands.add_parser(Command.expand.value, help="first-order expansion q1 on a grid")
    expand_cmd.add_argument("--input", type=Path, default=None)
    verify_cmd = commands.add_parser(Command.verify.value, help="run the acceptance suite")
    verify_cmd.add_argument("--all", action="store_true", help="every catalog entry with default parameters")

    for sub in (validate_cmd, induce_cmd, expand_cmd, verify_cmd):
        _add_common(sub)
    return parser


def write_output(outcome: Outcome, fmt: OutputFormat, out: Path | None) -> None:
    if fmt == OutputFormat.json:
        text = outcome.report.to_json() + "\n"
    else:
        text = outcome.table.write_csv()
    if out is None:
        sys.stdout.write(text)
        return
    out.write_text(text)
    logger.info(f"Wrote {fmt.value} report to {out}")


def main(argv: T.Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    fine_logging.setup_logging(args.log_config)

    try:
        config = RunConfig.from_args(args)
        settings = config.settings()
    except (ValidationError, ValueError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE

    if config.log_config is None and settings.get_logger_config_path() is not None:
        fine_logging.setup_logging(settings.get_logger_config_path(), settings.logging.level)
    logger.info(f"Running {config.command.value}")

    try:
        outcome = COMMANDS[config.command](config, settings)
    except _USAGE_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    except HorizonLabError as e:
        logger.error(f"{config.command.value} failed: {type(e).__name__}: {e}")
        entry = config.spacetime.value if config.spacetime is not None else str(config.input)
        report = Report(
            command=config.command.value,
            checks=[CheckRecord.failure(entry, config.command.value, 0.0, str(e))],
        )
        outcome = Outcome(status=EXIT_FAILED, report=report, table=convert_to_dataframe_checks(report.checks))

    write_output(outcome, config.format, config.out)
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
