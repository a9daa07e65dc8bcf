import typing as T
from pathlib import Path

from pydantic import BaseModel, field_validator, model_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)


def sanity_check_path(path: Path):
    path = path.resolve().absolute()
    if not path.exists():
        msg = f"Path {path} does not exist"
        raise ValueError(msg)


def sanity_check_path_parent(path: str | Path):
    if isinstance(path, str):
        _path: Path = Path(path)
    elif isinstance(path, Path):
        _path = path
    else:
        raise ValueError(f"`path` needs to be of type str or Path, got {type(path)}")
    _path = _path.resolve().absolute()
    if not _path.parent.exists():
        msg = f"Path {_path} does not exist"
        raise ValueError(msg)


class Tolerances(BaseModel):
    # initial data acceptance
    killing: float = 1e-9
    length: float = 1e-9
    # catalog oracles
    vacuum: float = 1e-8
    spacetime_killing: float = 1e-10
    horizon_null: float = 1e-12
    kappa: float = 1e-8
    # foliation
    parallel: float = 1e-8
    transversal: float = 1e-12
    null_drift: float = 1e-10
    induced: float = 1e-7
    gauge: float = 1e-6
    commutator: float = 1e-8
    killing_transport: float = 1e-8
    jacobi: float = 1e-6
    # expansion
    q1: float = 1e-7
    q1_kerr: float = 1e-5
    structural: float = 1e-12
    omega_lie: float = 1e-10
    kernel: float = 1e-10
    symmetrization: float = 1e-12
    rotation: float = 1e-9
    equivariance: float = 1e-8
    slope_low: float = 1.9
    slope_high: float = 2.1
    # engine
    finite_difference: float = 1e-6
    bianchi: float = 1e-10

    @model_validator(mode="after")
    def all_positive(self) -> T.Self:
        for name, value in self.model_dump().items():
            if not value > 0:
                raise ValueError(f"Tolerance {name} must be positive, got {value}")
        if not self.slope_low < self.slope_high:
            raise ValueError("slope_low must be below slope_high")
        return self


class Sampling(BaseModel):
    grid: int = 11
    theta_grid: int = 7
    vacuum_grid: int = 5
    kappa_grid: int = 5
    pole_margin: float = 0.05
    random_points: int = 50
    seed: int = 20240917

    @field_validator("grid", "theta_grid", "vacuum_grid", "kappa_grid", "random_points")
    @classmethod
    def at_least_one(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"Sample counts must be >= 1, got {value}")
        return value

    @field_validator("pole_margin")
    @classmethod
    def margin_nonnegative(cls, value: float) -> float:
        if value < 0:
            raise ValueError(f"pole_margin must be >= 0, got {value}")
        return value


class Foliation(BaseModel):
    h: float = 1e-3
    t_max: float = 1e-2
    steps: int = 40
    initial_step: float = 1e-3
    remainder_times: list[float] = [1e-2, 3e-3, 1e-3, 3e-4]
    m_max: int = 3

    @model_validator(mode="after")
    def check_ranges(self) -> T.Self:
        if self.h <= 0 or self.t_max <= 0 or self.initial_step <= 0:
            raise ValueError("h, t_max and initial_step must be positive")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not 1 <= self.m_max <= 3:
            raise ValueError(f"m_max must be in 1..3, got {self.m_max}")
        if any(t <= 0 for t in self.remainder_times):
            raise ValueError("remainder_times must be positive")
        return self


class Execution(BaseModel):
    workers: int = 1

    @field_validator("workers")
    @classmethod
    def positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"workers must be >= 1, got {value}")
        return value


class Logging(BaseModel):
    config_file: Path | None = None
    level: str = "INFO"

    @field_validator("config_file")
    @classmethod
    def path_valid(cls, path: Path | None) -> Path | None:
        if path is not None:
            sanity_check_path(Path(path))
        return path


class Settings(BaseSettings):
    # https://docs.pydantic.dev/latest/concepts/pydantic_settings/#other-settings-source
    tolerances: Tolerances = Tolerances()
    sampling: Sampling = Sampling()
    foliation: Foliation = Foliation()
    execution: Execution = Execution()
    logging: Logging = Logging()

    model_config = SettingsConfigDict(
        toml_file=[
            "./horizon-lab.toml",
        ],
        env_nested_delimiter="__",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: T.Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> T.Tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings, TomlConfigSettingsSource(settings_cls), env_settings)

    def get_logger_config_path(self) -> Path | None:
        if self.logging.config_file is None:
            return None
        return Path(self.logging.config_file).resolve().absolute()


def load_settings(config_file: Path | None = None, **overrides: T.Any) -> Settings:
    """Settings from an explicit TOML file instead of ./horizon-lab.toml."""
    if config_file is None:
        return Settings(**overrides)
    sanity_check_path(config_file)

    class FileSettings(Settings):
        model_config = SettingsConfigDict(toml_file=[str(config_file)], env_nested_delimiter="__")

    return FileSettings(**overrides)


DEFAULTS = Settings.model_construct(
    tolerances=Tolerances(),
    sampling=Sampling(),
    foliation=Foliation(),
    execution=Execution(),
    logging=Logging(),
)
