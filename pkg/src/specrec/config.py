"""Configuration management for specrec."""

import json
import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from rich.logging import RichHandler

from .channel import MatrixFamily, MatrixType, family_params
from .errors import ConfigurationError
from .hetero import HeteroEnvironment, hetero_mras_config
from .mdp import TransitionFormula, ZeroStateSemantics
from .mras import MrasConfig
from .qlearn import QConfig
from .simulator import ContentionMode

DEFAULT_EPSILONS = [1.0, 2.0, 4.0, 6.0, 8.0, 10.0]


def _default_threads() -> int:
    env = os.getenv("SPECREC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"SPECREC_THREADS={env!r} is not an integer") from None
    return max(1, os.cpu_count() or 1)


class Config(BaseModel):
    """Runtime settings for specrec."""

    # Results ledger; disabled when None
    database_url: str | None = Field(default=None)

    # Job pool
    threads: int = Field(default_factory=_default_threads, ge=1)

    # Logging settings
    log_level: str = Field(default="INFO")
    log_file: Path | None = Field(default=None)

    @field_validator("log_level")
    @classmethod
    def validate_level(cls, v: str) -> str:
        level = v.upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"unknown log level {v!r}")
        return level

    def to_dict(self) -> dict[str, Any]:
        """Convert configuration to dictionary."""
        return self.model_dump()


class Campaign(str, Enum):
    SOLVE_MDP = "solve-mdp"
    TRAIN_Q = "train-q"
    SIMULATE = "simulate"
    SWEEP = "sweep"
    HETERO = "hetero"
    VALIDATE = "validate"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


# Schemes understood by the homogeneous campaigns
SWEEP_SCHEMES = ["random", "static", "heuristic", "mras", "qlearn"]
# Schemes understood by the heterogeneous campaign
HETERO_SCHEMES = ["static-best", "mras-homogeneous", "mras-hetero"]


class ExperimentConfig(BaseModel):
    """One experiment campaign: model, grid, seeds and output."""

    campaign: Campaign = Campaign.SWEEP

    # Model
    m_channels: int = Field(default=10, ge=1)
    n_users: int = Field(default=5, ge=1)
    rate_b: float = Field(default=1.0, gt=0.0)
    zero_state: ZeroStateSemantics = ZeroStateSemantics.IDLE_BRANCH
    formula: TransitionFormula = TransitionFormula.EXACT

    # Grid
    families: list[MatrixType] = Field(default_factory=lambda: [MatrixType.TYPE2], min_length=1)
    epsilons: list[float] = Field(default_factory=lambda: list(DEFAULT_EPSILONS), min_length=1)
    schemes: list[str] = Field(default_factory=lambda: list(SWEEP_SCHEMES), min_length=1)
    seeds: list[int] = Field(default_factory=lambda: [0])
    static_p_rec: float = Field(default=0.7, gt=0.0, lt=1.0)

    # Simulator
    horizon: int = Field(default=2000, ge=1)
    buffer_w: int = Field(default=1, ge=1)
    contention: ContentionMode = ContentionMode.IDEALIZED
    backoff_slots: int = Field(default=16, ge=1)

    # Solvers
    mras: MrasConfig = Field(default_factory=MrasConfig)
    qlearn: QConfig = Field(default_factory=QConfig)
    dp_grid_step: float = Field(default=0.01, gt=0.0, lt=1.0)

    # Heterogeneous campaign
    hetero_environments: list[HeteroEnvironment] = Field(
        default_factory=lambda: [HeteroEnvironment.MIXED_FIRST, HeteroEnvironment.MIXED_SECOND]
    )
    hetero_horizon: int = Field(default=20_000, ge=1)
    hetero_search_horizon: int = Field(default=2_000, ge=1)
    hetero_replications: int = Field(default=10, ge=1)
    hetero_mras: MrasConfig = Field(default_factory=hetero_mras_config)

    # Validation suite
    validation_configs: int = Field(default=20, ge=1)
    validation_samples: int = Field(default=10**6, ge=100)
    validation_slots: int = Field(default=10**5, ge=100)

    # Output
    output: Path = Field(default_factory=lambda: Path("results") / "results.csv")
    format: OutputFormat = OutputFormat.CSV

    @model_validator(mode="before")
    @classmethod
    def default_schemes(cls, data: Any) -> Any:
        """Hetero campaigns default to the hetero scheme list."""
        if isinstance(data, dict) and "schemes" not in data:
            if str(getattr(data.get("campaign"), "value", data.get("campaign"))) == Campaign.HETERO.value:
                data = {**data, "schemes": list(HETERO_SCHEMES)}
        return data

    @field_validator("hetero_mras", mode="before")
    @classmethod
    def hetero_search_defaults(cls, v: Any) -> Any:
        """Partial hetero search settings fill in from the hetero defaults."""
        if isinstance(v, dict):
            return hetero_mras_config(**v)
        return v

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("seeds must not be empty")
        return v

    @field_validator("epsilons")
    @classmethod
    def validate_epsilons(cls, v: list[float]) -> list[float]:
        for eps in v:
            if eps <= 0:
                raise ValueError(f"epsilon {eps} must be positive")
        return v

    @model_validator(mode="after")
    def validate_grid(self) -> "ExperimentConfig":
        families = set(self.families)
        if self.campaign == Campaign.HETERO and any(
            env in (HeteroEnvironment.MIXED_FIRST, HeteroEnvironment.MIXED_SECOND)
            for env in self.hetero_environments
        ):
            families |= {MatrixType.TYPE1, MatrixType.TYPE2}
        for family in families:
            for eps in self.epsilons:
                try:
                    family_params(MatrixFamily(family=family, epsilon=eps))
                except ConfigurationError as e:
                    raise ValueError(f"epsilons: {e}") from None
        allowed = HETERO_SCHEMES if self.campaign == Campaign.HETERO else SWEEP_SCHEMES
        unknown = [s for s in self.schemes if s not in allowed]
        if unknown and self.campaign not in (Campaign.VALIDATE, Campaign.SOLVE_MDP, Campaign.TRAIN_Q):
            raise ValueError(f"schemes: unknown scheme(s) {unknown} for campaign "
                             f"{self.campaign.value} (allowed: {allowed})")
        return self

    @staticmethod
    def _read(path: Path) -> dict[str, Any]:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read experiment config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"experiment config {path} must hold a JSON object")
        return data

    @classmethod
    def load(cls, path: Path) -> "ExperimentConfig":
        """Load an experiment from a JSON file."""
        return cls(**cls._read(path))

    @classmethod
    def for_campaign(cls, campaign: Campaign, path: Path | None = None) -> "ExperimentConfig":
        """Experiment for ``campaign``, read from ``path`` when given; the file's own campaign is ignored."""
        data = cls._read(path) if path is not None else {}
        data["campaign"] = campaign
        return cls(**data)

    def with_overrides(self, **flags: Any) -> "ExperimentConfig":
        """Apply command-line overrides; None values are ignored."""
        updates = {k: v for k, v in flags.items() if v is not None and v != ()}
        data = self.model_dump()
        data.update(updates)
        return type(self)(**data)

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


def describe_validation_error(error: ValidationError) -> str:
    """One line per failing field."""
    lines = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"]) or "config"
        lines.append(f"{where}: {item['msg']}")
    return "\n".join(lines)


def configure_logging(level: str = "INFO", log_file: Path | None = None) -> logging.Logger:
    """Attach a rich console handler (and optional file handler) to the package logger."""
    logger = logging.getLogger("specrec")
    logger.setLevel(level.upper())
    logger.handlers.clear()
    logger.addHandler(RichHandler(rich_tracebacks=True, show_path=False))
    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(log_file, encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
        logger.addHandler(handler)
    logger.propagate = False
    return logger
