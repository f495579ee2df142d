"""Run configuration: defaults, environment, key = value file, command-line overrides."""

import hashlib
import json
import os
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from .errors import ConfigError
from .interface import (
    Architecture,
    BilevelConfig,
    DirectionScale,
    FeatureSpec,
    LossKind,
    LossSpec,
    NoiseSpec,
    OptimizerKind,
    SplitSpec,
)
from .logger import get_logger

logger = get_logger(__name__)

NoiseModel = Literal["none", "uniform", "class_dependent", "instance_dependent"]

# Settings that do not change what a run computes.
UNHASHED_FIELDS = {"output_dir", "threads"}


def parse_matrix(text: str) -> list[list[float]]:
    """'0.8,0.2;0.3,0.7' -> [[0.8, 0.2], [0.3, 0.7]]."""
    return [[float(p) for p in row.split(",")] for row in text.split(";") if row.strip()]


class RunConfig(BaseModel):
    """Fully-resolved settings of one pipeline run.

    Without `train_path` the training pool is generated as Gaussian blobs; without
    `val_path` the validation split is carved from the training pool; without
    `test_path` a clean blobs test set is generated from the same distribution.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    output_dir: str

    # data
    train_path: str | None = None
    val_path: str | None = None
    test_path: str | None = None
    num_classes: int | None = Field(default=None, ge=1)
    feature_mode: Literal["identity", "hashed-ngram"] = "identity"
    feature_dim: int | None = Field(default=None, ge=1)
    ngram_order: int = Field(default=1, ge=1)
    blobs_per_class: int = Field(default=5000, ge=1)
    blobs_classes: int = Field(default=2, ge=1)
    blobs_dim: int = Field(default=2, ge=1)
    blobs_separation: float = Field(default=5.0, gt=0.0)
    test_per_class: int = Field(default=1000, ge=1)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)

    # noise
    noise_model: NoiseModel = "uniform"
    noise_eta: float = Field(default=0.3, ge=0.0, lt=1.0)
    noise_matrix: str | None = Field(default=None, validate_default=True)
    noise_eta_max: float = Field(default=0.5, ge=0.0, le=1.0)
    noise_tau: float = Field(default=1.0, gt=0.0)
    # false keeps validation labels as loaded (gold validation)
    val_noise: bool = True

    # bilevel
    outer_iterations: int = Field(default=50, ge=1)
    outer_step: float = Field(default=0.1, gt=0.0)
    outer_optimizer: OptimizerKind = "sgd"
    outer_loss: LossKind = "rce"
    rce_a: float = Field(default=-4.0, lt=0.0)
    inner_epochs_per_outer: int = Field(default=1, ge=1)
    inner_step: float = Field(default=0.1, gt=0.0)
    inner_batch_size: int = Field(default=64, ge=1)
    inner_optimizer: OptimizerKind = "sgd"
    warm_start_inner: bool = True
    arch: Architecture = "linear"
    hidden_width: int = Field(default=16, ge=1)

    # sampling, baselines, evaluation
    budget: int | None = Field(default=None, ge=1)
    compare_baselines: bool = True
    baseline_epochs: int = Field(default=5, ge=1)
    eval_epochs: int = Field(default=20, ge=1)
    run_surface: bool = True
    surface_steps: int = Field(default=10, ge=1)
    surface_directions: DirectionScale = "unit"
    run_curves: bool = True
    curve_epochs: int = Field(default=20, ge=1)
    self_bleu_sample: int = Field(default=1000, ge=1)

    seed: int = Field(default=0, ge=0)
    threads: int | None = Field(default=None, ge=1)

    @field_validator("train_path", "val_path", "test_path")
    @classmethod
    def _file_exists(cls, path: str | None) -> str | None:
        if path is not None and not Path(path).is_file():
            raise ValueError(f"file does not exist: {path}")
        return path

    @field_validator("noise_matrix")
    @classmethod
    def _valid_matrix(cls, text: str | None, info: ValidationInfo) -> str | None:
        if text is None:
            if info.data.get("noise_model") == "class_dependent":
                raise ValueError("required when noise_model is class_dependent")
            return None
        try:
            NoiseSpec(kind="class_dependent", matrix=parse_matrix(text))
        except ValidationError as e:
            raise ValueError(e.errors()[0]["msg"]) from None
        return text

    def bilevel_config(self) -> BilevelConfig:
        return BilevelConfig(
            outer_iterations=self.outer_iterations,
            outer_step=self.outer_step,
            outer_optimizer=self.outer_optimizer,
            inner_epochs_per_outer=self.inner_epochs_per_outer,
            inner_step=self.inner_step,
            inner_batch_size=self.inner_batch_size,
            inner_optimizer=self.inner_optimizer,
            outer_loss=LossSpec(kind=self.outer_loss, a=self.rce_a),
            warm_start_inner=self.warm_start_inner,
            arch=self.arch,
            hidden_width=self.hidden_width,
            seed=self.seed,
        )

    def noise_spec(self) -> NoiseSpec | None:
        if self.noise_model == "none":
            return None
        return NoiseSpec(
            kind=self.noise_model,
            eta=self.noise_eta,
            matrix=None if self.noise_matrix is None else parse_matrix(self.noise_matrix),
            eta_max=self.noise_eta_max,
            tau=self.noise_tau,
            seed=self.seed,
        )

    def feature_spec(self, inferred_dim: int | None = None) -> FeatureSpec:
        dim = self.feature_dim or inferred_dim or 1024
        return FeatureSpec(mode=self.feature_mode, dim=dim, ngram_order=self.ngram_order)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(train_fraction=self.train_fraction, seed=self.seed)


def read_config_file(path: str | Path) -> dict[str, str]:
    """
    Parse a flat `key = value` file. Blank lines and `#` comments are ignored.

    Raises:
        ConfigError: On a line without '=' or a duplicated key
    """
    values: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {line_no}", "expected 'key = value'")
        if key in values:
            raise ConfigError(key, f"duplicate key (line {line_no})")
        values[key] = value.strip()
    return values


def _normalise(value: Any) -> Any:
    if isinstance(value, str) and value.lower() in {"", "none", "null"}:
        return None
    return value


def parse_config(
    path: str | Path | None = None, overrides: Mapping[str, Any] | None = None
) -> RunConfig:
    """
    Resolve a RunConfig from defaults < NOISECURATOR_SEED < config file < overrides.

    Args:
        path: Optional key = value config file
        overrides: Values from command-line flags; None entries are ignored

    Raises:
        ConfigError: Naming the offending key for unknown keys, type or range
            errors, missing required keys, and nonexistent referenced files
    """
    values: dict[str, Any] = {}

    # Override with environment variables if they exist
    if seed := os.environ.get("NOISECURATOR_SEED"):
        values["seed"] = seed

    if path is not None:
        if not Path(path).is_file():
            raise ConfigError("config", f"file does not exist: {path}")
        values.update({k: _normalise(v) for k, v in read_config_file(path).items()})

    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    try:
        config = RunConfig.model_validate(values)
    except ValidationError as e:
        error = e.errors()[0]
        key = ".".join(str(part) for part in error["loc"]) or "config"
        if error["type"] == "extra_forbidden":
            raise ConfigError(key, "unknown configuration key") from None
        if error["type"] == "missing":
            raise ConfigError(key, "required key is missing") from None
        raise ConfigError(key, error["msg"]) from None

    logger.debug(f"Resolved configuration: {config.model_dump()}")
    return config


def config_hash(config: RunConfig) -> str:
    """First 12 hex digits of SHA-256 over the canonical JSON of the result-affecting fields."""
    payload = config.model_dump(mode="json", exclude=UNHASHED_FIELDS)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
