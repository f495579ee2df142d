"""Common interfaces and data models for the noise curation pipeline."""

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .logger import get_logger

logger = get_logger(__name__)

LossKind = Literal["ce", "rce", "mae"]
OptimizerKind = Literal["sgd", "adam"]
Architecture = Literal["linear", "hidden"]
NoiseKind = Literal["uniform", "class_dependent", "instance_dependent"]
DirectionScale = Literal["unit", "center"]


class ExampleRecord(BaseModel):
    """One JSONL line of an on-disk dataset."""

    model_config = ConfigDict(extra="forbid")

    id: str
    label: int = Field(ge=0)
    features: list[float] | None = None
    text: str | None = None
    clean: bool | None = None

    @model_validator(mode="after")
    def _one_payload(self) -> "ExampleRecord":
        if (self.features is None) == (self.text is None):
            raise ValueError("record needs exactly one of 'features' or 'text'")
        return self


class SplitSpec(BaseModel):
    """How to partition a pool into training and validation sets."""

    model_config = ConfigDict(frozen=True)

    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0)


class FeatureSpec(BaseModel):
    """Featurization of a dataset into dense vectors."""

    model_config = ConfigDict(frozen=True)

    mode: Literal["identity", "hashed-ngram"] = "identity"
    dim: int = Field(default=1024, gt=0)
    ngram_order: int = Field(default=1, ge=1)


class LossSpec(BaseModel):
    """Loss selector; `rce` and `mae` are the symmetric (noise-robust) kinds.

    `a` approximates log(0) inside the reversed cross-entropy.
    """

    model_config = ConfigDict(frozen=True)

    kind: LossKind = "rce"
    a: float = Field(default=-4.0, lt=0.0)

    @property
    def is_robust(self) -> bool:
        return self.kind != "ce"


class BilevelConfig(BaseModel):
    """Hyperparameters of the reweighting loop (outer) and weighted training (inner)."""

    model_config = ConfigDict(frozen=True)

    outer_iterations: int = Field(default=50, ge=1)
    outer_step: float = Field(default=0.1, gt=0.0)
    outer_optimizer: OptimizerKind = "sgd"
    inner_epochs_per_outer: int = Field(default=1, ge=1)
    inner_step: float = Field(default=0.1, gt=0.0)
    inner_batch_size: int = Field(default=64, ge=1)
    inner_optimizer: OptimizerKind = "sgd"
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    outer_loss: LossSpec = LossSpec()
    warm_start_inner: bool = True
    arch: Architecture = "linear"
    hidden_width: int = Field(default=16, ge=1)
    seed: int = Field(default=0, ge=0)


class NoiseSpec(BaseModel):
    """Label-corruption model.

    uniform: flip with probability `eta` to one of the other K-1 classes.
    class_dependent: row-stochastic `matrix[i][j]` = P(noisy=j | clean=i).
    instance_dependent: flip probability eta_max * exp(-margin(x) / tau), where the
    margin is the distance to an oracle linear separator fit on the clean labels.
    """

    model_config = ConfigDict(frozen=True)

    kind: NoiseKind = "uniform"
    eta: float = Field(default=0.0, ge=0.0, lt=1.0)
    matrix: list[list[float]] | None = None
    eta_max: float = Field(default=0.0, ge=0.0, le=1.0)
    tau: float = Field(default=1.0, gt=0.0)
    seed: int = Field(default=0, ge=0)

    @field_validator("matrix")
    @classmethod
    def _row_stochastic(cls, matrix: list[list[float]] | None) -> list[list[float]] | None:
        if matrix is None:
            return None
        size = len(matrix)
        for i, row in enumerate(matrix):
            if len(row) != size:
                raise ValueError(f"noise matrix must be square, row {i} has {len(row)} entries")
            if any(p < 0.0 for p in row):
                raise ValueError(f"noise matrix row {i} has negative entries")
            if abs(sum(row) - 1.0) > 1e-9:
                raise ValueError(f"noise matrix row {i} sums to {sum(row)}, expected 1")
        return matrix

    @model_validator(mode="after")
    def _matrix_for_class_noise(self) -> "NoiseSpec":
        if self.kind == "class_dependent":
            if self.matrix is None:
                raise ValueError("class_dependent noise requires 'matrix'")
            for i, row in enumerate(self.matrix):
                keep = row[i]
                if any(p >= keep for j, p in enumerate(row) if j != i):
                    logger.warning(
                        f"noise matrix row {i}: an off-diagonal rate reaches the keep rate "
                        f"{keep:.3f}; robust losses are not guaranteed noise-tolerant"
                    )
        return self


class SubsetBudget(BaseModel):
    """Expected size D of a sampled clean subset."""

    model_config = ConfigDict(frozen=True)

    size: int = Field(ge=1)


class TraceRecord(BaseModel):
    """Diagnostics of one completed outer iteration."""

    iteration: int
    outer_loss: float
    inner_loss: float
    mean_weight: float
    min_weight: float
    max_weight: float
    mean_meta_gradient: float
    outer_step_size: float
    histogram: list[int]


class BilevelTrace(BaseModel):
    """One record per completed outer iteration."""

    records: list[TraceRecord] = []


@dataclass(frozen=True, eq=False)
class SampleWeights:
    """Per-example weights in [0, 1], aligned by index with a training dataset."""

    values: npt.NDArray[np.float64]
    iteration: int = 0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError(f"weights must be a vector, got shape {values.shape}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    @classmethod
    def constant(cls, n: int, value: float = 0.5) -> "SampleWeights":
        return cls(np.full(n, value))


SampleWeightsLike = SampleWeights | npt.NDArray[np.float64] | Sequence[float]


class FilterReport(BaseModel):
    """Outcome of a baseline denoiser."""

    method: str
    kept: list[int]
    scores: list[float]

    def ranking(self) -> npt.NDArray[np.float64]:
        """Per-example scores as an array; higher means more likely clean."""
        return np.asarray(self.scores, dtype=np.float64)
