"""Versioned JSON run report."""

import json
from typing import Any, Final, Literal

from pydantic import BaseModel, ConfigDict

from .evaluation import (
    CurvePoint,
    DenoiserComparison,
    DiversityReport,
    LossHistograms,
    SurfaceProbe,
)
from .interface import TraceRecord

SCHEMA_VERSION: Final = 1


class ArtifactRef(BaseModel):
    name: str
    location: str
    sha256: str


class RunReport(BaseModel):
    """Everything a run produced, in one document consumed by external plotting."""

    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    config: dict[str, Any]
    config_hash: str
    trace: list[TraceRecord] = []
    weight_histogram: list[int] = []
    auroc: dict[str, float] = {}
    accuracies: dict[str, float] = {}
    subset_sizes: dict[str, int] = {}
    noisy_fraction: float | None = None
    surface: SurfaceProbe | None = None
    flat_fractions: dict[str, float] = {}
    cross_loss_curves: dict[str, list[CurvePoint]] = {}
    loss_histograms: LossHistograms | None = None
    comparison: DenoiserComparison | None = None
    diversity: DiversityReport | None = None
    artifacts: list[ArtifactRef] = []


def emit_report(report: RunReport) -> str:
    """Serialise with sorted keys; identical reports give identical text."""
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def load_report(text: str) -> RunReport:
    return RunReport.model_validate_json(text)


def report_schema() -> str:
    """JSON schema of `RunReport`."""
    return json.dumps(RunReport.model_json_schema(), indent=2, sort_keys=True) + "\n"
